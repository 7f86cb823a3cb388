//! Semi-automatic labelling of detector output for fine-tuning corpora.
//!
//! High-scoring interactions are accepted as they are. Everything else is
//! checked against hand keypoints: a confident hand point on (or near) the
//! object confirms the interaction, no hand point even at a lowered
//! confidence refutes it. Duplicate human detections are collapsed by IoU
//! clustering, and humans missed by the interaction detector can be
//! recovered from an auxiliary person detector.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mapping::{assign_equipment, iou, select_best_hoi, InteractionLabel, VerbMapping};
use crate::session_io::SessionError;
use crate::types::{BoundingBox, DetectionRecord, EquipmentRegion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelAssistConfig {
    pub hi_score: f64,
    pub iou_cluster: f64,
    pub iou_dup: f64,
    pub margin_px: f64,
    pub conf_min: f64,
    /// Lowered keypoint confidence used before declaring "no interaction".
    pub refute_conf_min: f64,
    /// Rows drawn for manual review.
    pub review_sample: usize,
    /// Labels whose score is this close to `hi_score` are review candidates.
    pub review_margin: f64,
    pub review_seed: u64,
}

impl Default for LabelAssistConfig {
    fn default() -> Self {
        Self {
            hi_score: 0.8,
            iou_cluster: 0.7,
            iou_dup: 0.5,
            margin_px: 10.0,
            conf_min: 0.5,
            refute_conf_min: 0.3,
            review_sample: 5,
            review_margin: 0.05,
            review_seed: 0,
        }
    }
}

impl LabelAssistConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.hi_score) {
            return Err(("hi_score", format!("must be in (0, 1), got {}", self.hi_score)));
        }
        if !open_unit(self.iou_cluster) {
            return Err(("iou_cluster", format!("must be in (0, 1), got {}", self.iou_cluster)));
        }
        if !(self.iou_dup > 0.0 && self.iou_dup <= 1.0) {
            return Err(("iou_dup", format!("must be in (0, 1], got {}", self.iou_dup)));
        }
        if !(self.margin_px.is_finite() && self.margin_px >= 0.0) {
            return Err(("margin_px", "must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.conf_min) {
            return Err(("conf_min", "must be in [0, 1]".into()));
        }
        if !(0.0..=self.conf_min).contains(&self.refute_conf_min) {
            return Err(("refute_conf_min", "must be in [0, conf_min]".into()));
        }
        if !(self.review_margin.is_finite() && self.review_margin >= 0.0) {
            return Err(("review_margin", "must be >= 0".into()));
        }
        Ok(())
    }
}

/// Hand keypoints detected in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonFrame {
    pub frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_hint: Option<String>,
    /// `[x, y, confidence]` triples in pixels.
    pub hand_points: Vec<[f64; 3]>,
}

pub fn parse_skeletons(reader: impl Read, path: &Path) -> Result<Vec<SkeletonFrame>, SessionError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| SessionError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sk: SkeletonFrame = serde_json::from_str(&line).map_err(|e| SessionError::Parse {
            path: path.display().to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        for p in &sk.hand_points {
            let bad = if !(p[0].is_finite() && p[1].is_finite()) {
                Some("coordinates must be finite")
            } else if !(0.0..=1.0).contains(&p[2]) {
                Some("confidence must be in [0, 1]")
            } else {
                None
            };
            if let Some(m) = bad {
                return Err(SessionError::Validation {
                    path: path.display().to_string(),
                    line: lineno,
                    field: "hand_points".into(),
                    message: m.into(),
                });
            }
        }
        out.push(sk);
    }
    Ok(out)
}

/// Groups `n` items into connected components of `linked` and returns one
/// representative index per component, chosen by `prefer` (a strict
/// "better than" order), in ascending index order.
fn cluster_representatives(n: usize, linked: impl Fn(usize, usize) -> bool, prefer: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if linked(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        best.entry(root)
            .and_modify(|cur| {
                if prefer(i, *cur) {
                    *cur = i;
                }
            })
            .or_insert(i);
    }
    let mut reps: Vec<usize> = best.into_values().collect();
    reps.sort_unstable();
    reps
}

/// Clustering NMS: boxes linked by IoU >= `iou_cluster` (transitively) form
/// one cluster, which keeps its most confident box (then smaller area, then
/// earlier input). Returns indices of kept boxes in input order.
pub fn cluster_dedup(humans: &[(BoundingBox, f64)], iou_cluster: f64) -> Vec<usize> {
    cluster_representatives(
        humans.len(),
        |i, j| iou(&humans[i].0, &humans[j].0) >= iou_cluster,
        |i, j| {
            let (a, b) = (&humans[i], &humans[j]);
            a.1 > b.1 || (a.1 == b.1 && (a.0.area() < b.0.area() || (a.0.area() == b.0.area() && i < j)))
        },
    )
}

/// Drops duplicate human-object pairs within each frame: two records are
/// duplicates when both their human boxes and object boxes overlap with IoU
/// >= `iou_cluster`. Returns indices of the kept records, ascending.
pub fn dedup_record_indices(records: &[DetectionRecord], iou_cluster: f64) -> Vec<usize> {
    let mut by_frame: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_frame.entry(r.frame).or_default().push(i);
    }
    let mut keep = Vec::with_capacity(records.len());
    for idx in by_frame.values() {
        let reps = cluster_representatives(
            idx.len(),
            |a, b| {
                let (ra, rb) = (&records[idx[a]], &records[idx[b]]);
                iou(&ra.human_box, &rb.human_box) >= iou_cluster && iou(&ra.object_box, &rb.object_box) >= iou_cluster
            },
            |a, b| {
                let (ra, rb) = (&records[idx[a]], &records[idx[b]]);
                ra.human_conf > rb.human_conf
                    || (ra.human_conf == rb.human_conf && ra.human_box.area() < rb.human_box.area())
            },
        );
        keep.extend(reps.into_iter().map(|r| idx[r]));
    }
    keep.sort_unstable();
    keep
}

/// The records kept by [`dedup_record_indices`], in input order.
pub fn dedup_records(records: &[DetectionRecord], iou_cluster: f64) -> Vec<DetectionRecord> {
    dedup_record_indices(records, iou_cluster)
        .into_iter()
        .map(|i| records[i].clone())
        .collect()
}

/// True iff a hand point with confidence >= `conf_min` lies in the object
/// box grown by `margin_px` on every side.
pub fn skeleton_verify(sk: &SkeletonFrame, object_box: &BoundingBox, margin_px: f64, conf_min: f64) -> bool {
    let zone = object_box.expand(margin_px);
    sk.hand_points.iter().any(|p| p[2] >= conf_min && zone.contains(p[0], p[1]))
}

/// Primary boxes plus each auxiliary box that overlaps every primary box
/// with IoU below `iou_dup`.
pub fn merge_aux_humans(primary: &[BoundingBox], aux: &[BoundingBox], iou_dup: f64) -> Vec<BoundingBox> {
    let mut out = primary.to_vec();
    out.extend(aux.iter().filter(|a| primary.iter().all(|p| iou(a, p) < iou_dup)).copied());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    HighConfidence,
    SkeletonConfirmed,
    SkeletonRefuted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFrameRecord {
    pub frame: u64,
    pub equipment_id: String,
    pub label: InteractionLabel,
    pub provenance: Provenance,
    pub score: f64,
    /// Index of the source detection record.
    pub source: usize,
    pub trainee_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningReason {
    /// Object box matched no equipment region.
    Unmapped,
    /// No verb of the mapping present.
    NoRelevantVerb,
    /// Low-score record without hand keypoints for its frame.
    MissingSkeleton,
    /// Hand overlap only at the lowered confidence: neither confirmed nor refuted.
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelWarning {
    pub frame: u64,
    pub source: usize,
    pub reason: WarningReason,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Label(LabeledFrameRecord),
    Warning(LabelWarning),
}

impl Outcome {
    pub fn frame(&self) -> u64 {
        match self {
            Outcome::Label(l) => l.frame,
            Outcome::Warning(w) => w.frame,
        }
    }
}

/// Labels each record or emits one warning for it. Output is ordered by
/// frame, then input order.
pub fn partition_labels(
    records: &[DetectionRecord],
    skeletons: &[SkeletonFrame],
    regions: &[EquipmentRegion],
    mapping: &VerbMapping,
    iou_min: f64,
    cfg: &LabelAssistConfig,
) -> Vec<Outcome> {
    let mut sk_by_frame: BTreeMap<u64, Vec<&SkeletonFrame>> = BTreeMap::new();
    for s in skeletons {
        sk_by_frame.entry(s.frame).or_default().push(s);
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| records[i].frame);

    order
        .into_iter()
        .map(|i| {
            let d = &records[i];
            let warn = |reason| {
                Outcome::Warning(LabelWarning {
                    frame: d.frame,
                    source: i,
                    reason,
                })
            };
            let Some((region, _)) = assign_equipment(d, regions, iou_min) else {
                return warn(WarningReason::Unmapped);
            };
            let Some((label, score)) = select_best_hoi(d, mapping) else {
                return warn(WarningReason::NoRelevantVerb);
            };
            let labeled = |label, provenance| {
                Outcome::Label(LabeledFrameRecord {
                    frame: d.frame,
                    equipment_id: region.equipment_id.clone(),
                    label,
                    provenance,
                    score,
                    source: i,
                    trainee_id: d.trainee_id.clone(),
                })
            };
            if label == InteractionLabel::ValidInteraction && score >= cfg.hi_score {
                return labeled(InteractionLabel::ValidInteraction, Provenance::HighConfidence);
            }
            let in_frame = sk_by_frame.get(&d.frame).map(Vec::as_slice).unwrap_or(&[]);
            if in_frame.is_empty() {
                return warn(WarningReason::MissingSkeleton);
            }
            let matching: Vec<&SkeletonFrame> = match &d.trainee_id {
                Some(t) if in_frame.iter().any(|s| s.trainee_hint.as_ref() == Some(t)) => in_frame
                    .iter()
                    .copied()
                    .filter(|s| s.trainee_hint.as_ref() == Some(t))
                    .collect(),
                _ => in_frame.to_vec(),
            };
            let verified = |conf| matching.iter().any(|s| skeleton_verify(s, &d.object_box, cfg.margin_px, conf));
            if verified(cfg.conf_min) {
                labeled(InteractionLabel::ValidInteraction, Provenance::SkeletonConfirmed)
            } else if !verified(cfg.refute_conf_min) {
                labeled(InteractionLabel::NoInteraction, Provenance::SkeletonRefuted)
            } else {
                warn(WarningReason::Ambiguous)
            }
        })
        .collect()
}

/// Seeded draw of up to `cfg.review_sample` outcomes for manual checking,
/// taken from warnings and labels scored within `review_margin` of
/// `hi_score`. Returns positions into `outcomes`, ascending.
pub fn sample_for_review(outcomes: &[Outcome], cfg: &LabelAssistConfig) -> Vec<usize> {
    let candidates: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter(|(_, o)| match o {
            Outcome::Warning(_) => true,
            Outcome::Label(l) => (l.score - cfg.hi_score).abs() <= cfg.review_margin,
        })
        .map(|(i, _)| i)
        .collect();
    let n = cfg.review_sample.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.review_seed);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), n)
        .into_iter()
        .map(|k| candidates[k])
        .collect();
    picked.sort_unstable();
    picked
}

#[derive(Serialize)]
struct LabelRow<'a> {
    frame: u64,
    equipment_id: &'a str,
    label: &'a str,
    provenance: Provenance,
    score: f64,
    source: usize,
    trainee_id: Option<&'a str>,
}

/// Labelled corpus as CSV with a provenance column.
pub fn labels_csv(outcomes: &[Outcome]) -> Vec<u8> {
    let rows: Vec<LabelRow> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Label(l) => Some(LabelRow {
                frame: l.frame,
                equipment_id: &l.equipment_id,
                label: l.label.as_str(),
                provenance: l.provenance,
                score: l.score,
                source: l.source,
                trainee_id: l.trainee_id.as_deref(),
            }),
            Outcome::Warning(_) => None,
        })
        .collect();
    crate::session_io::csv_bytes(
        &rows,
        &["frame", "equipment_id", "label", "provenance", "score", "source", "trainee_id"],
    )
}

pub fn warnings_csv(outcomes: &[Outcome]) -> Vec<u8> {
    let rows: Vec<&LabelWarning> = outcomes
        .iter()
        .filter_map(|o| match o {
            Outcome::Warning(w) => Some(w),
            Outcome::Label(_) => None,
        })
        .collect();
    crate::session_io::csv_bytes(&rows, &["frame", "source", "reason"])
}
