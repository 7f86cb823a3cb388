//! Detection records to per-equipment interaction score series.
//!
//! Each predicted object box is matched to the configured equipment region it
//! overlaps most (by IoU), whatever class the detector gave it. The verb
//! distribution is then reduced to a single labelled HOI score,
//! `object_conf * verb_prob`, maximised over the verbs the [`VerbMapping`]
//! knows about. Only `valid_interaction` scores feed the series.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::types::{BoundingBox, DetectionRecord, EquipmentRegion, Fps, SessionBundle, SessionMeta};

pub const DEFAULT_IOU_MIN: f64 = 0.5;

/// Intersection over union of two boxes. Zero when the union has no area.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionLabel {
    ValidInteraction,
    NoInteraction,
}

impl InteractionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ValidInteraction => "valid_interaction",
            Self::NoInteraction => "no_interaction",
        }
    }
}

/// Which detector verbs count as interaction and which as its absence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerbMapping {
    pub valid_verbs: BTreeSet<String>,
    pub none_verbs: BTreeSet<String>,
}

impl Default for VerbMapping {
    fn default() -> Self {
        Self {
            valid_verbs: ["hold", "carry"].into_iter().map(String::from).collect(),
            none_verbs: ["watch", "no_interaction"].into_iter().map(String::from).collect(),
        }
    }
}

impl VerbMapping {
    pub fn validate(&self) -> Result<(), String> {
        if self.valid_verbs.is_empty() {
            return Err("valid_verbs must be nonempty".into());
        }
        if self.none_verbs.is_empty() {
            return Err("none_verbs must be nonempty".into());
        }
        if let Some(v) = self.valid_verbs.intersection(&self.none_verbs).next() {
            return Err(format!("verb {v:?} is in both valid_verbs and none_verbs"));
        }
        Ok(())
    }

    pub fn label_of(&self, verb: &str) -> Option<InteractionLabel> {
        if self.valid_verbs.contains(verb) {
            Some(InteractionLabel::ValidInteraction)
        } else if self.none_verbs.contains(verb) {
            Some(InteractionLabel::NoInteraction)
        } else {
            None
        }
    }
}

/// Region whose box has the largest IoU with the object box, if that IoU
/// reaches `iou_min`. Ties go to the lexicographically smallest id.
pub fn assign_equipment<'r>(
    d: &DetectionRecord,
    regions: &'r [EquipmentRegion],
    iou_min: f64,
) -> Option<(&'r EquipmentRegion, f64)> {
    let mut best: Option<(&EquipmentRegion, f64)> = None;
    for r in regions {
        let v = iou(&d.object_box, &r.bbox);
        best = match best {
            Some((b, bv)) if bv > v || (bv == v && b.equipment_id <= r.equipment_id) => Some((b, bv)),
            _ => Some((r, v)),
        };
    }
    best.filter(|(_, v)| *v >= iou_min && *v > 0.0)
}

/// Highest-scoring relevant HOI of a record.
///
/// A valid verb and a none verb with equal score resolve to `NoInteraction`.
pub fn select_best_hoi(d: &DetectionRecord, mapping: &VerbMapping) -> Option<(InteractionLabel, f64)> {
    let mut best: Option<(InteractionLabel, f64)> = None;
    for (verb, p) in &d.verbs {
        let Some(label) = mapping.label_of(verb) else {
            continue;
        };
        let score = d.object_conf * p;
        best = match best {
            None => Some((label, score)),
            Some((bl, bs)) => {
                if score > bs || (score == bs && label == InteractionLabel::NoInteraction) {
                    Some((label, score))
                } else {
                    Some((bl, bs))
                }
            }
        };
    }
    best
}

/// One detection after region matching and verb reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedHoi {
    pub frame: u64,
    pub equipment_id: String,
    pub label: InteractionLabel,
    pub score: f64,
    /// Index of the source record in the bundle's detection list.
    pub source: usize,
    pub iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_id: Option<String>,
}

pub fn map_detection(
    index: usize,
    d: &DetectionRecord,
    regions: &[EquipmentRegion],
    mapping: &VerbMapping,
    iou_min: f64,
) -> Option<MappedHoi> {
    let (region, v) = assign_equipment(d, regions, iou_min)?;
    let (label, score) = select_best_hoi(d, mapping)?;
    Some(MappedHoi {
        frame: d.frame,
        equipment_id: region.equipment_id.clone(),
        label,
        score,
        source: index,
        iou: v,
        trainee_id: d.trainee_id.clone(),
    })
}

/// Maps every detection of a bundle; unmatched records are dropped.
pub fn map_hois(bundle: &SessionBundle, mapping: &VerbMapping, iou_min: f64, exec: Exec) -> Vec<MappedHoi> {
    let indexed: Vec<(usize, &DetectionRecord)> = bundle.detections.iter().enumerate().collect();
    exec.map(&indexed, |(i, d)| map_detection(*i, d, &bundle.regions, mapping, iou_min))
        .into_iter()
        .flatten()
        .collect()
}

/// Frame-indexed interaction score signal for one equipment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub equipment_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_id: Option<String>,
    pub fps: Fps,
    pub values: Vec<f64>,
}

impl ScoreSeries {
    pub fn zeros(equipment_id: impl Into<String>, fps: Fps, len: usize) -> Self {
        Self {
            equipment_id: equipment_id.into(),
            trainee_id: None,
            fps,
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// All series of one session, as written between pipeline stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub meta: SessionMeta,
    pub series: Vec<ScoreSeries>,
}

/// Builds one series per region (sorted by `equipment_id`).
///
/// Each value is the maximum `valid_interaction` score mapped to that
/// (frame, equipment); frames without one stay 0.
pub fn build_score_series(
    bundle: &SessionBundle,
    mapping: &VerbMapping,
    iou_min: f64,
    exec: Exec,
) -> Vec<ScoreSeries> {
    let hois = map_hois(bundle, mapping, iou_min, exec);
    series_from_hois(&bundle.meta, &bundle.equipment_ids(), &hois, false)
}

/// Like [`build_score_series`] but keyed by (equipment, trainee) for
/// detections that carry a trainee id. Records without one form their own
/// series with `trainee_id = None`.
pub fn build_score_series_by_trainee(
    bundle: &SessionBundle,
    mapping: &VerbMapping,
    iou_min: f64,
    exec: Exec,
) -> Vec<ScoreSeries> {
    let hois = map_hois(bundle, mapping, iou_min, exec);
    series_from_hois(&bundle.meta, &bundle.equipment_ids(), &hois, true)
}

fn series_from_hois(
    meta: &SessionMeta,
    equipment_ids: &[String],
    hois: &[MappedHoi],
    by_trainee: bool,
) -> Vec<ScoreSeries> {
    let len = meta.frame_count as usize;
    let mut out: BTreeMap<(String, Option<String>), ScoreSeries> = BTreeMap::new();
    for id in equipment_ids {
        out.insert((id.clone(), None), ScoreSeries::zeros(id.clone(), meta.fps, len));
    }
    for h in hois {
        if h.label != InteractionLabel::ValidInteraction {
            continue;
        }
        let trainee = if by_trainee { h.trainee_id.clone() } else { None };
        let s = out
            .entry((h.equipment_id.clone(), trainee.clone()))
            .or_insert_with(|| ScoreSeries {
                trainee_id: trainee,
                ..ScoreSeries::zeros(h.equipment_id.clone(), meta.fps, len)
            });
        if let Some(v) = s.values.get_mut(h.frame as usize) {
            *v = v.max(h.score);
        }
    }
    out.into_values().collect()
}
