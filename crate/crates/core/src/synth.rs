//! Seeded synthetic sessions with known ground truth.
//!
//! Each equipment gets a fixed region and one detection per frame whose
//! object box equals the region box, so mapping assigns it with IoU 1. The
//! detection's `hold` probability is `clamp(b + a * in_gt + N(0, s))`.
//! Noise for equipment `i` is drawn from ChaCha8 stream `i` of the seed.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::{
    AlarmEvent, AnnotationInterval, BoundingBox, DetectionRecord, EquipmentLabel, EquipmentRegion, FixationEvent,
    Fps, SessionBundle, SessionMeta,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("synth spec does not parse: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthEquipment {
    pub equipment_id: String,
    pub label: EquipmentLabel,
    /// Ground-truth frame ranges, half-open `[start, end)`.
    pub gt: Vec<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "default_session_id")]
    pub session_id: String,
    #[serde(default = "default_camera_id")]
    pub camera_id: String,
    pub frame_count: u64,
    pub fps: Fps,
    pub base_score: f64,
    pub active_boost: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Alarm onset precedes the matching ground-truth start by this much.
    #[serde(default = "default_alarm_lead_s")]
    pub alarm_lead_s: f64,
    #[serde(default = "yes")]
    pub alarms: bool,
    #[serde(default = "yes")]
    pub fixations: bool,
    pub equipment: Vec<SynthEquipment>,
}

fn default_session_id() -> String {
    "synth".into()
}

fn default_camera_id() -> String {
    "cam0".into()
}

fn default_alarm_lead_s() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// Trainee attached to every synthetic detection and fixation.
pub const SYNTH_TRAINEE: &str = "t1";

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let s: Self = toml::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.session_id.is_empty() {
            return Err(invalid("session_id", "must be nonempty"));
        }
        let (b, a) = (self.base_score, self.active_boost);
        if !(b >= 0.0 && a > 0.0 && b + a <= 1.0) {
            return Err(invalid(
                "active_boost",
                format!("need 0 <= base_score < base_score + active_boost <= 1, got b={b}, a={a}"),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(invalid("noise_sigma", "must be >= 0"));
        }
        if !(self.alarm_lead_s.is_finite() && self.alarm_lead_s >= 0.0) {
            return Err(invalid("alarm_lead_s", "must be >= 0"));
        }
        if self.equipment.is_empty() {
            return Err(invalid("equipment", "must be nonempty"));
        }
        let mut ids = BTreeSet::new();
        for (i, e) in self.equipment.iter().enumerate() {
            if e.equipment_id.is_empty() || !ids.insert(&e.equipment_id) {
                return Err(invalid(format!("equipment[{i}].equipment_id"), "must be nonempty and unique"));
            }
            let mut gt = e.gt.clone();
            gt.sort_unstable();
            for (j, r) in gt.iter().enumerate() {
                if r[0] >= r[1] || r[1] > self.frame_count {
                    return Err(invalid(
                        format!("equipment[{i}].gt"),
                        format!("range {r:?} must satisfy start < end <= frame_count"),
                    ));
                }
                if j > 0 && gt[j - 1][1] > r[0] {
                    return Err(invalid(format!("equipment[{i}].gt"), "ranges overlap"));
                }
            }
        }
        Ok(())
    }
}

/// Region box of the `i`-th equipment: 60 px squares on a row, 40 px apart.
pub fn region_box(i: usize) -> BoundingBox {
    let x = 10.0 + 100.0 * i as f64;
    BoundingBox::new(x, 10.0, x + 60.0, 70.0)
}

/// Field-of-view zone of the `i`-th equipment; contains its human box.
pub fn fov_box(i: usize) -> BoundingBox {
    let x = 100.0 * i as f64;
    BoundingBox::new(x, 0.0, x + 80.0, 250.0)
}

fn human_box(i: usize) -> BoundingBox {
    let x = 10.0 + 100.0 * i as f64;
    BoundingBox::new(x, 80.0, x + 60.0, 240.0)
}

fn sorted_gt(e: &SynthEquipment) -> Vec<[u64; 2]> {
    let mut gt = e.gt.clone();
    gt.sort_unstable();
    gt
}

/// Per-frame scores of equipment `i`, before they become detections.
pub fn equipment_scores(spec: &SynthSpec, i: usize) -> Vec<f64> {
    let e = &spec.equipment[i];
    let n = spec.frame_count as usize;
    let mut inside = vec![false; n];
    for r in &e.gt {
        inside[r[0] as usize..r[1] as usize].fill(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64);
    let normal = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    inside
        .iter()
        .map(|&g| {
            let clean = if g { spec.base_score + spec.active_boost } else { spec.base_score };
            match &normal {
                Some(d) => (clean + d.sample(&mut rng)).clamp(0.0, 1.0),
                None => clean,
            }
        })
        .collect()
}

pub fn generate_session(spec: &SynthSpec) -> Result<SessionBundle, SpecError> {
    spec.validate()?;
    let meta = SessionMeta {
        session_id: spec.session_id.clone(),
        camera_id: spec.camera_id.clone(),
        fps: spec.fps,
        frame_count: spec.frame_count,
    };
    let regions: Vec<EquipmentRegion> = spec
        .equipment
        .iter()
        .enumerate()
        .map(|(i, e)| EquipmentRegion {
            equipment_id: e.equipment_id.clone(),
            label: e.label,
            bbox: region_box(i),
            camera_id: spec.camera_id.clone(),
            fov_box: Some(fov_box(i)),
        })
        .collect();

    let scores: Vec<Vec<f64>> = (0..spec.equipment.len()).map(|i| equipment_scores(spec, i)).collect();
    let mut detections = Vec::with_capacity(spec.frame_count as usize * spec.equipment.len());
    for f in 0..spec.frame_count as usize {
        for (i, s) in scores.iter().enumerate() {
            detections.push(DetectionRecord {
                frame: f as u64,
                human_box: human_box(i),
                object_box: region_box(i),
                object_class: spec.equipment[i].label.as_str().to_ascii_lowercase(),
                object_conf: 1.0,
                verbs: [("hold".to_string(), s[f])].into_iter().collect(),
                human_conf: 1.0,
                trainee_id: Some(SYNTH_TRAINEE.into()),
            });
        }
    }

    let secs = |f: u64| spec.fps.frame_to_secs(f);
    let mut annotations = Vec::new();
    let mut alarms = Vec::new();
    let mut candidates = Vec::new();
    for e in &spec.equipment {
        for (j, r) in sorted_gt(e).iter().enumerate() {
            let (start, end) = (secs(r[0]), secs(r[1]));
            annotations.push(AnnotationInterval {
                equipment_id: e.equipment_id.clone(),
                start_s: start,
                end_s: end,
                trainee_id: None,
            });
            alarms.push(AlarmEvent {
                alarm_id: format!("{}-{j}", e.equipment_id),
                equipment_id: e.equipment_id.clone(),
                onset_s: (start - spec.alarm_lead_s).max(0.0),
                resolved_s: Some(end),
                false_alarm: false,
            });
            candidates.push(FixationEvent {
                start_s: start,
                end_s: end,
                target: e.equipment_id.clone(),
                trainee_id: Some(SYNTH_TRAINEE.into()),
            });
        }
    }
    // one trainee cannot look at two things at once: keep the earliest
    candidates.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.target.cmp(&b.target)));
    let mut fixations: Vec<FixationEvent> = Vec::new();
    for c in candidates {
        if fixations.last().is_none_or(|l| l.end_s <= c.start_s) {
            fixations.push(c);
        }
    }

    Ok(SessionBundle {
        meta,
        detections,
        regions,
        annotations: Some(annotations),
        alarms: spec.alarms.then_some(alarms),
        fixations: spec.fixations.then_some(fixations),
    })
}

/// Shape of randomly drawn specs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpecOptions {
    pub frame_count: u64,
    pub fps: Fps,
    pub equipment: usize,
    pub base_score: f64,
    pub active_boost: f64,
    pub noise_sigma: f64,
    /// Shortest ground-truth run and shortest gap between runs, in frames.
    pub min_run: u64,
    pub max_intervals: usize,
}

impl Default for RandomSpecOptions {
    fn default() -> Self {
        Self {
            frame_count: 900,
            fps: Fps::integer(30).expect("nonzero"),
            equipment: 3,
            base_score: 0.1,
            active_boost: 0.7,
            noise_sigma: 0.0,
            min_run: 30,
            max_intervals: 3,
        }
    }
}

/// Draws a valid spec with random ground-truth layout from `seed`. Runs
/// and the gaps between them (and to the series ends) are at least
/// `min_run` frames long.
pub fn random_spec(seed: u64, opts: &RandomSpecOptions) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = [EquipmentLabel::IV, EquipmentLabel::MV, EquipmentLabel::ProPaq];
    let equipment = (0..opts.equipment)
        .map(|i| {
            let k = rng.random_range(1..=opts.max_intervals.max(1));
            let mut gt = Vec::new();
            let mut cursor = opts.min_run;
            for _ in 0..k {
                let slack = opts.frame_count.saturating_sub(cursor + 2 * opts.min_run);
                if slack == 0 {
                    break;
                }
                let start = cursor + rng.random_range(0..slack.min(opts.frame_count / k as u64).max(1));
                let max_len = opts.frame_count.saturating_sub(start + opts.min_run);
                if max_len < opts.min_run {
                    break;
                }
                let len = rng.random_range(opts.min_run..=max_len.min(opts.min_run * 4));
                gt.push([start, start + len]);
                cursor = start + len + opts.min_run;
            }
            SynthEquipment {
                equipment_id: format!("{}{}", labels[i % 3].as_str(), i / 3),
                label: labels[i % 3],
                gt,
            }
        })
        .collect();
    SynthSpec {
        session_id: format!("synth-{seed}"),
        camera_id: "cam0".into(),
        frame_count: opts.frame_count,
        fps: opts.fps,
        base_score: opts.base_score,
        active_boost: opts.active_boost,
        noise_sigma: opts.noise_sigma,
        seed,
        alarm_lead_s: 1.0,
        alarms: true,
        fixations: true,
        equipment,
    }
}
