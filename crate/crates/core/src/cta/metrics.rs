//! Level-5 performance metrics computed from intervals and event logs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mapping::iou;
use crate::segmentation::Interval;
use crate::types::{AlarmEvent, DetectionRecord, EquipmentLabel, EquipmentRegion, FixationEvent, Fps};

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for v in values {
        n += 1;
        s += v;
    }
    (n > 0).then(|| s / n as f64)
}

fn on_equipment<'a>(intervals: &'a [Interval], equipment_id: &'a str) -> impl Iterator<Item = &'a Interval> + 'a {
    intervals.iter().filter(move |i| i.equipment_id == equipment_id)
}

/// Per-alarm values keyed by `alarm_id`, with their mean over present values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerAlarm {
    pub values: BTreeMap<String, Option<f64>>,
    pub mean: Option<f64>,
}

impl PerAlarm {
    fn from_values(values: BTreeMap<String, Option<f64>>) -> Self {
        let mean = mean(values.values().flatten().copied());
        Self { values, mean }
    }
}

/// Delay from alarm onset to the first interaction with the alarmed
/// equipment. Zero when an interaction is already under way at onset.
/// Interactions starting at or after resolution (or `session_end_s` for
/// unresolved alarms) do not count.
pub fn alarm_reaction_time(alarms: &[AlarmEvent], intervals: &[Interval], session_end_s: f64) -> PerAlarm {
    let values = alarms
        .iter()
        .map(|a| {
            let limit = a.resolved_s.unwrap_or(session_end_s);
            let mut best: Option<f64> = None;
            for i in on_equipment(intervals, &a.equipment_id) {
                let rt = if i.start_s <= a.onset_s && i.end_s > a.onset_s {
                    0.0
                } else if i.start_s >= a.onset_s && i.start_s < limit {
                    i.start_s - a.onset_s
                } else {
                    continue;
                };
                best = Some(best.map_or(rt, |b: f64| b.min(rt)));
            }
            (a.alarm_id.clone(), best)
        })
        .collect();
    PerAlarm::from_values(values)
}

/// `resolved_s - onset_s` per alarm; `None` for unresolved alarms.
pub fn response_time(alarms: &[AlarmEvent]) -> PerAlarm {
    let values = alarms
        .iter()
        .map(|a| (a.alarm_id.clone(), a.resolved_s.map(|r| r - a.onset_s)))
        .collect();
    PerAlarm::from_values(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRate {
    /// Successful interactions over alarm-overlapping interactions, percent.
    pub per_interaction_pct: Option<f64>,
    /// Alarms with a successful interaction over alarms with any
    /// overlapping interaction, percent.
    pub per_alarm_pct: Option<f64>,
    pub successful: u64,
    pub attempts: u64,
}

fn overlaps(i: &Interval, lo: f64, hi: f64) -> bool {
    i.start_s < hi && i.end_s > lo
}

/// Share of alarm-overlapping interactions during which (or within
/// `grace_s` after which) the alarm resolves.
pub fn resolution_success_rate(
    alarms: &[AlarmEvent],
    intervals: &[Interval],
    grace_s: f64,
    session_end_s: f64,
) -> ResolutionRate {
    let (mut successful, mut attempts) = (0u64, 0u64);
    let (mut alarms_ok, mut alarms_tried) = (0u64, 0u64);
    for a in alarms {
        let hi = a.resolved_s.unwrap_or(session_end_s);
        let mut any = false;
        let mut ok = false;
        for i in on_equipment(intervals, &a.equipment_id).filter(|i| overlaps(i, a.onset_s, hi)) {
            attempts += 1;
            any = true;
            if let Some(r) = a.resolved_s {
                if r >= i.start_s && r <= i.end_s + grace_s {
                    successful += 1;
                    ok = true;
                }
            }
        }
        alarms_tried += any as u64;
        alarms_ok += ok as u64;
    }
    let pct = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64 * 100.0);
    ResolutionRate {
        per_interaction_pct: pct(successful, attempts),
        per_alarm_pct: pct(alarms_ok, alarms_tried),
        successful,
        attempts,
    }
}

/// Interactions that were ineffective (overlap a genuine alarm that is still
/// unresolved `grace_s` after the interaction ends) or that set off a false
/// alarm on the same equipment within `lookahead_s` of their end. Each
/// interaction counts once.
pub fn non_optimal_interactions(alarms: &[AlarmEvent], intervals: &[Interval], grace_s: f64, lookahead_s: f64) -> u64 {
    intervals
        .iter()
        .filter(|i| {
            alarms.iter().filter(|a| a.equipment_id == i.equipment_id).any(|a| {
                if a.false_alarm {
                    a.onset_s > i.start_s && a.onset_s <= i.end_s + lookahead_s
                } else {
                    let hi = a.resolved_s.unwrap_or(f64::INFINITY);
                    overlaps(i, a.onset_s, hi) && a.resolved_s.is_none_or(|r| r > i.end_s + grace_s)
                }
            })
        })
        .count() as u64
}

/// Sorted `(start_s, end_s)` of intervals on regions with one of `labels`,
/// grouped by equipment id.
pub fn interaction_timestamps(
    intervals: &[Interval],
    regions: &[EquipmentRegion],
    labels: &[EquipmentLabel],
) -> BTreeMap<String, Vec<(f64, f64)>> {
    let wanted: BTreeSet<&str> = regions
        .iter()
        .filter(|r| labels.contains(&r.label))
        .map(|r| r.equipment_id.as_str())
        .collect();
    let mut out: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for i in intervals.iter().filter(|i| wanted.contains(i.equipment_id.as_str())) {
        out.entry(i.equipment_id.clone()).or_default().push((i.start_s, i.end_s));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    out
}

/// Whether a human box counts as inside the region's field-of-view zone.
pub fn in_fov(human: &crate::types::BoundingBox, region: &EquipmentRegion, iou_min: f64) -> bool {
    let fov = region.fov();
    let (cx, cy) = human.center();
    fov.contains(cx, cy) || iou(human, &fov) >= iou_min
}

/// Number of times someone enters the region's field of view. Absences
/// shorter than `bridge_s` do not end a presence run.
pub fn fov_entries(detections: &[DetectionRecord], region: &EquipmentRegion, iou_min: f64, fps: Fps, bridge_s: f64) -> u64 {
    let present: BTreeSet<u64> = detections
        .iter()
        .filter(|d| in_fov(&d.human_box, region, iou_min))
        .map(|d| d.frame)
        .collect();
    let mut entries = 0;
    let mut last: Option<u64> = None;
    for &f in &present {
        match last {
            None => entries += 1,
            Some(prev) => {
                let gap_frames = f - prev - 1;
                if gap_frames > 0 && fps.frames_to_secs(gap_frames) >= bridge_s {
                    entries += 1;
                }
            }
        }
        last = Some(f);
    }
    entries
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellRun {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_id: Option<String>,
    pub target: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl DwellRun {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeSequence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_id: Option<String>,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeMetrics {
    /// Seconds of fixation per session minute, by target.
    pub fixation_duration_per_min: BTreeMap<String, f64>,
    pub time_to_first_fixation: PerAlarm,
    pub dwell: Vec<DwellRun>,
    pub sequences: Vec<GazeSequence>,
    /// Counts of `"FROM->TO"` transitions over all sequences.
    pub transition_counts: BTreeMap<String, u64>,
}

/// Gaze metrics over a session of `session_s` seconds.
///
/// Dwell runs join consecutive same-target fixations of one trainee whose
/// gap is below `dwell_gap_s`; a run lasts from its first start to its last
/// end. Transition sequences collapse consecutive repeats of a target.
pub fn gaze_metrics(fixations: &[FixationEvent], alarms: &[AlarmEvent], session_s: f64, dwell_gap_s: f64) -> GazeMetrics {
    let minutes = session_s / 60.0;
    let mut per_min: BTreeMap<String, f64> = BTreeMap::new();
    for f in fixations {
        *per_min.entry(f.target.clone()).or_default() += f.duration();
    }
    for v in per_min.values_mut() {
        *v = if minutes > 0.0 { *v / minutes } else { 0.0 };
    }

    let ttff = alarms
        .iter()
        .map(|a| {
            let first = fixations
                .iter()
                .filter(|f| f.target == a.equipment_id && f.start_s >= a.onset_s)
                .map(|f| f.start_s)
                .min_by(f64::total_cmp);
            (a.alarm_id.clone(), first.map(|s| s - a.onset_s))
        })
        .collect();

    let mut by_trainee: BTreeMap<Option<String>, Vec<&FixationEvent>> = BTreeMap::new();
    for f in fixations {
        by_trainee.entry(f.trainee_id.clone()).or_default().push(f);
    }
    let mut dwell = Vec::new();
    let mut sequences = Vec::new();
    let mut transition_counts: BTreeMap<String, u64> = BTreeMap::new();
    for (trainee, mut list) in by_trainee {
        list.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let mut runs: Vec<DwellRun> = Vec::new();
        for f in &list {
            match runs.last_mut() {
                Some(r) if r.target == f.target && f.start_s - r.end_s < dwell_gap_s => {
                    r.end_s = r.end_s.max(f.end_s);
                }
                _ => runs.push(DwellRun {
                    trainee_id: trainee.clone(),
                    target: f.target.clone(),
                    start_s: f.start_s,
                    end_s: f.end_s,
                }),
            }
        }
        let mut targets: Vec<String> = Vec::new();
        for f in &list {
            if targets.last() != Some(&f.target) {
                targets.push(f.target.clone());
            }
        }
        for w in targets.windows(2) {
            *transition_counts.entry(format!("{}->{}", w[0], w[1])).or_default() += 1;
        }
        dwell.extend(runs);
        sequences.push(GazeSequence {
            trainee_id: trainee,
            targets,
        });
    }

    GazeMetrics {
        fixation_duration_per_min: per_min,
        time_to_first_fixation: PerAlarm::from_values(ttff),
        dwell,
        sequences,
        transition_counts,
    }
}
