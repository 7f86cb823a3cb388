//! After-action review metrics grouped under the task-analysis hierarchy.

mod metrics;
mod taxonomy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{
    alarm_reaction_time, fov_entries, gaze_metrics, in_fov, interaction_timestamps, non_optimal_interactions,
    resolution_success_rate, response_time, DwellRun, GazeMetrics, GazeSequence, PerAlarm, ResolutionRate,
};
pub use taxonomy::{CtaNode, Taxonomy, TaxonomyError, DEFAULT_TAXONOMY};

use crate::segmentation::Interval;
use crate::types::{EquipmentLabel, SessionBundle};

pub const FOV_ENTRIES: &str = "fov_entries";
pub const FIXATION_DURATION: &str = "fixation_duration_per_min";
pub const TIME_TO_FIRST_FIXATION: &str = "time_to_first_fixation";
pub const ALARM_REACTION_TIME: &str = "alarm_reaction_time";
pub const RESPONSE_TIME: &str = "response_time";
pub const RESOLUTION_SUCCESS_RATE: &str = "alarm_resolution_success_rate";
pub const NON_OPTIMAL_INTERACTIONS: &str = "non_optimal_interactions";
pub const PATIENT_INTERACTION_TIMES: &str = "patient_interaction_times";
pub const FIXATION_TRANSITIONS: &str = "fixation_transitions";
pub const GAZE_DWELL_TIME: &str = "gaze_dwell_time";
pub const EQUIPMENT_INTERACTION_TIMES: &str = "equipment_interaction_times";

/// Every metric the assessment can produce.
pub const METRIC_KEYS: [&str; 11] = [
    FOV_ENTRIES,
    FIXATION_DURATION,
    TIME_TO_FIRST_FIXATION,
    ALARM_REACTION_TIME,
    RESPONSE_TIME,
    RESOLUTION_SUCCESS_RATE,
    NON_OPTIMAL_INTERACTIONS,
    PATIENT_INTERACTION_TIMES,
    FIXATION_TRANSITIONS,
    GAZE_DWELL_TIME,
    EQUIPMENT_INTERACTION_TIMES,
];

/// Time windows for the assessment metrics, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentConfig {
    pub grace_s: f64,
    pub lookahead_s: f64,
    pub dwell_gap_s: f64,
    pub fov_bridge_s: f64,
    pub fov_iou_min: f64,
}

impl Default for AssessmentConfig {
    fn default() -> Self {
        Self {
            grace_s: 5.0,
            lookahead_s: 30.0,
            dwell_gap_s: 0.2,
            fov_bridge_s: 1.0,
            fov_iou_min: 0.5,
        }
    }
}

impl AssessmentConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [
            ("grace_s", self.grace_s),
            ("lookahead_s", self.lookahead_s),
            ("dwell_gap_s", self.dwell_gap_s),
            ("fov_bridge_s", self.fov_bridge_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err((name, format!("must be >= 0, got {v}")));
            }
        }
        if !(self.fov_iou_min > 0.0 && self.fov_iou_min <= 1.0) {
            return Err(("fov_iou_min", format!("must be in (0, 1], got {}", self.fov_iou_min)));
        }
        Ok(())
    }
}

/// One computed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricValue {
    /// Values keyed by alarm, equipment or target, plus their mean.
    Keyed {
        unit: String,
        values: BTreeMap<String, Option<f64>>,
        mean: Option<f64>,
    },
    Count {
        value: u64,
    },
    Rate {
        unit: String,
        value: f64,
        per_alarm: Option<f64>,
        successful: u64,
        attempts: u64,
    },
    Spans {
        spans: BTreeMap<String, Vec<(f64, f64)>>,
    },
    Dwell {
        runs: Vec<DwellRun>,
    },
    Transitions {
        sequences: Vec<GazeSequence>,
        counts: BTreeMap<String, u64>,
    },
}

impl MetricValue {
    fn keyed(unit: &str, values: BTreeMap<String, Option<f64>>) -> Self {
        let present: Vec<f64> = values.values().flatten().copied().collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        Self::Keyed {
            unit: unit.into(),
            values,
            mean,
        }
    }

    fn per_alarm(unit: &str, p: PerAlarm) -> Self {
        Self::Keyed {
            unit: unit.into(),
            values: p.values,
            mean: p.mean,
        }
    }
}

/// A taxonomy node with the metrics attached to it (leaves only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedNode {
    pub id: String,
    pub level: u8,
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, MetricValue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<GroupedNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub session_id: String,
    pub metrics: BTreeMap<String, MetricValue>,
    pub grouped: GroupedNode,
    pub warnings: Vec<String>,
}

/// Computes every metric whose inputs are present and hangs each on its
/// taxonomy leaf. Skipped metrics leave a warning instead of a value.
pub fn build_assessment(
    bundle: &SessionBundle,
    intervals: &[Interval],
    config: &AssessmentConfig,
    taxonomy: &Taxonomy,
) -> AssessmentReport {
    let mut metrics = BTreeMap::new();
    let mut warnings = Vec::new();
    let session_end = bundle.meta.duration_s();

    let equipment_labels = [EquipmentLabel::IV, EquipmentLabel::MV, EquipmentLabel::ProPaq];
    metrics.insert(
        EQUIPMENT_INTERACTION_TIMES.to_string(),
        MetricValue::Spans {
            spans: interaction_timestamps(intervals, &bundle.regions, &equipment_labels),
        },
    );
    if bundle.regions.iter().any(|r| r.label == EquipmentLabel::Patient) {
        metrics.insert(
            PATIENT_INTERACTION_TIMES.to_string(),
            MetricValue::Spans {
                spans: interaction_timestamps(intervals, &bundle.regions, &[EquipmentLabel::Patient]),
            },
        );
    } else {
        warnings.push(format!("{PATIENT_INTERACTION_TIMES}: no patient region configured"));
    }

    let fov: BTreeMap<String, Option<f64>> = bundle
        .regions
        .iter()
        .filter(|r| r.label.is_equipment())
        .map(|r| {
            let n = fov_entries(&bundle.detections, r, config.fov_iou_min, bundle.meta.fps, config.fov_bridge_s);
            (r.equipment_id.clone(), Some(n as f64))
        })
        .collect();
    metrics.insert(FOV_ENTRIES.to_string(), MetricValue::keyed("count", fov));

    match &bundle.alarms {
        Some(alarms) => {
            let rt = alarm_reaction_time(alarms, intervals, session_end);
            for (id, v) in &rt.values {
                if v.is_none() {
                    warnings.push(format!("{ALARM_REACTION_TIME}: alarm {id} has no qualifying interaction"));
                }
            }
            metrics.insert(ALARM_REACTION_TIME.to_string(), MetricValue::per_alarm("s", rt));
            metrics.insert(RESPONSE_TIME.to_string(), MetricValue::per_alarm("s", response_time(alarms)));
            let rate = resolution_success_rate(alarms, intervals, config.grace_s, session_end);
            match rate.per_interaction_pct {
                Some(value) => {
                    metrics.insert(
                        RESOLUTION_SUCCESS_RATE.to_string(),
                        MetricValue::Rate {
                            unit: "%".into(),
                            value,
                            per_alarm: rate.per_alarm_pct,
                            successful: rate.successful,
                            attempts: rate.attempts,
                        },
                    );
                }
                None => warnings.push(format!("{RESOLUTION_SUCCESS_RATE}: no interaction overlaps an alarm")),
            }
            metrics.insert(
                NON_OPTIMAL_INTERACTIONS.to_string(),
                MetricValue::Count {
                    value: non_optimal_interactions(alarms, intervals, config.grace_s, config.lookahead_s),
                },
            );
        }
        None => {
            for k in [ALARM_REACTION_TIME, RESPONSE_TIME, RESOLUTION_SUCCESS_RATE, NON_OPTIMAL_INTERACTIONS] {
                warnings.push(format!("{k}: no alarm log"));
            }
        }
    }

    match &bundle.fixations {
        Some(fixations) => {
            let alarms = bundle.alarms.as_deref().unwrap_or(&[]);
            let g = gaze_metrics(fixations, alarms, session_end, config.dwell_gap_s);
            metrics.insert(
                FIXATION_DURATION.to_string(),
                MetricValue::keyed(
                    "s/min",
                    g.fixation_duration_per_min.into_iter().map(|(k, v)| (k, Some(v))).collect(),
                ),
            );
            if bundle.alarms.is_some() {
                metrics.insert(
                    TIME_TO_FIRST_FIXATION.to_string(),
                    MetricValue::per_alarm("s", g.time_to_first_fixation),
                );
            } else {
                warnings.push(format!("{TIME_TO_FIRST_FIXATION}: no alarm log"));
            }
            metrics.insert(GAZE_DWELL_TIME.to_string(), MetricValue::Dwell { runs: g.dwell });
            metrics.insert(
                FIXATION_TRANSITIONS.to_string(),
                MetricValue::Transitions {
                    sequences: g.sequences,
                    counts: g.transition_counts,
                },
            );
        }
        None => {
            for k in [FIXATION_DURATION, TIME_TO_FIRST_FIXATION, GAZE_DWELL_TIME, FIXATION_TRANSITIONS] {
                warnings.push(format!("{k}: no fixation log"));
            }
        }
    }

    AssessmentReport {
        session_id: bundle.meta.session_id.clone(),
        grouped: group(taxonomy, taxonomy.root(), &metrics),
        metrics,
        warnings,
    }
}

fn group(taxonomy: &Taxonomy, node: &CtaNode, metrics: &BTreeMap<String, MetricValue>) -> GroupedNode {
    GroupedNode {
        id: node.id.clone(),
        level: node.level,
        label: node.label.clone(),
        metrics: node
            .metric_keys
            .iter()
            .filter_map(|k| metrics.get(k).map(|v| (k.clone(), v.clone())))
            .collect(),
        children: taxonomy.children(&node.id).map(|c| group(taxonomy, c, metrics)).collect(),
    }
}
