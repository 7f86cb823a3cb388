//! Engine configuration: one TOML file holding every tunable of the
//! pipeline. Missing sections and keys fall back to the defaults below.
//!
//! ```toml
//! [mapping]
//! iou_min = 0.5
//! by_trainee = false
//! [mapping.verb_mapping]
//! valid_verbs = ["carry", "hold"]
//! none_verbs = ["no_interaction", "watch"]
//!
//! [smoothing]
//! sigma = 2.0
//! threshold = 0.5
//! min_len_s = 0.0
//! gap_merge_s = 0.0
//!
//! [calibration]
//! enabled = true
//! sigma_grid = [1.0, 2.0, 4.0, 8.0, 16.0]
//! threshold_grid = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
//! objective = "frame_macro_f1"
//!
//! [evaluation]
//! false_overlap_cutoff = 0.0
//! rounding = "truncate"
//! decimals = 1
//!
//! [assessment]
//! grace_s = 5.0
//! lookahead_s = 30.0
//! dwell_gap_s = 0.2
//! fov_bridge_s = 1.0
//! fov_iou_min = 0.5
//! # taxonomy = "taxonomy.toml"
//!
//! [label_assist]
//! hi_score = 0.8
//! # ...
//!
//! [synth]
//! rng = "chacha8"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::Objective;
use crate::cta::{AssessmentConfig, Taxonomy, METRIC_KEYS};
use crate::evaluation::EvalOptions;
use crate::label_assist::LabelAssistConfig;
use crate::mapping::{VerbMapping, DEFAULT_IOU_MIN};
use crate::report::{NumberFormat, RoundingMode};
use crate::segmentation::SmoothingParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    fn invalid(section: &str, field: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            field: format!("{section}.{field}"),
            message: message.into(),
        }
    }

    /// Dotted path of the offending field, when known.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub verb_mapping: VerbMapping,
    pub iou_min: f64,
    /// Build one series per (equipment, trainee) instead of per equipment.
    pub by_trainee: bool,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            verb_mapping: VerbMapping::default(),
            iou_min: DEFAULT_IOU_MIN,
            by_trainee: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub enabled: bool,
    pub sigma_grid: Vec<f64>,
    pub threshold_grid: Vec<f64>,
    pub objective: Objective,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sigma_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            threshold_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            objective: Objective::FrameMacroF1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub false_overlap_cutoff: f64,
    pub rounding: RoundingMode,
    pub decimals: u32,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let f = NumberFormat::default();
        Self {
            false_overlap_cutoff: EvalOptions::default().false_overlap_cutoff,
            rounding: f.mode,
            decimals: f.decimals,
        }
    }
}

impl EvaluationConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            false_overlap_cutoff: self.false_overlap_cutoff,
        }
    }

    pub fn number_format(&self) -> NumberFormat {
        NumberFormat {
            mode: self.rounding,
            decimals: self.decimals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssessmentSection {
    pub grace_s: f64,
    pub lookahead_s: f64,
    pub dwell_gap_s: f64,
    pub fov_bridge_s: f64,
    pub fov_iou_min: f64,
    /// Taxonomy file; the bundled taxonomy when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<PathBuf>,
}

impl Default for AssessmentSection {
    fn default() -> Self {
        let w = AssessmentConfig::default();
        Self {
            grace_s: w.grace_s,
            lookahead_s: w.lookahead_s,
            dwell_gap_s: w.dwell_gap_s,
            fov_bridge_s: w.fov_bridge_s,
            fov_iou_min: w.fov_iou_min,
            taxonomy: None,
        }
    }
}

impl AssessmentSection {
    pub fn windows(&self) -> AssessmentConfig {
        AssessmentConfig {
            grace_s: self.grace_s,
            lookahead_s: self.lookahead_s,
            dwell_gap_s: self.dwell_gap_s,
            fov_bridge_s: self.fov_bridge_s,
            fov_iou_min: self.fov_iou_min,
        }
    }
}

/// Seedable generator used by the synthetic session generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RngAlgorithm {
    /// ChaCha with 8 rounds, one stream per equipment.
    #[default]
    Chacha8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub rng: RngAlgorithm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub mapping: MappingConfig,
    pub smoothing: SmoothingParams,
    pub calibration: CalibrationConfig,
    pub evaluation: EvaluationConfig,
    pub assessment: AssessmentSection,
    pub label_assist: LabelAssistConfig,
    pub synth: SynthConfig,
}

pub fn default_config() -> EngineConfig {
    EngineConfig::default()
}

/// Reads and validates a config file. A relative taxonomy path is resolved
/// against the config file's directory.
pub fn load_config(path: &Path) -> Result<EngineConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        ConfigError::Parse { message, .. } => ConfigError::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })?;
    if let Some(t) = &cfg.assessment.taxonomy {
        if t.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.assessment.taxonomy = Some(base.join(t));
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<EngineConfig, ConfigError> {
    let cfg: EngineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: "<config>".into(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl EngineConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.mapping;
        m.verb_mapping
            .validate()
            .map_err(|msg| ConfigError::invalid("mapping", "verb_mapping", msg))?;
        if !(m.iou_min > 0.0 && m.iou_min <= 1.0) {
            return Err(ConfigError::invalid("mapping", "iou_min", format!("must be in (0, 1], got {}", m.iou_min)));
        }
        self.smoothing
            .validate()
            .map_err(|(f, msg)| ConfigError::invalid("smoothing", f, msg))?;

        let c = &self.calibration;
        if c.enabled && c.sigma_grid.is_empty() {
            return Err(ConfigError::invalid("calibration", "sigma_grid", "must be nonempty"));
        }
        if c.enabled && c.threshold_grid.is_empty() {
            return Err(ConfigError::invalid("calibration", "threshold_grid", "must be nonempty"));
        }
        if let Some(s) = c.sigma_grid.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(ConfigError::invalid("calibration", "sigma_grid", format!("sigma {s} must be > 0")));
        }
        if let Some(t) = c.threshold_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(ConfigError::invalid(
                "calibration",
                "threshold_grid",
                format!("threshold {t} must be in (0, 1)"),
            ));
        }

        let e = &self.evaluation;
        if !(0.0..1.0).contains(&e.false_overlap_cutoff) {
            return Err(ConfigError::invalid(
                "evaluation",
                "false_overlap_cutoff",
                format!("must be in [0, 1), got {}", e.false_overlap_cutoff),
            ));
        }
        if e.decimals > 9 {
            return Err(ConfigError::invalid("evaluation", "decimals", "must be <= 9"));
        }

        self.assessment
            .windows()
            .validate()
            .map_err(|(f, msg)| ConfigError::invalid("assessment", f, msg))?;
        self.label_assist
            .validate()
            .map_err(|(f, msg)| ConfigError::invalid("label_assist", f, msg))?;
        Ok(())
    }

    /// Taxonomy named by the config, or the bundled one.
    pub fn taxonomy(&self) -> Result<Taxonomy, ConfigError> {
        match &self.assessment.taxonomy {
            None => Ok(Taxonomy::default_for(&METRIC_KEYS)),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                    path: p.display().to_string(),
                    source: e,
                })?;
                Taxonomy::parse(&text, &METRIC_KEYS)
                    .map_err(|e| ConfigError::invalid("assessment", "taxonomy", e.to_string()))
            }
        }
    }

    /// Returns a copy with the dotted `key` set to `value`, a TOML literal
    /// (bare words are taken as strings). The result is validated.
    pub fn with_override(&self, key: &str, value: &str) -> Result<EngineConfig, ConfigError> {
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut root = toml::Value::try_from(self).expect("config serializes");
        let mut parts = key.split('.').peekable();
        let mut cur = &mut root;
        while let Some(p) = parts.next() {
            let table = cur.as_table_mut().ok_or_else(|| ConfigError::Invalid {
                field: key.into(),
                message: "not a table".into(),
            })?;
            if parts.peek().is_none() {
                table.insert(p.to_string(), parsed);
                break;
            }
            cur = table
                .entry(p.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let cfg: EngineConfig = root.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid {
            field: key.into(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}
