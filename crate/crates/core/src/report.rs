//! Report serialization: pretty JSON or tab-separated text tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationResult;
use crate::cta::{AssessmentReport, GroupedNode, MetricValue};
use crate::evaluation::EvalReport;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingMode {
    /// Toward zero, the convention of the published tables.
    #[default]
    Truncate,
    Nearest,
}

/// How numbers are printed in text tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumberFormat {
    pub mode: RoundingMode,
    pub decimals: u32,
}

impl Default for NumberFormat {
    fn default() -> Self {
        Self {
            mode: RoundingMode::Truncate,
            decimals: 1,
        }
    }
}

impl NumberFormat {
    /// Slack absorbing binary representation error before truncating, so
    /// that e.g. a mean computed as 87.19999999999999 prints as 87.2.
    const EPS: f64 = 1e-9;

    pub fn apply(&self, x: f64) -> f64 {
        let k = 10f64.powi(self.decimals as i32);
        let scaled = x.abs() * k;
        let r = match self.mode {
            RoundingMode::Truncate => (scaled + Self::EPS).floor(),
            RoundingMode::Nearest => scaled.round(),
        };
        (r / k).copysign(x)
    }

    /// Fixed decimals; whole numbers print without a fractional part.
    pub fn render(&self, x: f64) -> String {
        let s = self.fixed(x);
        match s.split_once('.') {
            Some((int, frac)) if frac.bytes().all(|b| b == b'0') => int.to_string(),
            _ => s,
        }
    }

    /// Always exactly `decimals` fractional digits.
    pub fn fixed(&self, x: f64) -> String {
        let v = self.apply(x);
        let v = if v == 0.0 { 0.0 } else { v };
        format!("{:.*}", self.decimals as usize, v)
    }

    fn opt(&self, x: Option<f64>) -> String {
        x.map_or_else(|| "-".to_string(), |v| self.render(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Pretty-printed JSON.
    Structured,
    /// Tab-separated tables.
    TableText,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" | "json" => Ok(Self::Structured),
            "table-text" | "table" | "text" => Ok(Self::TableText),
            _ => Err(format!("unknown report format {s:?} (expected structured or table-text)")),
        }
    }
}

pub trait TableText {
    fn table_text(&self, fmt: &NumberFormat) -> String;
}

/// Serializes a report. Identical input gives identical bytes.
pub fn write_report<R: Serialize + TableText>(report: &R, format: Format, fmt: &NumberFormat) -> Vec<u8> {
    match format {
        Format::Structured => {
            let mut v = serde_json::to_vec_pretty(report).expect("report serializes");
            v.push(b'\n');
            v
        }
        Format::TableText => report.table_text(fmt).into_bytes(),
    }
}

pub fn read_report<R: DeserializeOwned>(bytes: &[u8]) -> serde_json::Result<R> {
    serde_json::from_slice(bytes)
}

/// Per-equipment F1 values for one or more models.
#[derive(Debug, Clone, PartialEq)]
pub struct F1Table {
    pub columns: Vec<String>,
    /// Row label and one value per column.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl F1Table {
    /// One `"<name> F1"` column per report, one row per equipment.
    pub fn from_reports(models: &[(&str, &EvalReport)]) -> Self {
        let equipment: BTreeSet<&String> = models.iter().flat_map(|(_, r)| r.per_equipment.keys()).collect();
        Self {
            columns: models.iter().map(|(n, _)| format!("{n} F1")).collect(),
            rows: equipment
                .into_iter()
                .map(|eq| {
                    let vals = models.iter().map(|(_, r)| r.per_equipment.get(eq).map(|m| m.f1)).collect();
                    (eq.clone(), vals)
                })
                .collect(),
        }
    }
}

/// Header row, one row per equipment and an `Avg.` row holding the column
/// means. No rows gives the header alone.
pub fn render_f1_table(table: &F1Table, fmt: &NumberFormat) -> String {
    let mut out = String::new();
    for c in &table.columns {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    if table.rows.is_empty() {
        return out;
    }
    for (label, vals) in &table.rows {
        out.push_str(label);
        for v in vals {
            out.push('\t');
            out.push_str(&fmt.opt(*v));
        }
        out.push('\n');
    }
    out.push_str("Avg.");
    for col in 0..table.columns.len() {
        let present: Vec<f64> = table.rows.iter().filter_map(|(_, v)| v.get(col).copied().flatten()).collect();
        let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
        out.push('\t');
        out.push_str(&fmt.opt(mean));
    }
    out.push('\n');
    out
}

pub const TEMPORAL_HEADER: [&str; 6] = [
    "Equipment",
    "Model Type",
    "Overlap Ratio",
    "Avg. Falsely Predicted Interactions Count",
    "Model Start Time Latency (sec)",
    "False Interaction Prediction Duration",
];

/// Interval-level metrics, one row per (equipment, model). The equipment
/// cell is left blank on all but its first row; missing values print "-".
pub fn render_temporal_table(models: &[(&str, &EvalReport)], fmt: &NumberFormat) -> String {
    let two = NumberFormat { decimals: 2, ..*fmt };
    let mut out = TEMPORAL_HEADER.join("\t");
    out.push('\n');
    let equipment: BTreeSet<&String> = models.iter().flat_map(|(_, r)| r.per_equipment.keys()).collect();
    for eq in equipment {
        for (i, (name, r)) in models.iter().enumerate() {
            let label = if i == 0 { eq.as_str() } else { "" };
            let cells = match r.per_equipment.get(eq) {
                Some(m) => [
                    m.overlap_ratio.map_or("-".into(), |v| format!("{}%", two.fixed(v * 100.0))),
                    two.fixed(m.false_count_avg),
                    m.start_latency_s.map_or("-".into(), |v| two.fixed(v)),
                    format!("{}%", two.fixed(m.false_duration_pct)),
                ],
                None => ["-".into(), "-".into(), "-".into(), "-".into()],
            };
            let _ = writeln!(out, "{label}\t{name}\t{}", cells.join("\t"));
        }
    }
    out
}

impl TableText for EvalReport {
    fn table_text(&self, fmt: &NumberFormat) -> String {
        let mut out = render_f1_table(&F1Table::from_reports(&[("Model", self)]), fmt);
        out.push('\n');
        out.push_str(&render_temporal_table(&[("Model", self)], fmt));
        out
    }
}

impl TableText for CalibrationResult {
    fn table_text(&self, fmt: &NumberFormat) -> String {
        let mut out = String::from("sigma\tthreshold\tobjective\n");
        for p in &self.grid {
            let _ = writeln!(out, "{}\t{}\t{}", p.sigma, p.threshold, fmt.render(p.objective));
        }
        let _ = writeln!(
            out,
            "best\t{}\t{}\t{}",
            self.best.sigma,
            self.best.threshold,
            fmt.render(self.objective)
        );
        out
    }
}

fn render_metric(v: &MetricValue, fmt: &NumberFormat) -> String {
    let span = |(a, b): &(f64, f64)| format!("[{}, {})", fmt.render(*a), fmt.render(*b));
    match v {
        MetricValue::Keyed { unit, values, mean } => {
            let mut parts: Vec<String> = values.iter().map(|(k, v)| format!("{k}={}", fmt.opt(*v))).collect();
            parts.push(format!("mean={}", fmt.opt(*mean)));
            format!("{} ({unit})", parts.join(", "))
        }
        MetricValue::Count { value } => value.to_string(),
        MetricValue::Rate {
            unit,
            value,
            per_alarm,
            successful,
            attempts,
        } => format!(
            "{}{unit} ({successful}/{attempts}), per alarm {}",
            fmt.render(*value),
            per_alarm.map_or("-".into(), |p| format!("{}{unit}", fmt.render(p)))
        ),
        MetricValue::Spans { spans } => spans
            .iter()
            .map(|(eq, s)| format!("{eq}: {}", s.iter().map(span).collect::<Vec<_>>().join(" ")))
            .collect::<Vec<_>>()
            .join("; "),
        MetricValue::Dwell { runs } => runs
            .iter()
            .map(|r| format!("{}/{} {}", r.trainee_id.as_deref().unwrap_or("-"), r.target, span(&(r.start_s, r.end_s))))
            .collect::<Vec<_>>()
            .join("; "),
        MetricValue::Transitions { counts, .. } => counts
            .iter()
            .map(|(k, n)| format!("{k}={n}"))
            .collect::<Vec<_>>()
            .join(", "),
    }
}

fn render_node(node: &GroupedNode, depth: usize, fmt: &NumberFormat, out: &mut String) {
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}L{} {}\t{}", node.level, node.id, node.label);
    for (k, v) in &node.metrics {
        let _ = writeln!(out, "{pad}  * {k}\t{}", render_metric(v, fmt));
    }
    for c in &node.children {
        render_node(c, depth + 1, fmt, out);
    }
}

impl TableText for AssessmentReport {
    fn table_text(&self, fmt: &NumberFormat) -> String {
        let mut out = format!("Session\t{}\n", self.session_id);
        render_node(&self.grouped, 0, fmt, &mut out);
        if !self.warnings.is_empty() {
            out.push_str("Warnings\n");
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }
}
