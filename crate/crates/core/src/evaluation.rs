//! Scoring predicted intervals against expert annotations.
//!
//! Two families of metrics:
//!
//! - frame-level precision / recall / F1 (in percent) and their macro
//!   average over equipment;
//! - interval-level temporal metrics: overlap ratio, falsely predicted
//!   interval count, false prediction duration and start latency.
//!
//! Sessions are pooled per equipment: numerators and denominators are summed
//! across sessions before dividing. Every `0/0` is reported as 0, except the
//! overlap ratio (undefined without ground truth) and the latency (undefined
//! without an overlapping pair), which come back as `None`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::segmentation::Interval;
use crate::types::{AnnotationInterval, SessionMeta};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot average an empty set of F1 scores")]
    EmptyInput,
    #[error("overlap ratio is undefined without ground-truth intervals")]
    NoGroundTruth,
}

/// Anything with a `[start, end)` extent in seconds.
pub trait Span {
    fn start(&self) -> f64;
    fn end(&self) -> f64;
}

impl Span for Interval {
    fn start(&self) -> f64 {
        self.start_s
    }
    fn end(&self) -> f64 {
        self.end_s
    }
}

impl Span for AnnotationInterval {
    fn start(&self) -> f64 {
        self.start_s
    }
    fn end(&self) -> f64 {
        self.end_s
    }
}

impl Span for (f64, f64) {
    fn start(&self) -> f64 {
        self.0
    }
    fn end(&self) -> f64 {
        self.1
    }
}

/// Sorted, disjoint union of spans. Touching spans are joined.
pub fn union<S: Span>(spans: &[S]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = spans
        .iter()
        .map(|s| (s.start(), s.end()))
        .filter(|(a, b)| b > a)
        .collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn total(u: &[(f64, f64)]) -> f64 {
    u.iter().map(|(a, b)| b - a).sum()
}

/// Length of the intersection of two disjoint sorted unions.
fn intersection_len(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            acc += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

fn overlap_len(a: (f64, f64), u: &[(f64, f64)]) -> f64 {
    intersection_len(&[a], u)
}

/// Frame-level confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Frames whose start time lies in some span, as a mask of length
/// `meta.frame_count`.
pub fn frame_mask<S: Span>(spans: &[S], meta: &SessionMeta) -> Vec<bool> {
    let n = meta.frame_count as usize;
    let mut mask = vec![false; n];
    let u = union(spans);
    let mut k = 0;
    for (f, m) in mask.iter_mut().enumerate() {
        let t = meta.fps.frame_to_secs(f as u64);
        while k < u.len() && u[k].1 <= t {
            k += 1;
        }
        if k == u.len() {
            break;
        }
        *m = u[k].0 <= t;
    }
    mask
}

/// Tallies frames by predicted/annotated state. A frame `f` counts as inside
/// a span when `start <= f / fps < end`.
pub fn frame_confusion<P: Span, G: Span>(pred: &[P], gt: &[G], meta: &SessionMeta) -> Confusion {
    let p = frame_mask(pred, meta);
    let g = frame_mask(gt, meta);
    let mut c = Confusion::default();
    for (a, b) in p.into_iter().zip(g) {
        match (a, b) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Precision, recall and F1, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1(c: &Confusion) -> Prf {
    let p = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let r = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    let f = ratio(2.0 * p * r, p + r);
    Prf {
        precision: p * 100.0,
        recall: r * 100.0,
        f1: f * 100.0,
    }
}

/// Unweighted mean of per-equipment F1 values.
pub fn macro_f1(per_equipment_f1: &[f64]) -> Result<f64, EvalError> {
    if per_equipment_f1.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(per_equipment_f1.iter().sum::<f64>() / per_equipment_f1.len() as f64)
}

/// Fraction of annotated time covered by predictions.
pub fn overlap_ratio<P: Span, G: Span>(pred: &[P], gt: &[G]) -> Result<f64, EvalError> {
    let g = union(gt);
    let gt_len = total(&g);
    if gt_len <= 0.0 {
        return Err(EvalError::NoGroundTruth);
    }
    Ok((intersection_len(&union(pred), &g) / gt_len).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseIntervalStats {
    pub false_count: u64,
    pub false_duration_pct: f64,
}

/// Predicted intervals not backed by annotation, and the share of predicted
/// time outside annotation.
///
/// A predicted interval is false when the fraction of it covered by the
/// annotation union is `<= cutoff`; with the default cutoff 0 that means
/// no overlap at all.
pub fn false_interval_stats<P: Span, G: Span>(pred: &[P], gt: &[G], cutoff: f64) -> FalseIntervalStats {
    let g = union(gt);
    let false_count = pred
        .iter()
        .filter(|p| {
            let len = p.end() - p.start();
            let covered = overlap_len((p.start(), p.end()), &g);
            if cutoff <= 0.0 {
                covered <= 0.0
            } else {
                len <= 0.0 || covered / len <= cutoff
            }
        })
        .count() as u64;
    let pu = union(pred);
    let pred_len = total(&pu);
    let outside = pred_len - intersection_len(&pu, &g);
    FalseIntervalStats {
        false_count,
        false_duration_pct: (ratio(outside, pred_len) * 100.0).clamp(0.0, 100.0),
    }
}

fn latencies<P: Span, G: Span>(pred: &[P], gt: &[G]) -> Vec<f64> {
    gt.iter()
        .filter_map(|g| {
            pred.iter()
                .filter(|p| p.start().max(g.start()) < p.end().min(g.end()))
                .map(|p| p.start())
                .min_by(f64::total_cmp)
                .map(|s| (s - g.start()).max(0.0))
        })
        .collect()
}

/// Mean delay from each annotated start to the earliest overlapping
/// predicted start; early predictions count as 0. `None` without any
/// overlapping pair.
pub fn start_latency<P: Span, G: Span>(pred: &[P], gt: &[G]) -> Option<f64> {
    let l = latencies(pred, gt);
    if l.is_empty() {
        None
    } else {
        Some(l.iter().sum::<f64>() / l.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Covered fraction at or below which a predicted interval is false.
    pub false_overlap_cutoff: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            false_overlap_cutoff: 0.0,
        }
    }
}

/// Predictions and annotations of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSession {
    pub meta: SessionMeta,
    pub predictions: Vec<Interval>,
    pub annotations: Vec<AnnotationInterval>,
}

/// Summable per-(session, equipment) quantities.
#[derive(Debug, Clone, Default, PartialEq)]
struct Tally {
    confusion: Confusion,
    gt_len: f64,
    covered_len: f64,
    pred_len: f64,
    outside_len: f64,
    false_count: u64,
    pred_count: u64,
    gt_count: u64,
    latencies: Vec<f64>,
}

impl Tally {
    fn compute(meta: &SessionMeta, pred: &[&Interval], gt: &[&AnnotationInterval], opts: &EvalOptions) -> Self {
        let pred: Vec<(f64, f64)> = pred.iter().map(|p| (p.start_s, p.end_s)).collect();
        let gt: Vec<(f64, f64)> = gt.iter().map(|g| (g.start_s, g.end_s)).collect();
        let pu = union(&pred);
        let gu = union(&gt);
        let covered = intersection_len(&pu, &gu);
        let fs = false_interval_stats(&pred, &gt, opts.false_overlap_cutoff);
        Tally {
            confusion: frame_confusion(&pred, &gt, meta),
            gt_len: total(&gu),
            covered_len: covered,
            pred_len: total(&pu),
            outside_len: total(&pu) - covered,
            false_count: fs.false_count,
            pred_count: pred.len() as u64,
            gt_count: gt.len() as u64,
            latencies: latencies(&pred, &gt),
        }
    }

    fn add(&mut self, o: &Tally) {
        self.confusion += o.confusion;
        self.gt_len += o.gt_len;
        self.covered_len += o.covered_len;
        self.pred_len += o.pred_len;
        self.outside_len += o.outside_len;
        self.false_count += o.false_count;
        self.pred_count += o.pred_count;
        self.gt_count += o.gt_count;
        self.latencies.extend_from_slice(&o.latencies);
    }

    fn overlap(&self) -> Option<f64> {
        (self.gt_len > 0.0).then(|| (self.covered_len / self.gt_len).clamp(0.0, 1.0))
    }

    fn false_pct(&self) -> f64 {
        (ratio(self.outside_len, self.pred_len) * 100.0).clamp(0.0, 100.0)
    }

    fn latency(&self) -> Option<f64> {
        (!self.latencies.is_empty()).then(|| self.latencies.iter().sum::<f64>() / self.latencies.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquipmentMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub overlap_ratio: Option<f64>,
    /// Falsely predicted intervals summed over sessions.
    pub false_count: u64,
    /// `false_count` divided by the number of sessions.
    pub false_count_avg: f64,
    pub false_duration_pct: f64,
    pub start_latency_s: Option<f64>,
    pub gt_intervals: u64,
    pub pred_intervals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEquipmentMetrics {
    pub f1: f64,
    pub overlap_ratio: Option<f64>,
    pub false_count: u64,
    pub false_duration_pct: f64,
    pub start_latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionBreakdown {
    pub session_id: String,
    pub per_equipment: BTreeMap<String, SessionEquipmentMetrics>,
    pub macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_equipment: BTreeMap<String, EquipmentMetrics>,
    pub macro_f1: Option<f64>,
    pub sessions: Vec<SessionBreakdown>,
}

impl EvalReport {
    /// Mean over sessions of each session's mean per-equipment overlap.
    pub fn mean_session_overlap(&self) -> Option<f64> {
        let per: Vec<f64> = self
            .sessions
            .iter()
            .filter_map(|s| {
                let v: Vec<f64> = s.per_equipment.values().filter_map(|m| m.overlap_ratio).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
    }

    /// Mean over sessions of the falsely predicted interval count.
    pub fn mean_session_false_count(&self) -> f64 {
        if self.sessions.is_empty() {
            return 0.0;
        }
        let n: u64 = self
            .sessions
            .iter()
            .flat_map(|s| s.per_equipment.values())
            .map(|m| m.false_count)
            .sum();
        n as f64 / self.sessions.len() as f64
    }
}

/// Equipment evaluated: everything that appears in a prediction or an
/// annotation of any session.
pub fn evaluated_equipment(sessions: &[EvalSession]) -> Vec<String> {
    let mut ids = BTreeSet::new();
    for s in sessions {
        ids.extend(s.predictions.iter().map(|p| p.equipment_id.clone()));
        ids.extend(s.annotations.iter().map(|a| a.equipment_id.clone()));
    }
    ids.into_iter().collect()
}

/// Pooled per-equipment evaluation plus a per-session breakdown.
pub fn evaluate(sessions: &[EvalSession], opts: &EvalOptions, exec: Exec) -> EvalReport {
    let equipment = evaluated_equipment(sessions);
    let per_session: Vec<Vec<Tally>> = exec.map(sessions, |s| {
        equipment
            .iter()
            .map(|eq| {
                let p: Vec<&Interval> = s.predictions.iter().filter(|p| &p.equipment_id == eq).collect();
                let g: Vec<&AnnotationInterval> = s.annotations.iter().filter(|a| &a.equipment_id == eq).collect();
                Tally::compute(&s.meta, &p, &g, opts)
            })
            .collect()
    });

    let mut breakdown = Vec::with_capacity(sessions.len());
    for (s, tallies) in sessions.iter().zip(&per_session) {
        let per_equipment: BTreeMap<String, SessionEquipmentMetrics> = equipment
            .iter()
            .zip(tallies)
            .filter(|(_, t)| t.gt_count > 0 || t.pred_count > 0)
            .map(|(eq, t)| {
                (
                    eq.clone(),
                    SessionEquipmentMetrics {
                        f1: f1(&t.confusion).f1,
                        overlap_ratio: t.overlap(),
                        false_count: t.false_count,
                        false_duration_pct: t.false_pct(),
                        start_latency_s: t.latency(),
                    },
                )
            })
            .collect();
        let f1s: Vec<f64> = per_equipment.values().map(|m| m.f1).collect();
        breakdown.push(SessionBreakdown {
            session_id: s.meta.session_id.clone(),
            macro_f1: macro_f1(&f1s).ok(),
            per_equipment,
        });
    }

    let n_sessions = sessions.len().max(1) as f64;
    let mut per_equipment = BTreeMap::new();
    for (k, eq) in equipment.iter().enumerate() {
        let mut pooled = Tally::default();
        for t in &per_session {
            pooled.add(&t[k]);
        }
        let prf = f1(&pooled.confusion);
        per_equipment.insert(
            eq.clone(),
            EquipmentMetrics {
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                confusion: pooled.confusion,
                overlap_ratio: pooled.overlap(),
                false_count: pooled.false_count,
                false_count_avg: pooled.false_count as f64 / n_sessions,
                false_duration_pct: pooled.false_pct(),
                start_latency_s: pooled.latency(),
                gt_intervals: pooled.gt_count,
                pred_intervals: pooled.pred_count,
            },
        );
    }
    let f1s: Vec<f64> = per_equipment.values().map(|m: &EquipmentMetrics| m.f1).collect();
    EvalReport {
        macro_f1: macro_f1(&f1s).ok(),
        per_equipment,
        sessions: breakdown,
    }
}
