//! Gaussian smoothing of score series and threshold segmentation into
//! interaction intervals.

use serde::{Deserialize, Serialize};

use crate::mapping::ScoreSeries;
use crate::types::{AnnotationInterval, Fps};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("sigma must be a positive finite number, got {0}")]
    Sigma(f64),
    #[error("kernel radius must be >= 1, got {0}")]
    Radius(usize),
}

/// Smoothing and segmentation parameters. Times are in seconds, `sigma`
/// and `radius` in frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingParams {
    pub sigma: f64,
    /// Kernel half-width. `None` means `ceil(3 * sigma)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    pub threshold: f64,
    pub min_len_s: f64,
    pub gap_merge_s: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            radius: None,
            threshold: 0.5,
            min_len_s: 0.0,
            gap_merge_s: 0.0,
        }
    }
}

impl SmoothingParams {
    pub fn new(sigma: f64, threshold: f64) -> Self {
        Self {
            sigma,
            threshold,
            ..Self::default()
        }
    }

    pub fn radius(&self) -> usize {
        self.radius.unwrap_or_else(|| default_radius(self.sigma))
    }

    /// Returns the dotted field name and message of the first violation.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if let Some(0) = self.radius {
            return Err(("radius", "must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(("threshold", format!("must be in (0, 1), got {}", self.threshold)));
        }
        if !(self.min_len_s.is_finite() && self.min_len_s >= 0.0) {
            return Err(("min_len_s", "must be >= 0".into()));
        }
        if !(self.gap_merge_s.is_finite() && self.gap_merge_s >= 0.0) {
            return Err(("gap_merge_s", "must be >= 0".into()));
        }
        Ok(())
    }
}

pub fn default_radius(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

/// Normalized Gaussian weights for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>, DomainError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(DomainError::Sigma(sigma));
    }
    if radius == 0 {
        return Err(DomainError::Radius(radius));
    }
    let two_var = 2.0 * sigma * sigma;
    let r = radius as i64;
    let mut w: Vec<f64> = (-r..=r).map(|k| (-((k * k) as f64) / two_var).exp()).collect();
    // Sum from the tails inward so the symmetric halves add identically.
    let mut total = w[radius];
    for k in (1..=radius).rev() {
        total += w[radius - k] + w[radius + k];
    }
    for x in &mut w {
        *x /= total;
    }
    Ok(w)
}

/// Convolves `values` with the normalized kernel, truncating the kernel at
/// the series ends and renormalizing over the in-range taps.
///
/// Outputs are clamped to the min/max of their input window, so a constant
/// window gives back exactly that constant.
pub fn smooth_values(values: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = values.len();
    let radius = kernel.len() / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius).min(n - 1);
        let k0 = radius + lo - i;
        let window = &values[lo..=hi];
        let taps = &kernel[k0..k0 + window.len()];
        let mut acc = 0.0;
        let mut wmin = f64::INFINITY;
        let mut wmax = f64::NEG_INFINITY;
        for (x, w) in window.iter().zip(taps) {
            acc += x * w;
            wmin = wmin.min(*x);
            wmax = wmax.max(*x);
        }
        let interior = lo + radius == i && hi == i + radius;
        let v = if interior {
            acc
        } else {
            acc / taps.iter().sum::<f64>()
        };
        out.push(v.clamp(wmin, wmax));
    }
    out
}

pub fn smooth(series: &ScoreSeries, params: &SmoothingParams) -> Result<ScoreSeries, DomainError> {
    let kernel = gaussian_kernel(params.sigma, params.radius())?;
    Ok(ScoreSeries {
        values: smooth_values(&series.values, &kernel),
        ..series.clone()
    })
}

/// A predicted interaction span `[start_s, end_s)` on one equipment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub equipment_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub peak_score: f64,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn to_annotation(&self) -> AnnotationInterval {
        AnnotationInterval {
            equipment_id: self.equipment_id.clone(),
            start_s: self.start_s,
            end_s: self.end_s,
            trainee_id: None,
        }
    }
}

/// Maximal runs of frames with score `>= threshold`, in frames
/// (`start..end`, end exclusive) together with the run's peak value.
pub fn active_runs(values: &[f64], threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut runs = Vec::new();
    let mut open: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match (&mut open, v >= threshold) {
            (None, true) => open = Some((i, v)),
            (Some((_, peak)), true) => *peak = peak.max(v),
            (Some((s, peak)), false) => {
                runs.push((*s, i, *peak));
                open = None;
            }
            (None, false) => {}
        }
    }
    if let Some((s, peak)) = open {
        runs.push((s, values.len(), peak));
    }
    runs
}

/// Thresholds a (smoothed) series into intervals.
///
/// Runs become `[first/fps, (last+1)/fps)`. Neighbours separated by less
/// than `gap_merge_s` are merged first, then spans shorter than
/// `min_len_s` are dropped.
pub fn segment(series: &ScoreSeries, params: &SmoothingParams) -> Vec<Interval> {
    segment_values(&series.values, series.fps, &series.equipment_id, params)
}

pub fn segment_values(values: &[f64], fps: Fps, equipment_id: &str, params: &SmoothingParams) -> Vec<Interval> {
    let mut merged: Vec<Interval> = Vec::new();
    for (s, e, peak) in active_runs(values, params.threshold) {
        let iv = Interval {
            equipment_id: equipment_id.to_string(),
            start_s: fps.frame_to_secs(s as u64),
            end_s: fps.frame_to_secs(e as u64),
            peak_score: peak,
        };
        match merged.last_mut() {
            Some(prev) if iv.start_s - prev.end_s < params.gap_merge_s => {
                prev.end_s = iv.end_s;
                prev.peak_score = prev.peak_score.max(iv.peak_score);
            }
            _ => merged.push(iv),
        }
    }
    merged.retain(|iv| iv.duration() >= params.min_len_s);
    merged
}

/// Smooths then segments every series; output sorted by equipment then start.
pub fn smooth_and_segment(series: &[ScoreSeries], params: &SmoothingParams) -> Result<Vec<Interval>, DomainError> {
    let kernel = gaussian_kernel(params.sigma, params.radius())?;
    let mut out = Vec::new();
    for s in series {
        let v = smooth_values(&s.values, &kernel);
        out.extend(segment_values(&v, s.fps, &s.equipment_id, params));
    }
    sort_intervals(&mut out);
    Ok(out)
}

pub fn sort_intervals(intervals: &mut [Interval]) {
    intervals.sort_by(|a, b| {
        a.equipment_id
            .cmp(&b.equipment_id)
            .then(a.start_s.total_cmp(&b.start_s))
            .then(a.end_s.total_cmp(&b.end_s))
    });
}

/// Predicted intervals in annotation CSV schema.
pub fn intervals_csv(intervals: &[Interval]) -> Vec<u8> {
    let rows: Vec<AnnotationInterval> = intervals.iter().map(Interval::to_annotation).collect();
    crate::session_io::annotations_bytes(&rows)
}
