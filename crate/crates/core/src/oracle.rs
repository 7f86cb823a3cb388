//! Naive reference implementations used to cross-check the main path.
//!
//! These recompute everything from scratch per output element and share no
//! code with [`crate::segmentation`] or [`crate::evaluation`].

use crate::evaluation::Confusion;

/// Direct O(n*k) truncated-and-renormalized Gaussian convolution.
pub fn oracle_smooth(values: &[f64], sigma: f64, radius: usize) -> Vec<f64> {
    let n = values.len() as i64;
    let r = radius as i64;
    (0..n)
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for k in -r..=r {
                let j = i + k;
                if j < 0 || j >= n {
                    continue;
                }
                let w = (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp();
                num += w * values[j as usize];
                den += w;
            }
            num / den
        })
        .collect()
}

/// Per-frame scan: intervals `[first / fps, (last + 1) / fps)` of maximal
/// runs with value at or above `threshold`. `fps` in frames per second.
pub fn oracle_segment(values: &[f64], threshold: f64, fps: f64) -> Vec<(f64, f64)> {
    let active: Vec<bool> = values.iter().map(|v| *v >= threshold).collect();
    let mut out = Vec::new();
    for i in 0..active.len() {
        let starts = active[i] && (i == 0 || !active[i - 1]);
        if !starts {
            continue;
        }
        let mut j = i;
        while j + 1 < active.len() && active[j + 1] {
            j += 1;
        }
        out.push((i as f64 / fps, (j + 1) as f64 / fps));
    }
    out
}

/// Per-frame boolean tally of `[start, end)` spans.
pub fn oracle_confusion(pred: &[(f64, f64)], gt: &[(f64, f64)], frames: u64, fps: f64) -> Confusion {
    let mut c = Confusion::default();
    for f in 0..frames {
        let t = f as f64 / fps;
        let p = pred.iter().any(|&(a, b)| a <= t && t < b);
        let g = gt.iter().any(|&(a, b)| a <= t && t < b);
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_through_smooth_is_unchanged() {
        let v = vec![0.25; 40];
        for x in oracle_smooth(&v, 3.0, 9) {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zeros_segment_to_nothing() {
        assert!(oracle_segment(&[0.0; 30], 0.5, 1.0).is_empty());
    }

    #[test]
    fn confusion_counts_frames() {
        let c = oracle_confusion(&[(3.0, 5.0)], &[(2.0, 4.0)], 8, 1.0);
        assert_eq!(c, Confusion { tp: 1, fp: 1, fn_: 1, tn: 5 });
    }
}
