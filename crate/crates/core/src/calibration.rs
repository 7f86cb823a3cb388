//! Grid search over (sigma, threshold) against annotated validation sessions.

use serde::{Deserialize, Serialize};

use crate::evaluation::{evaluate, EvalOptions, EvalSession};
use crate::exec::Exec;
use crate::mapping::ScoreSeries;
use crate::segmentation::{gaussian_kernel, segment_values, smooth_values, sort_intervals, SmoothingParams};
use crate::types::{AnnotationInterval, SessionMeta};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("calibration grid is empty ({0})")]
    EmptyGrid(&'static str),
    #[error("no validation session carries annotations")]
    NoAnnotations,
    #[error("invalid grid point: {0}")]
    InvalidPoint(String),
}

/// What the grid search maximises.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Frame-level macro F1 over equipment, in percent.
    #[default]
    FrameMacroF1,
    /// Mean pooled overlap ratio over equipment, in percent.
    IntervalOverlap,
}

/// Score series plus expert annotations of one validation session.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSession {
    pub meta: SessionMeta,
    pub series: Vec<ScoreSeries>,
    pub annotations: Vec<AnnotationInterval>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub sigma: f64,
    pub threshold: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best: SmoothingParams,
    pub objective: f64,
    pub objective_kind: Objective,
    /// Every evaluated point, sigma-major in grid order.
    pub grid: Vec<GridPoint>,
}

/// Parameters held fixed during the search. `sigma` and `threshold` of
/// `base` are ignored.
pub fn calibrate(
    sessions: &[ValidationSession],
    sigma_grid: &[f64],
    threshold_grid: &[f64],
    base: &SmoothingParams,
    objective: Objective,
    eval_opts: &EvalOptions,
    exec: Exec,
) -> Result<CalibrationResult, CalibrationError> {
    if sigma_grid.is_empty() {
        return Err(CalibrationError::EmptyGrid("sigma"));
    }
    if threshold_grid.is_empty() {
        return Err(CalibrationError::EmptyGrid("threshold"));
    }
    if sessions.iter().all(|s| s.annotations.is_empty()) {
        return Err(CalibrationError::NoAnnotations);
    }
    for &s in sigma_grid {
        for &t in threshold_grid {
            let p = SmoothingParams {
                sigma: s,
                threshold: t,
                ..*base
            };
            p.validate()
                .map_err(|(f, m)| CalibrationError::InvalidPoint(format!("{f} {m}")))?;
        }
    }

    // Smooth once per sigma.
    let smoothed: Vec<Vec<Vec<Vec<f64>>>> = exec.map(sigma_grid, |&sigma| {
        let p = SmoothingParams { sigma, ..*base };
        let kernel = gaussian_kernel(sigma, p.radius()).expect("validated above");
        sessions
            .iter()
            .map(|s| s.series.iter().map(|x| smooth_values(&x.values, &kernel)).collect())
            .collect()
    });

    let n_t = threshold_grid.len();
    let grid = exec.map_range(sigma_grid.len() * n_t, |k| {
        let (si, ti) = (k / n_t, k % n_t);
        let params = SmoothingParams {
            sigma: sigma_grid[si],
            threshold: threshold_grid[ti],
            ..*base
        };
        GridPoint {
            sigma: params.sigma,
            threshold: params.threshold,
            objective: score_point(sessions, &smoothed[si], &params, objective, eval_opts),
        }
    });

    let best = grid
        .iter()
        .copied()
        .reduce(|a, b| {
            let better = b.objective > a.objective
                || (b.objective == a.objective
                    && (b.sigma < a.sigma || (b.sigma == a.sigma && b.threshold < a.threshold)));
            if better {
                b
            } else {
                a
            }
        })
        .expect("grid is nonempty");

    Ok(CalibrationResult {
        best: SmoothingParams {
            sigma: best.sigma,
            threshold: best.threshold,
            ..*base
        },
        objective: best.objective,
        objective_kind: objective,
        grid,
    })
}

fn score_point(
    sessions: &[ValidationSession],
    smoothed: &[Vec<Vec<f64>>],
    params: &SmoothingParams,
    objective: Objective,
    eval_opts: &EvalOptions,
) -> f64 {
    let eval_sessions: Vec<EvalSession> = sessions
        .iter()
        .zip(smoothed)
        .map(|(s, values)| {
            let mut predictions = Vec::new();
            for (series, v) in s.series.iter().zip(values) {
                predictions.extend(segment_values(v, series.fps, &series.equipment_id, params));
            }
            sort_intervals(&mut predictions);
            EvalSession {
                meta: s.meta.clone(),
                predictions,
                annotations: s.annotations.clone(),
            }
        })
        .collect();
    objective_value(&eval_sessions, objective, eval_opts)
}

/// Objective of already-segmented sessions.
pub fn objective_value(sessions: &[EvalSession], objective: Objective, eval_opts: &EvalOptions) -> f64 {
    let report = evaluate(sessions, eval_opts, Exec::Sequential);
    match objective {
        Objective::FrameMacroF1 => report.macro_f1.unwrap_or(0.0),
        Objective::IntervalOverlap => {
            let v: Vec<f64> = report
                .per_equipment
                .values()
                .filter_map(|m| m.overlap_ratio)
                .collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64 * 100.0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Fps;

    fn session(values: Vec<f64>, gt: &[(f64, f64)]) -> ValidationSession {
        let fps = Fps::integer(1).unwrap();
        ValidationSession {
            meta: SessionMeta {
                session_id: "v".into(),
                camera_id: "c".into(),
                fps,
                frame_count: values.len() as u64,
            },
            series: vec![ScoreSeries {
                equipment_id: "iv".into(),
                trainee_id: None,
                fps,
                values,
            }],
            annotations: gt
                .iter()
                .map(|&(s, e)| AnnotationInterval {
                    equipment_id: "iv".into(),
                    start_s: s,
                    end_s: e,
                    trainee_id: None,
                })
                .collect(),
        }
    }

    fn plateau() -> ValidationSession {
        let mut v = vec![0.1; 60];
        for x in &mut v[20..40] {
            *x = 0.8;
        }
        session(v, &[(20.0, 40.0)])
    }

    #[test]
    fn singleton_grid() {
        let r = calibrate(
            &[plateau()],
            &[2.0],
            &[0.3],
            &SmoothingParams::default(),
            Objective::FrameMacroF1,
            &EvalOptions::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(r.grid.len(), 1);
        assert_eq!(r.best.sigma, 2.0);
        assert_eq!(r.best.threshold, 0.3);
        assert_eq!(r.objective, r.grid[0].objective);
    }

    #[test]
    fn noiseless_plateau_ties_break_to_smallest() {
        // With radius 1 and sigma tiny, smoothing leaves the plateau intact
        // except the two edge frames, so use a radius-free check: any
        // threshold strictly between 0.1 and 0.8 with negligible blur hits 100.
        let base = SmoothingParams {
            radius: Some(1),
            ..SmoothingParams::default()
        };
        let r = calibrate(
            &[plateau()],
            &[0.05, 0.1],
            &[0.2, 0.5, 0.7],
            &base,
            Objective::FrameMacroF1,
            &EvalOptions::default(),
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(r.objective, 100.0);
        assert_eq!((r.best.sigma, r.best.threshold), (0.05, 0.2));
        assert_eq!(r.grid.iter().filter(|g| g.objective == 100.0).count(), 6);
        let max = r.grid.iter().map(|g| g.objective).fold(f64::MIN, f64::max);
        assert_eq!(r.objective, max);
    }

    #[test]
    fn errors() {
        let base = SmoothingParams::default();
        let o = EvalOptions::default();
        assert_eq!(
            calibrate(&[plateau()], &[], &[0.5], &base, Objective::FrameMacroF1, &o, Exec::Sequential),
            Err(CalibrationError::EmptyGrid("sigma"))
        );
        assert_eq!(
            calibrate(&[plateau()], &[1.0], &[], &base, Objective::FrameMacroF1, &o, Exec::Sequential),
            Err(CalibrationError::EmptyGrid("threshold"))
        );
        let bare = session(vec![0.0; 10], &[]);
        assert_eq!(
            calibrate(&[bare], &[1.0], &[0.5], &base, Objective::FrameMacroF1, &o, Exec::Sequential),
            Err(CalibrationError::NoAnnotations)
        );
        assert!(matches!(
            calibrate(&[plateau()], &[1.0], &[1.5], &base, Objective::FrameMacroF1, &o, Exec::Sequential),
            Err(CalibrationError::InvalidPoint(_))
        ));
    }

    #[test]
    fn overlap_objective() {
        let r = calibrate(
            &[plateau()],
            &[1.0],
            &[0.05, 0.5],
            &SmoothingParams::default(),
            Objective::IntervalOverlap,
            &EvalOptions::default(),
            Exec::Sequential,
        )
        .unwrap();
        // threshold below the baseline covers everything
        assert_eq!(r.grid[0].objective, 100.0);
        assert_eq!(r.best.threshold, 0.05);
    }

    #[test]
    fn deterministic_across_exec_modes() {
        let mut v: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64) / 100.0).collect();
        for x in &mut v[100..180] {
            *x = (*x + 0.6).min(1.0);
        }
        let s = session(v, &[(100.0, 180.0)]);
        let run = |e| {
            calibrate(
                &[s.clone(), plateau()],
                &[1.0, 2.0, 4.0],
                &[0.3, 0.5, 0.7],
                &SmoothingParams::default(),
                Objective::FrameMacroF1,
                &EvalOptions::default(),
                e,
            )
            .unwrap()
        };
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }
}
