use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use hoi_aar::calibration::{calibrate, CalibrationResult, ValidationSession};
use hoi_aar::config::{default_config, load_config, EngineConfig};
use hoi_aar::cta::{build_assessment, Taxonomy};
use hoi_aar::evaluation::{evaluate, EvalSession};
use hoi_aar::label_assist::{
    dedup_record_indices, labels_csv, parse_skeletons, partition_labels, sample_for_review, warnings_csv, Outcome,
};
use hoi_aar::mapping::{build_score_series, build_score_series_by_trainee, map_hois, ScoreSeries, SeriesSet};
use hoi_aar::report::{write_report, Format, TableText};
use hoi_aar::segmentation::{smooth_and_segment, sort_intervals, intervals_csv, Interval, SmoothingParams};
use hoi_aar::session_io::{csv_bytes, load_session_file, read_interval_csv, write_bundle};
use hoi_aar::synth::{generate_session, SynthSpec};
use hoi_aar::{Exec, SessionBundle};

use crate::{Cli, Command, ReportFormat, SessionInputs, SmoothingFlags};

/// A failed command: exit code plus diagnostic.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T> = Result<T, Failure>;

trait OrFail<T> {
    /// Bad usage or input: exit 1.
    fn input(self) -> CmdResult<T>;
    /// Failure while computing or writing: exit 2.
    fn processing(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn input(self) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code: 1,
            error: e.into(),
        })
    }

    fn processing(self) -> CmdResult<T> {
        self.map_err(|e| Failure {
            code: 2,
            error: e.into(),
        })
    }
}

fn bad_input(msg: String) -> Failure {
    Failure {
        code: 1,
        error: anyhow!(msg),
    }
}

pub fn run(cli: &Cli) -> CmdResult<Vec<PathBuf>> {
    let cfg = engine_config(cli)?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match &cli.command {
        Command::Map {
            session,
            out,
            hois,
            iou_min,
        } => {
            let mut cfg = cfg;
            if let Some(v) = iou_min {
                cfg.mapping.iou_min = *v;
                cfg.validate().input()?;
            }
            cmd_map(&cfg, session, out, hois.as_deref())
        }
        Command::Segment { series, out, smoothing } => cmd_segment(&cfg, smoothing, series, out),
        Command::Calibrate { inputs, out, format } => cmd_calibrate(&cfg, exec, inputs, out, *format),
        Command::Evaluate {
            inputs,
            intervals,
            out,
            format,
        } => cmd_evaluate(&cfg, exec, inputs, intervals, out, *format),
        Command::Assess {
            session,
            intervals,
            out,
            format,
        } => cmd_assess(&cfg, session, intervals, out, *format),
        Command::LabelAssist {
            session,
            skeletons,
            out_dir,
        } => cmd_label_assist(&cfg, session, skeletons, out_dir),
        Command::Simulate {
            spec,
            out_dir,
            seed,
            noise,
        } => cmd_simulate(spec, out_dir, *seed, *noise),
        Command::Pipeline {
            inputs,
            out_dir,
            format,
            smoothing,
        } => cmd_pipeline(&cfg, exec, inputs, smoothing, out_dir, *format),
    }
}

/// Defaults, then the config file, then `--set` overrides.
fn engine_config(cli: &Cli) -> CmdResult<EngineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p).input()?,
        None => default_config(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| bad_input(format!("--set {o:?}: expected KEY=VALUE")))?;
        cfg = cfg.with_override(k.trim(), v.trim()).input()?;
    }
    Ok(cfg)
}

fn read_params(path: &Path) -> CmdResult<SmoothingParams> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading params {}", path.display()))
        .input()?;
    if let Ok(r) = serde_json::from_str::<CalibrationResult>(&text) {
        return Ok(r.best);
    }
    if let Ok(p) = serde_json::from_str::<SmoothingParams>(&text) {
        return Ok(p);
    }
    toml::from_str::<SmoothingParams>(&text)
        .with_context(|| format!("{}: neither a calibration result nor smoothing parameters", path.display()))
        .input()
}

/// Config smoothing, replaced by `--params`, then individual flags.
fn smoothing(cfg: &EngineConfig, flags: &SmoothingFlags) -> CmdResult<SmoothingParams> {
    let mut p = match &flags.params {
        Some(path) => read_params(path)?,
        None => cfg.smoothing,
    };
    if let Some(v) = flags.sigma {
        p.sigma = v;
    }
    if let Some(v) = flags.threshold {
        p.threshold = v;
    }
    if let Some(v) = flags.radius {
        p.radius = Some(v);
    }
    if let Some(v) = flags.min_len_s {
        p.min_len_s = v;
    }
    if let Some(v) = flags.gap_merge_s {
        p.gap_merge_s = v;
    }
    p.validate()
        .map_err(|(field, msg)| bad_input(format!("smoothing.{field}: {msg}")))?;
    Ok(p)
}

struct Entry {
    session: PathBuf,
    intervals: Option<PathBuf>,
}

fn entries(inputs: &SessionInputs, intervals: &[PathBuf]) -> CmdResult<Vec<Entry>> {
    let list = match &inputs.manifest {
        Some(m) => {
            if !intervals.is_empty() {
                return Err(bad_input("--intervals cannot be combined with --manifest".into()));
            }
            let text = fs::read_to_string(m)
                .with_context(|| format!("reading manifest {}", m.display()))
                .input()?;
            let base = m.parent().unwrap_or(Path::new(""));
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() > 2 {
                    return Err(bad_input(format!(
                        "{}:{}: expected `session.toml [intervals.csv]`",
                        m.display(),
                        i + 1
                    )));
                }
                out.push(Entry {
                    session: base.join(parts[0]),
                    intervals: parts.get(1).map(|p| base.join(p)),
                });
            }
            out
        }
        None => {
            if !intervals.is_empty() && intervals.len() != inputs.session.len() {
                return Err(bad_input(format!(
                    "{} --session but {} --intervals given",
                    inputs.session.len(),
                    intervals.len()
                )));
            }
            inputs
                .session
                .iter()
                .enumerate()
                .map(|(i, s)| Entry {
                    session: s.clone(),
                    intervals: intervals.get(i).cloned(),
                })
                .collect()
        }
    };
    if list.is_empty() {
        return Err(bad_input("no sessions given (use --session or --manifest)".into()));
    }
    Ok(list)
}

fn load(path: &Path) -> CmdResult<SessionBundle> {
    load_session_file(path, None)
        .with_context(|| format!("loading session {}", path.display()))
        .input()
}

fn annotations_required(b: &SessionBundle, path: &Path) -> CmdResult<()> {
    if b.annotations.is_none() {
        return Err(bad_input(format!(
            "{}: no annotations file listed for session {:?}",
            path.display(),
            b.meta.session_id
        )));
    }
    Ok(())
}

fn read_intervals(path: &Path) -> CmdResult<Vec<Interval>> {
    let rows = read_interval_csv(path)
        .with_context(|| format!("reading intervals {}", path.display()))
        .input()?;
    Ok(rows
        .into_iter()
        .map(|a| Interval {
            equipment_id: a.equipment_id,
            start_s: a.start_s,
            end_s: a.end_s,
            peak_score: 0.0,
        })
        .collect())
}

fn series_for(b: &SessionBundle, cfg: &EngineConfig) -> Vec<ScoreSeries> {
    let m = &cfg.mapping;
    if m.by_trainee {
        build_score_series_by_trainee(b, &m.verb_mapping, m.iou_min, Exec::Sequential)
    } else {
        build_score_series(b, &m.verb_mapping, m.iou_min, Exec::Sequential)
    }
}

fn segment_all(series: &[ScoreSeries], params: &SmoothingParams) -> CmdResult<Vec<Interval>> {
    let mut iv = smooth_and_segment(series, params).processing()?;
    sort_intervals(&mut iv);
    Ok(iv)
}

fn write(path: &Path, bytes: &[u8]) -> CmdResult<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .processing()?;
    }
    fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .processing()?;
    Ok(path.to_path_buf())
}

fn json_line<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec(v).expect("serializable");
    b.push(b'\n');
    b
}

fn report_bytes<R: Serialize + TableText>(r: &R, format: ReportFormat, cfg: &EngineConfig) -> Vec<u8> {
    let f = match format {
        ReportFormat::Structured => Format::Structured,
        ReportFormat::TableText => Format::TableText,
    };
    write_report(r, f, &cfg.evaluation.number_format())
}

fn extension(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Structured => "json",
        ReportFormat::TableText => "txt",
    }
}

fn cmd_map(cfg: &EngineConfig, session: &Path, out: &Path, hois: Option<&Path>) -> CmdResult<Vec<PathBuf>> {
    let b = load(session)?;
    let set = SeriesSet {
        meta: b.meta.clone(),
        series: series_for(&b, cfg),
    };
    let mut written = vec![write(out, &json_line(&set))?];
    if let Some(h) = hois {
        let m = &cfg.mapping;
        let mut bytes = Vec::new();
        for hoi in map_hois(&b, &m.verb_mapping, m.iou_min, Exec::Sequential) {
            bytes.extend(json_line(&hoi));
        }
        written.push(write(h, &bytes)?);
    }
    Ok(written)
}

fn cmd_segment(cfg: &EngineConfig, flags: &SmoothingFlags, series: &Path, out: &Path) -> CmdResult<Vec<PathBuf>> {
    let params = smoothing(cfg, flags)?;
    let bytes = fs::read(series)
        .with_context(|| format!("reading series {}", series.display()))
        .input()?;
    let set: SeriesSet = serde_json::from_slice(&bytes)
        .with_context(|| format!("parsing series {}", series.display()))
        .input()?;
    let iv = segment_all(&set.series, &params)?;
    Ok(vec![write(out, &intervals_csv(&iv))?])
}

/// Loads every session with `f`, one session per task, keeping input order.
fn per_session<T: Send>(
    exec: Exec,
    list: &[Entry],
    f: impl Fn(&Entry) -> CmdResult<T> + Sync + Send,
) -> CmdResult<Vec<T>> {
    exec.map(list, |e| f(e)).into_iter().collect()
}

fn cmd_calibrate(
    cfg: &EngineConfig,
    exec: Exec,
    inputs: &SessionInputs,
    out: &Path,
    format: ReportFormat,
) -> CmdResult<Vec<PathBuf>> {
    if !cfg.calibration.enabled {
        return Err(bad_input("calibration.enabled is false in the config".into()));
    }
    let list = entries(inputs, &[])?;
    let sessions = per_session(exec, &list, |e| {
        let b = load(&e.session)?;
        annotations_required(&b, &e.session)?;
        Ok(ValidationSession {
            series: series_for(&b, cfg),
            annotations: b.annotations.clone().unwrap_or_default(),
            meta: b.meta,
        })
    })?;
    let c = &cfg.calibration;
    let result = calibrate(
        &sessions,
        &c.sigma_grid,
        &c.threshold_grid,
        &cfg.smoothing,
        c.objective,
        &cfg.evaluation.options(),
        exec,
    )
    .processing()?;
    Ok(vec![write(out, &report_bytes(&result, format, cfg))?])
}

fn cmd_evaluate(
    cfg: &EngineConfig,
    exec: Exec,
    inputs: &SessionInputs,
    intervals: &[PathBuf],
    out: &Path,
    format: ReportFormat,
) -> CmdResult<Vec<PathBuf>> {
    let list = entries(inputs, intervals)?;
    let sessions = per_session(exec, &list, |e| {
        let ipath = e.intervals.as_ref().ok_or_else(|| {
            bad_input(format!("{}: no intervals file given for this session", e.session.display()))
        })?;
        let b = load(&e.session)?;
        annotations_required(&b, &e.session)?;
        Ok(EvalSession {
            predictions: read_intervals(ipath)?,
            annotations: b.annotations.unwrap_or_default(),
            meta: b.meta,
        })
    })?;
    let report = evaluate(&sessions, &cfg.evaluation.options(), exec);
    Ok(vec![write(out, &report_bytes(&report, format, cfg))?])
}

fn cmd_assess(
    cfg: &EngineConfig,
    session: &Path,
    intervals: &Path,
    out: &Path,
    format: ReportFormat,
) -> CmdResult<Vec<PathBuf>> {
    let taxonomy = cfg.taxonomy().input()?;
    let b = load(session)?;
    let iv = read_intervals(intervals)?;
    let report = build_assessment(&b, &iv, &cfg.assessment.windows(), &taxonomy);
    Ok(vec![write(out, &report_bytes(&report, format, cfg))?])
}

#[derive(Serialize)]
struct ReviewRow {
    frame: u64,
    source: usize,
    kind: &'static str,
    detail: String,
}

fn cmd_label_assist(cfg: &EngineConfig, session: &Path, skeletons: &Path, out_dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let b = load(session)?;
    let file = fs::File::open(skeletons)
        .with_context(|| format!("opening skeletons {}", skeletons.display()))
        .input()?;
    let sk = parse_skeletons(file, skeletons).input()?;
    let la = &cfg.label_assist;
    let kept = dedup_record_indices(&b.detections, la.iou_cluster);
    let records: Vec<_> = kept.iter().map(|&i| b.detections[i].clone()).collect();
    let mut outcomes = partition_labels(
        &records,
        &sk,
        &b.regions,
        &cfg.mapping.verb_mapping,
        cfg.mapping.iou_min,
        la,
    );
    // report positions in the session's detection stream
    for o in &mut outcomes {
        match o {
            Outcome::Label(l) => l.source = kept[l.source],
            Outcome::Warning(w) => w.source = kept[w.source],
        }
    }
    let review: Vec<ReviewRow> = sample_for_review(&outcomes, la)
        .into_iter()
        .map(|i| match &outcomes[i] {
            Outcome::Label(l) => ReviewRow {
                frame: l.frame,
                source: l.source,
                kind: "label",
                detail: format!(
                    "{} {} {} {}",
                    l.equipment_id,
                    l.label.as_str(),
                    serde_json::to_value(l.provenance).expect("enum").as_str().unwrap_or(""),
                    l.score
                ),
            },
            Outcome::Warning(w) => ReviewRow {
                frame: w.frame,
                source: w.source,
                kind: "warning",
                detail: serde_json::to_value(w.reason).expect("enum").as_str().unwrap_or("").to_string(),
            },
        })
        .collect();
    Ok(vec![
        write(&out_dir.join("labels.csv"), &labels_csv(&outcomes))?,
        write(&out_dir.join("warnings.csv"), &warnings_csv(&outcomes))?,
        write(
            &out_dir.join("review.csv"),
            &csv_bytes(&review, &["frame", "source", "kind", "detail"]),
        )?,
    ])
}

fn cmd_simulate(spec: &Path, out_dir: &Path, seed: Option<u64>, noise: Option<f64>) -> CmdResult<Vec<PathBuf>> {
    let mut s = SynthSpec::load(spec).input()?;
    if let Some(v) = seed {
        s.seed = v;
    }
    if let Some(v) = noise {
        s.noise_sigma = v;
    }
    let bundle = generate_session(&s).input()?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .processing()?;
    let path = write_bundle(&bundle, out_dir).processing()?;
    Ok(vec![path])
}

struct PipelineSession {
    bundle: SessionBundle,
    series: Vec<ScoreSeries>,
    intervals: Vec<Interval>,
}

fn cmd_pipeline(
    cfg: &EngineConfig,
    exec: Exec,
    inputs: &SessionInputs,
    flags: &SmoothingFlags,
    out_dir: &Path,
    format: ReportFormat,
) -> CmdResult<Vec<PathBuf>> {
    let params = smoothing(cfg, flags)?;
    let taxonomy: Taxonomy = cfg.taxonomy().input()?;
    let list = entries(inputs, &[])?;
    let done = per_session(exec, &list, |e| {
        let bundle = load(&e.session)?;
        let series = series_for(&bundle, cfg);
        let intervals = segment_all(&series, &params)?;
        Ok(PipelineSession {
            bundle,
            series,
            intervals,
        })
    })?;

    let mut seen = BTreeSet::new();
    for (s, e) in done.iter().zip(&list) {
        if !seen.insert(s.bundle.meta.session_id.as_str()) {
            return Err(bad_input(format!(
                "{}: duplicate session id {:?}",
                e.session.display(),
                s.bundle.meta.session_id
            )));
        }
    }

    let ext = extension(format);
    let mut written = Vec::new();
    let mut eval_sessions = Vec::new();
    for s in &done {
        let dir = out_dir.join(&s.bundle.meta.session_id);
        let set = SeriesSet {
            meta: s.bundle.meta.clone(),
            series: s.series.clone(),
        };
        written.push(write(&dir.join("series.json"), &json_line(&set))?);
        written.push(write(&dir.join("intervals.csv"), &intervals_csv(&s.intervals))?);
        let assessment = build_assessment(&s.bundle, &s.intervals, &cfg.assessment.windows(), &taxonomy);
        written.push(write(
            &dir.join(format!("assessment.{ext}")),
            &report_bytes(&assessment, format, cfg),
        )?);
        if let Some(a) = &s.bundle.annotations {
            eval_sessions.push(EvalSession {
                meta: s.bundle.meta.clone(),
                predictions: s.intervals.clone(),
                annotations: a.clone(),
            });
        }
    }
    if eval_sessions.is_empty() {
        eprintln!("note: no session has annotations; evaluation skipped");
    } else {
        let report = evaluate(&eval_sessions, &cfg.evaluation.options(), exec);
        written.push(write(
            &out_dir.join(format!("evaluation.{ext}")),
            &report_bytes(&report, format, cfg),
        )?);
    }
    Ok(written)
}
