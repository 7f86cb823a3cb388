//! Reading, validating and writing session inputs.
//!
//! File layout of one session:
//!
//! | file            | format | columns / fields |
//! |-----------------|--------|------------------|
//! | `session.toml`  | TOML   | `session_id`, `camera_id`, `fps`, `frame_count`, `[files]` table |
//! | detections      | JSONL  | one [`DetectionRecord`] per line |
//! | regions         | CSV    | `equipment_id,label,camera_id,x1,y1,x2,y2,fov_x1,fov_y1,fov_x2,fov_y2` |
//! | annotations     | CSV    | `equipment_id,start_s,end_s,trainee_id` |
//! | alarms          | CSV    | `alarm_id,equipment_id,onset_s,resolved_s,false_alarm` |
//! | fixations       | CSV    | `start_s,end_s,target,trainee_id` |
//!
//! Empty CSV cells mean "absent" for optional columns. Paths in the
//! `[files]` table are resolved relative to the `session.toml` directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::types::{
    AlarmEvent, AnnotationInterval, BoundingBox, DetectionRecord, EquipmentLabel, EquipmentRegion,
    FixationEvent, Fps, SessionBundle, SessionMeta, OTHER_TARGET,
};

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("{path}:{line}: invalid {field}: {message}")]
    Validation {
        path: String,
        line: u64,
        field: String,
        message: String,
    },
    #[error("{path}:{line}: {field} references unknown equipment_id {equipment_id:?}")]
    MissingReference {
        path: String,
        line: u64,
        field: String,
        equipment_id: String,
    },
}

impl SessionError {
    /// Name of the offending field for validation and reference errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Validation { field, .. } | Self::MissingReference { field, .. } => Some(field),
            _ => None,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = SessionError> = std::result::Result<T, E>;

/// Files making up one session. Only `detections` and `regions` are required.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionPaths {
    pub detections: PathBuf,
    pub regions: PathBuf,
    pub annotations: Option<PathBuf>,
    pub alarms: Option<PathBuf>,
    pub fixations: Option<PathBuf>,
}

/// On-disk shape of `session.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFile {
    pub session_id: String,
    pub camera_id: String,
    pub fps: Fps,
    pub frame_count: u64,
    pub files: SessionFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionFiles {
    pub detections: PathBuf,
    pub regions: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alarms: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixations: Option<PathBuf>,
}

fn validation(path: &Path, line: u64, field: &str, message: impl Into<String>) -> SessionError {
    SessionError::Validation {
        path: path.display().to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_meta(meta: &SessionMeta, path: &Path) -> Result<()> {
    if meta.session_id.trim().is_empty() {
        return Err(validation(path, 0, "session_id", "must be nonempty"));
    }
    Ok(())
}

/// Reads `session.toml` and returns its meta plus absolute file paths.
pub fn read_session_file(path: &Path) -> Result<(SessionMeta, SessionPaths)> {
    let text = fs::read_to_string(path).map_err(|e| SessionError::io(path, e))?;
    let file: SessionFile = toml::from_str(&text).map_err(|e| SessionError::Parse {
        path: path.display().to_string(),
        line: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1) as u64)
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let meta = SessionMeta {
        session_id: file.session_id,
        camera_id: file.camera_id,
        fps: file.fps,
        frame_count: file.frame_count,
    };
    check_meta(&meta, path)?;
    let paths = SessionPaths {
        detections: base.join(file.files.detections),
        regions: base.join(file.files.regions),
        annotations: file.files.annotations.map(|p| base.join(p)),
        alarms: file.files.alarms.map(|p| base.join(p)),
        fixations: file.files.fixations.map(|p| base.join(p)),
    };
    Ok((meta, paths))
}

/// Loads a session described by a `session.toml`.
pub fn load_session_file(path: &Path, meta_override: Option<SessionMeta>) -> Result<SessionBundle> {
    let (meta, paths) = read_session_file(path)?;
    load_session(&paths, meta_override.unwrap_or(meta))
}

/// Loads and validates every file of a session.
///
/// Detections come back sorted by frame (stable within a frame) and every
/// `equipment_id` reference is checked against the region config.
pub fn load_session(paths: &SessionPaths, meta: SessionMeta) -> Result<SessionBundle> {
    check_meta(&meta, Path::new("<meta>"))?;
    let regions = read_regions(&paths.regions, &meta.camera_id)?;
    let mut detections = read_detections(&paths.detections, Some(meta.frame_count))?;
    detections.sort_by_key(|d| d.frame);

    let known: BTreeSet<&str> = regions.iter().map(|r| r.equipment_id.as_str()).collect();

    let annotations = match &paths.annotations {
        Some(p) => {
            let rows = read_annotations(p)?;
            check_refs(p, rows.iter().map(|a| a.equipment_id.as_str()), &known, "equipment_id", false)?;
            Some(rows)
        }
        None => None,
    };
    let alarms = match &paths.alarms {
        Some(p) => {
            let rows = read_alarms(p)?;
            check_refs(p, rows.iter().map(|a| a.equipment_id.as_str()), &known, "equipment_id", false)?;
            Some(rows)
        }
        None => None,
    };
    let fixations = match &paths.fixations {
        Some(p) => {
            let rows = read_fixations(p)?;
            check_refs(p, rows.iter().map(|f| f.target.as_str()), &known, "target", true)?;
            Some(rows)
        }
        None => None,
    };

    Ok(SessionBundle {
        meta,
        detections,
        regions,
        annotations,
        alarms,
        fixations,
    })
}

fn check_refs<'a>(
    path: &Path,
    ids: impl Iterator<Item = &'a str>,
    known: &BTreeSet<&str>,
    field: &str,
    allow_other: bool,
) -> Result<()> {
    for (i, id) in ids.enumerate() {
        if allow_other && id == OTHER_TARGET {
            continue;
        }
        if !known.contains(id) {
            return Err(SessionError::MissingReference {
                path: path.display().to_string(),
                line: i as u64 + 2,
                field: field.to_string(),
                equipment_id: id.to_string(),
            });
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|e| SessionError::io(path, e))
}

/// Parses a JSONL detection stream. Blank lines are skipped.
pub fn read_detections(path: &Path, frame_count: Option<u64>) -> Result<Vec<DetectionRecord>> {
    parse_detections(open(path)?, path, frame_count)
}

pub fn parse_detections(
    reader: impl Read,
    path: &Path,
    frame_count: Option<u64>,
) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i as u64 + 1;
        let line = line.map_err(|e| SessionError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line).map_err(|e| SessionError::Parse {
            path: path.display().to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        validate_detection(&rec, frame_count).map_err(|(f, m)| validation(path, lineno, &f, m))?;
        out.push(rec);
    }
    Ok(out)
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Returns the offending field and a message for the first broken invariant.
pub fn validate_detection(
    d: &DetectionRecord,
    frame_count: Option<u64>,
) -> std::result::Result<(), (String, String)> {
    if let Err(m) = d.human_box.check() {
        return Err(("human_box".into(), m.into()));
    }
    if let Err(m) = d.object_box.check() {
        return Err(("object_box".into(), m.into()));
    }
    if !unit_interval(d.object_conf) {
        return Err(("object_conf".into(), format!("{} not in [0, 1]", d.object_conf)));
    }
    if !unit_interval(d.human_conf) {
        return Err(("human_conf".into(), format!("{} not in [0, 1]", d.human_conf)));
    }
    if d.verbs.is_empty() {
        return Err(("verbs".into(), "must be nonempty".into()));
    }
    for (verb, p) in &d.verbs {
        if !unit_interval(*p) {
            return Err((format!("verbs.{verb}"), format!("{p} not in [0, 1]")));
        }
    }
    if let Some(n) = frame_count {
        if d.frame >= n {
            return Err(("frame".into(), format!("{} >= frame_count {n}", d.frame)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionRow {
    equipment_id: String,
    label: String,
    camera_id: String,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    fov_x1: Option<f64>,
    fov_y1: Option<f64>,
    fov_x2: Option<f64>,
    fov_y2: Option<f64>,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(open(path)?))
}

fn csv_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr
        .byte_headers()
        .map_err(|e| SessionError::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    let mut record = csv::ByteRecord::new();
    loop {
        let parsed = rdr
            .read_byte_record(&mut record)
            .and_then(|more| more.then(|| record.deserialize::<T>(Some(&headers))).transpose());
        match parsed {
            Ok(Some(v)) => out.push((record.position().map_or(0, |p| p.line()), v)),
            Ok(None) => break,
            Err(e) => {
                let line = e
                    .position()
                    .or(record.position())
                    .map(|p| p.line())
                    .unwrap_or(0);
                return Err(SessionError::Parse {
                    path: path.display().to_string(),
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Reads the region config, keeping only regions of `camera_id`.
pub fn read_regions(path: &Path, camera_id: &str) -> Result<Vec<EquipmentRegion>> {
    let mut out: Vec<EquipmentRegion> = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, row) in csv_rows::<RegionRow>(path)? {
        let label: EquipmentLabel = row
            .label
            .parse()
            .map_err(|m: String| validation(path, line, "label", m))?;
        let bbox = BoundingBox::new(row.x1, row.y1, row.x2, row.y2);
        bbox.check().map_err(|m| validation(path, line, "box", m))?;
        let fov_box = match (row.fov_x1, row.fov_y1, row.fov_x2, row.fov_y2) {
            (None, None, None, None) => None,
            (Some(a), Some(b), Some(c), Some(d)) => {
                let f = BoundingBox::new(a, b, c, d);
                f.check().map_err(|m| validation(path, line, "fov_box", m))?;
                Some(f)
            }
            _ => return Err(validation(path, line, "fov_box", "either all four fov columns or none")),
        };
        if row.equipment_id.is_empty() {
            return Err(validation(path, line, "equipment_id", "must be nonempty"));
        }
        if !seen.insert((row.camera_id.clone(), row.equipment_id.clone())) {
            return Err(validation(
                path,
                line,
                "equipment_id",
                format!("duplicate {:?} for camera {:?}", row.equipment_id, row.camera_id),
            ));
        }
        if row.camera_id == camera_id {
            out.push(EquipmentRegion {
                equipment_id: row.equipment_id,
                label,
                bbox,
                camera_id: row.camera_id,
                fov_box,
            });
        }
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationInterval>> {
    let mut out = Vec::new();
    for (line, a) in csv_rows::<AnnotationInterval>(path)? {
        if !(a.start_s.is_finite() && a.start_s >= 0.0) {
            return Err(validation(path, line, "start_s", "must be finite and >= 0"));
        }
        if !(a.end_s.is_finite() && a.end_s > a.start_s) {
            return Err(validation(path, line, "end_s", "must be > start_s"));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn read_alarms(path: &Path) -> Result<Vec<AlarmEvent>> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (line, a) in csv_rows::<AlarmEvent>(path)? {
        if !a.onset_s.is_finite() {
            return Err(validation(path, line, "onset_s", "must be finite"));
        }
        if let Some(r) = a.resolved_s {
            if !(r.is_finite() && r > a.onset_s) {
                return Err(validation(path, line, "resolved_s", "must be > onset_s"));
            }
        }
        if !ids.insert(a.alarm_id.clone()) {
            return Err(validation(path, line, "alarm_id", format!("duplicate {:?}", a.alarm_id)));
        }
        out.push(a);
    }
    Ok(out)
}

pub fn read_fixations(path: &Path) -> Result<Vec<FixationEvent>> {
    let rows = csv_rows::<FixationEvent>(path)?;
    for (line, f) in &rows {
        if !(f.start_s.is_finite() && f.end_s.is_finite() && f.start_s < f.end_s) {
            return Err(validation(path, *line, "end_s", "must be > start_s"));
        }
    }
    // Per-trainee fixations must not overlap.
    let mut by_trainee: BTreeMap<Option<&str>, Vec<(u64, &FixationEvent)>> = BTreeMap::new();
    for (line, f) in &rows {
        by_trainee.entry(f.trainee_id.as_deref()).or_default().push((*line, f));
    }
    for list in by_trainee.values_mut() {
        list.sort_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s));
        for w in list.windows(2) {
            if w[1].1.start_s < w[0].1.end_s {
                return Err(validation(
                    path,
                    w[1].0,
                    "start_s",
                    format!("fixation overlaps the one ending at {}", w[0].1.end_s),
                ));
            }
        }
    }
    Ok(rows.into_iter().map(|(_, f)| f).collect())
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> SessionError + '_ {
    move |e| SessionError::io(path, e)
}

/// Serializes rows as CSV with a header, to bytes.
pub fn csv_bytes<T: Serialize>(rows: &[T], header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub const ANNOTATION_HEADER: [&str; 4] = ["equipment_id", "start_s", "end_s", "trainee_id"];
pub const ALARM_HEADER: [&str; 5] = ["alarm_id", "equipment_id", "onset_s", "resolved_s", "false_alarm"];
pub const FIXATION_HEADER: [&str; 4] = ["start_s", "end_s", "target", "trainee_id"];
pub const REGION_HEADER: [&str; 11] = [
    "equipment_id",
    "label",
    "camera_id",
    "x1",
    "y1",
    "x2",
    "y2",
    "fov_x1",
    "fov_y1",
    "fov_x2",
    "fov_y2",
];

pub fn detections_bytes(detections: &[DetectionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for d in detections {
        serde_json::to_writer(&mut out, d).expect("in-memory write");
        out.push(b'\n');
    }
    out
}

pub fn regions_bytes(regions: &[EquipmentRegion]) -> Vec<u8> {
    let rows: Vec<RegionRow> = regions
        .iter()
        .map(|r| RegionRow {
            equipment_id: r.equipment_id.clone(),
            label: r.label.as_str().to_string(),
            camera_id: r.camera_id.clone(),
            x1: r.bbox.x1,
            y1: r.bbox.y1,
            x2: r.bbox.x2,
            y2: r.bbox.y2,
            fov_x1: r.fov_box.map(|b| b.x1),
            fov_y1: r.fov_box.map(|b| b.y1),
            fov_x2: r.fov_box.map(|b| b.x2),
            fov_y2: r.fov_box.map(|b| b.y2),
        })
        .collect();
    csv_bytes(&rows, &REGION_HEADER)
}

pub fn annotations_bytes(rows: &[AnnotationInterval]) -> Vec<u8> {
    csv_bytes(rows, &ANNOTATION_HEADER)
}

pub fn alarms_bytes(rows: &[AlarmEvent]) -> Vec<u8> {
    csv_bytes(rows, &ALARM_HEADER)
}

pub fn fixations_bytes(rows: &[FixationEvent]) -> Vec<u8> {
    csv_bytes(rows, &FIXATION_HEADER)
}

/// Writes a bundle as `session.toml` plus its data files into `dir`.
///
/// Returns the path of the written `session.toml`.
pub fn write_bundle(bundle: &SessionBundle, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(write_err(dir))?;
    let put = |name: &str, bytes: Vec<u8>| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(write_err(&p))?;
        Ok(PathBuf::from(name))
    };
    let files = SessionFiles {
        detections: put("detections.jsonl", detections_bytes(&bundle.detections))?,
        regions: put("regions.csv", regions_bytes(&bundle.regions))?,
        annotations: bundle
            .annotations
            .as_ref()
            .map(|a| put("annotations.csv", annotations_bytes(a)))
            .transpose()?,
        alarms: bundle
            .alarms
            .as_ref()
            .map(|a| put("alarms.csv", alarms_bytes(a)))
            .transpose()?,
        fixations: bundle
            .fixations
            .as_ref()
            .map(|f| put("fixations.csv", fixations_bytes(f)))
            .transpose()?,
    };
    let file = SessionFile {
        session_id: bundle.meta.session_id.clone(),
        camera_id: bundle.meta.camera_id.clone(),
        fps: bundle.meta.fps,
        frame_count: bundle.meta.frame_count,
        files,
    };
    let text = toml::to_string(&file).expect("session file serializes");
    let p = dir.join("session.toml");
    fs::write(&p, text).map_err(write_err(&p))?;
    Ok(p)
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(write_err(parent))?;
    }
    fs::write(path, bytes).map_err(write_err(path))
}

/// Reads a CSV of intervals in annotation schema (e.g. exported predictions).
pub fn read_interval_csv(path: &Path) -> Result<Vec<AnnotationInterval>> {
    read_annotations(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn det_line(frame: u64, conf: f64) -> String {
        format!(
            r#"{{"frame":{frame},"human_box":[0,0,10,10],"object_box":[5,5,20,20],"object_class":"cup","object_conf":{conf},"verbs":{{"hold":0.9}},"human_conf":0.8}}"#
        )
    }

    fn tmp_with(name: &str, body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        (dir, p)
    }

    #[test]
    fn object_conf_out_of_range_names_field() {
        let (_d, p) = tmp_with("d.jsonl", &format!("{}\n{}\n", det_line(0, 0.5), det_line(1, 1.3)));
        let err = read_detections(&p, None).unwrap_err();
        assert_eq!(err.field(), Some("object_conf"));
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let (_d, p) = tmp_with("d.jsonl", &format!("{}\n\n{{oops\n", det_line(0, 0.5)));
        match read_detections(&p, None).unwrap_err() {
            SessionError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn frame_beyond_frame_count_rejected() {
        let (_d, p) = tmp_with("d.jsonl", &det_line(10, 0.5));
        let err = read_detections(&p, Some(10)).unwrap_err();
        assert_eq!(err.field(), Some("frame"));
        assert!(read_detections(&p, Some(11)).is_ok());
    }

    #[test]
    fn unknown_verbs_are_preserved() {
        let line = det_line(0, 0.5).replace(r#""hold":0.9"#, r#""juggle":0.4"#);
        let (_d, p) = tmp_with("d.jsonl", &line);
        let recs = read_detections(&p, None).unwrap();
        assert_eq!(recs[0].verbs.get("juggle"), Some(&0.4));
    }

    #[test]
    fn empty_verbs_and_bad_boxes_rejected() {
        let line = det_line(0, 0.5).replace(r#"{"hold":0.9}"#, "{}");
        let (_d, p) = tmp_with("d.jsonl", &line);
        assert_eq!(read_detections(&p, None).unwrap_err().field(), Some("verbs"));

        let line = det_line(0, 0.5).replace("[5,5,20,20]", "[25,5,20,20]");
        let (_d, p) = tmp_with("d.jsonl", &line);
        assert_eq!(read_detections(&p, None).unwrap_err().field(), Some("object_box"));

        let line = det_line(0, 0.5).replace(r#""hold":0.9"#, r#""hold":1.5"#);
        let (_d, p) = tmp_with("d.jsonl", &line);
        assert_eq!(read_detections(&p, None).unwrap_err().field(), Some("verbs.hold"));
    }

    #[test]
    fn region_label_and_duplicates_validated() {
        let (_d, p) = tmp_with(
            "r.csv",
            "equipment_id,label,camera_id,x1,y1,x2,y2,fov_x1,fov_y1,fov_x2,fov_y2\niv,Toaster,c,0,0,1,1,,,,\n",
        );
        assert_eq!(read_regions(&p, "c").unwrap_err().field(), Some("label"));
        let (_d, p) = tmp_with(
            "r.csv",
            "equipment_id,label,camera_id,x1,y1,x2,y2,fov_x1,fov_y1,fov_x2,fov_y2\niv,IV,c,0,0,1,1,,,,\niv,MV,c,0,0,1,1,,,,\n",
        );
        assert_eq!(read_regions(&p, "c").unwrap_err().field(), Some("equipment_id"));
        let (_d, p) = tmp_with(
            "r.csv",
            "equipment_id,label,camera_id,x1,y1,x2,y2,fov_x1,fov_y1,fov_x2,fov_y2\niv,IV,c,0,0,1,1,,,,\niv,IV,other,0,0,1,1,0,0,5,5\n",
        );
        let regions = read_regions(&p, "c").unwrap();
        assert_eq!(regions.len(), 1);
        assert_eq!(regions[0].fov_box, None);
    }

    #[test]
    fn annotation_alarm_fixation_invariants() {
        let (_d, p) = tmp_with("a.csv", "equipment_id,start_s,end_s,trainee_id\niv,5,5,\n");
        assert_eq!(read_annotations(&p).unwrap_err().field(), Some("end_s"));
        let (_d, p) = tmp_with("a.csv", "equipment_id,start_s,end_s,trainee_id\niv,-1,5,\n");
        assert_eq!(read_annotations(&p).unwrap_err().field(), Some("start_s"));

        let (_d, p) = tmp_with(
            "al.csv",
            "alarm_id,equipment_id,onset_s,resolved_s,false_alarm\na1,iv,100,100,false\n",
        );
        assert_eq!(read_alarms(&p).unwrap_err().field(), Some("resolved_s"));
        let (_d, p) = tmp_with(
            "al.csv",
            "alarm_id,equipment_id,onset_s,resolved_s,false_alarm\na1,iv,100,,false\n",
        );
        assert_eq!(read_alarms(&p).unwrap()[0].resolved_s, None);

        let (_d, p) = tmp_with(
            "f.csv",
            "start_s,end_s,target,trainee_id\n0,2,iv,t1\n1,3,mv,t1\n",
        );
        assert_eq!(read_fixations(&p).unwrap_err().field(), Some("start_s"));
        let (_d, p) = tmp_with(
            "f.csv",
            "start_s,end_s,target,trainee_id\n0,2,iv,t1\n1,3,mv,t2\n",
        );
        assert_eq!(read_fixations(&p).unwrap().len(), 2);
    }
}
