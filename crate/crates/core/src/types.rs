//! Session-level domain types shared by every stage of the pipeline.
//!
//! Everything here is plain data. Validation lives in [`crate::session_io`],
//! which is the only place records enter the system from outside.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Frame rate as an exact positive rational (`num / den` frames per second).
///
/// NTSC-style rates such as `30000/1001` are kept exact; the frame to
/// seconds conversion is `frame * den / num`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fps {
    num: u64,
    den: u64,
}

impl Fps {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        if num == 0 || den == 0 {
            return None;
        }
        let g = gcd(num, den);
        Some(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(fps: u64) -> Option<Self> {
        Self::new(fps, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Start time of `frame` in seconds.
    pub fn frame_to_secs(&self, frame: u64) -> f64 {
        if self.den == 1 {
            frame as f64 / self.num as f64
        } else {
            (frame as f64 * self.den as f64) / self.num as f64
        }
    }

    /// Duration of `frames` frames in seconds.
    pub fn frames_to_secs(&self, frames: u64) -> f64 {
        self.frame_to_secs(frames)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid frame rate {0:?}: expected a positive integer, a ratio like 30000/1001, or a decimal")]
pub struct FpsParseError(pub String);

impl FromStr for Fps {
    type Err = FpsParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || FpsParseError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: u64 = n.trim().parse().map_err(|_| err())?;
            let d: u64 = d.trim().parse().map_err(|_| err())?;
            return Fps::new(n, d).ok_or_else(err);
        }
        if let Some((whole, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            let den = 10u64.pow(frac.len() as u32);
            let whole: u64 = if whole.is_empty() {
                0
            } else {
                whole.parse().map_err(|_| err())?
            };
            let frac: u64 = frac.parse().map_err(|_| err())?;
            let num = whole
                .checked_mul(den)
                .and_then(|w| w.checked_add(frac))
                .ok_or_else(err)?;
            return Fps::new(num, den).ok_or_else(err);
        }
        let n: u64 = s.parse().map_err(|_| err())?;
        Fps::integer(n).ok_or_else(err)
    }
}

impl Serialize for Fps {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Fps::integer(n).ok_or_else(|| serde::de::Error::custom("fps must be > 0")),
            Raw::Float(x) => format!("{x}").parse().map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Identity and timing of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub camera_id: String,
    pub fps: Fps,
    pub frame_count: u64,
}

impl SessionMeta {
    pub fn duration_s(&self) -> f64 {
        self.fps.frames_to_secs(self.frame_count)
    }
}

/// Axis-aligned pixel box, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }

    pub fn expand(&self, margin: f64) -> Self {
        Self::new(
            self.x1 - margin,
            self.y1 - margin,
            self.x2 + margin,
            self.y2 + margin,
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.x1 * k, self.y1 * k, self.x2 * k, self.y2 * k)
    }

    /// First violated invariant, if any.
    pub fn check(&self) -> Result<(), &'static str> {
        let c = [self.x1, self.y1, self.x2, self.y2];
        if c.iter().any(|v| !v.is_finite()) {
            return Err("coordinates must be finite");
        }
        if c.iter().any(|v| *v < 0.0) {
            return Err("coordinates must be >= 0");
        }
        if self.x1 > self.x2 || self.y1 > self.y2 {
            return Err("requires x1 <= x2 and y1 <= y2");
        }
        Ok(())
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// One candidate human-object pair in one frame, as emitted by the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub frame: u64,
    pub human_box: BoundingBox,
    pub object_box: BoundingBox,
    pub object_class: String,
    pub object_conf: f64,
    pub verbs: BTreeMap<String, f64>,
    pub human_conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trainee_id: Option<String>,
}

/// Closed set of tracked equipment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EquipmentLabel {
    IV,
    MV,
    ProPaq,
    #[serde(rename = "patient")]
    Patient,
}

impl EquipmentLabel {
    pub const ALL: [EquipmentLabel; 4] = [Self::IV, Self::MV, Self::ProPaq, Self::Patient];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::IV => "IV",
            Self::MV => "MV",
            Self::ProPaq => "ProPaq",
            Self::Patient => "patient",
        }
    }

    pub fn is_equipment(&self) -> bool {
        !matches!(self, Self::Patient)
    }
}

impl fmt::Display for EquipmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EquipmentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown equipment label {s:?} (expected IV, MV, ProPaq or patient)"))
    }
}

/// A configured spatial zone standing for one piece of equipment.
#[derive(Debug, Clone, PartialEq)]
pub struct EquipmentRegion {
    pub equipment_id: String,
    pub label: EquipmentLabel,
    pub bbox: BoundingBox,
    pub camera_id: String,
    pub fov_box: Option<BoundingBox>,
}

impl EquipmentRegion {
    pub fn fov(&self) -> BoundingBox {
        self.fov_box.unwrap_or(self.bbox)
    }
}

/// Expert-annotated interaction span, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationInterval {
    pub equipment_id: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub trainee_id: Option<String>,
}

impl AnnotationInterval {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub alarm_id: String,
    pub equipment_id: String,
    pub onset_s: f64,
    #[serde(default)]
    pub resolved_s: Option<f64>,
    #[serde(default)]
    pub false_alarm: bool,
}

/// A gaze fixation on an equipment area (or `"other"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub target: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub trainee_id: Option<String>,
}

impl FixationEvent {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

pub const OTHER_TARGET: &str = "other";

/// Everything known about one recorded session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBundle {
    pub meta: SessionMeta,
    pub detections: Vec<DetectionRecord>,
    pub regions: Vec<EquipmentRegion>,
    pub annotations: Option<Vec<AnnotationInterval>>,
    pub alarms: Option<Vec<AlarmEvent>>,
    pub fixations: Option<Vec<FixationEvent>>,
}

impl SessionBundle {
    pub fn region(&self, equipment_id: &str) -> Option<&EquipmentRegion> {
        self.regions.iter().find(|r| r.equipment_id == equipment_id)
    }

    /// Equipment ids in ascending order.
    pub fn equipment_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.regions.iter().map(|r| r.equipment_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

pub(crate) fn empty_as_none<'de, D>(d: D) -> Result<Option<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| !s.is_empty()))
}
