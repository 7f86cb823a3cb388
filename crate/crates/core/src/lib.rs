//! Post-processing and assessment for trainee-equipment interaction detections.
//!
//! The pipeline runs in stages, each usable on its own:
//!
//! 1. [`mapping`]: per-frame detector output to per-equipment score series.
//! 2. [`segmentation`]: Gaussian smoothing and threshold segmentation into
//!    interaction intervals; [`calibration`] grid-searches the parameters.
//! 3. [`evaluation`]: frame-level F1 and interval-level temporal metrics
//!    against expert annotations.
//! 4. [`cta`]: task-analysis performance metrics for after-action review.
//!
//! [`label_assist`] covers detection-level label preparation, [`synth`]
//! generates sessions with known ground truth and [`oracle`] holds naive
//! reference implementations for cross-checking.

pub mod calibration;
pub mod config;
pub mod cta;
pub mod evaluation;
pub mod exec;
pub mod label_assist;
pub mod mapping;
pub mod oracle;
pub mod report;
pub mod segmentation;
pub mod session_io;
pub mod synth;
pub mod types;

pub use exec::Exec;
pub use types::*;
