//! Active learning for object detection, independent of the detector.
//!
//! Images are scored from detector outputs (reference detections, their
//! region proposals, and detections on noise-corrupted copies) by
//! classification uncertainty, localization tightness and localization
//! stability. The [`selection`] module runs labeling rounds on those scores,
//! [`evaluation`] measures what the labels bought, and [`sim`] provides a
//! seeded synthetic detector so whole campaigns run in seconds.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod records;
pub mod report;
pub mod scoring;
pub mod selection;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{iou, BBox};
pub use records::{ClassDistribution, Detection, GroundTruthObject, ImageRecord, NoisyPass, Pool};
pub use scoring::{informativeness, Method, MethodName, Score};
pub use selection::{rank, CampaignState, UndefinedPlacement};
