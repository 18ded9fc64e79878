//! Air-writing gesture recognition: trajectory preprocessing, synthetic
//! gesture data, four sequence classifiers, a fingertip regressor and the
//! streaming session that ties them to a live point feed.

pub mod checks;
pub mod classifiers;
pub mod error;
pub mod evaluation;
pub mod fingertip;
pub mod gestures;
pub mod nn;
pub mod streaming;
pub mod trajectory;

pub use classifiers::{ClassifierKind, ClassifierModel, Prediction, TrainConfig};
pub use error::{Error, Result};
pub use gestures::{GestureClass, LabeledTrajectory, NoiseParams};
pub use streaming::{Decision, GestureEvent, SegmentMode, SegmenterConfig, Session};
pub use trajectory::{FeatureSequence, NormTrajectory, Point, RawTrajectory};
