//! Per-user sessions that buffer a fingertip point stream, segment it into
//! strokes and turn each stroke into a thresholded gesture decision.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierModel, Prediction};
use crate::error::{Error, Result};
use crate::gestures::GestureClass;
use crate::trajectory::{Point, RawTrajectory};

/// Buffers close forcibly once they reach this many points.
pub const MAX_BUFFER_POINTS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SegmentMode {
    /// Strokes end only on an explicit [`Session::end_stroke`].
    #[default]
    Manual,
    /// Strokes also end when the fingertip holds still.
    Dwell,
}

impl FromStr for SegmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(SegmentMode::Manual),
            "dwell" => Ok(SegmentMode::Dwell),
            _ => Err(Error::invalid(format!("unknown segmentation mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub mode: SegmentMode,
    pub dwell_ms: u64,
    /// Pixels the tip may drift while still counting as holding still.
    pub move_epsilon: f64,
    pub min_points: usize,
    pub confidence_threshold: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            mode: SegmentMode::Manual,
            dwell_ms: 400,
            move_epsilon: 3.0,
            min_points: 10,
            confidence_threshold: 0.85,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dwell_ms == 0 {
            return Err(Error::invalid("dwell_ms must be positive"));
        }
        if !(self.move_epsilon.is_finite() && self.move_epsilon >= 0.0) {
            return Err(Error::invalid("move_epsilon must be finite and non-negative"));
        }
        if self.min_points < 2 || self.min_points > MAX_BUFFER_POINTS {
            return Err(Error::invalid(format!(
                "min_points must be in [2, {MAX_BUFFER_POINTS}]"
            )));
        }
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold < 1.0) {
            return Err(Error::invalid("confidence_threshold must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Decision {
    Class(GestureClass),
    Unclassified,
}

impl Decision {
    pub fn class(self) -> Option<GestureClass> {
        match self {
            Decision::Class(c) => Some(c),
            Decision::Unclassified => None,
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Class(c) => f.write_str(c.name()),
            Decision::Unclassified => f.write_str("Unclassified"),
        }
    }
}

impl Serialize for Decision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "Unclassified" {
            return Ok(Decision::Unclassified);
        }
        s.parse().map(Decision::Class).map_err(serde::de::Error::custom)
    }
}

/// The argmax class when its probability is strictly above `threshold`.
pub fn decide(prediction: &Prediction, threshold: f64) -> Decision {
    if prediction.confidence > threshold {
        Decision::Class(prediction.class)
    } else {
        Decision::Unclassified
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GestureEvent {
    pub session_id: String,
    pub decision: Decision,
    pub prediction: Prediction,
    #[serde(skip)]
    pub trajectory: RawTrajectory,
    /// Wall-clock time spent in preprocessing and prediction.
    pub latency_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    Drawing,
}

/// One user's stream. Calls on a session must be serialized by the caller;
/// many sessions may share one model.
#[derive(Debug)]
pub struct Session {
    id: String,
    model: Arc<ClassifierModel>,
    config: SegmenterConfig,
    frame: (u32, u32),
    buffer: Vec<Point>,
    /// Index of the point where the current still period began.
    still_from: usize,
    /// Where a dwell last closed a stroke. Points that stay within
    /// `move_epsilon` of it are ignored, so a finger that keeps resting after
    /// a gesture does not open a new one.
    rest: Option<Point>,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        model: Arc<ClassifierModel>,
        config: SegmenterConfig,
        frame: (u32, u32),
    ) -> Result<Self> {
        config.validate()?;
        if frame.0 == 0 || frame.1 == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        Ok(Session {
            id: id.into(),
            model,
            config,
            frame,
            buffer: Vec::new(),
            still_from: 0,
            rest: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        if self.buffer.is_empty() {
            SessionState::Idle
        } else {
            SessionState::Drawing
        }
    }

    pub fn buffer(&self) -> &[Point] {
        &self.buffer
    }

    pub fn config(&self) -> &SegmenterConfig {
        &self.config
    }

    pub fn frame(&self) -> (u32, u32) {
        self.frame
    }

    pub fn model(&self) -> &Arc<ClassifierModel> {
        &self.model
    }

    /// Applies a new configuration; the current buffer is kept.
    pub fn set_config(&mut self, config: SegmenterConfig) -> Result<()> {
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Drops any buffered points.
    pub fn reset(&mut self) {
        self.buffer.clear();
        self.still_from = 0;
        self.rest = None;
    }

    /// Appends a point. Emits an event when a dwell closes the stroke or the
    /// buffer reaches [`MAX_BUFFER_POINTS`].
    pub fn push_point(&mut self, point: Point) -> Result<Option<GestureEvent>> {
        let (w, h) = (self.frame.0 as f64, self.frame.1 as f64);
        if !(point.x.is_finite() && point.y.is_finite()) {
            return Err(Error::invalid("point is not finite"));
        }
        if point.x < 0.0 || point.x > w || point.y < 0.0 || point.y > h {
            return Err(Error::invalid(format!(
                "point ({}, {}) lies outside the {}x{} frame",
                point.x, point.y, self.frame.0, self.frame.1
            )));
        }
        let last_t = self.buffer.iter().rev().find_map(|p| p.t_ms);
        if let (Some(last), Some(got)) = (last_t, point.t_ms) {
            if got < last {
                return Err(Error::Ordering { last, got });
            }
        }
        if self.config.mode == SegmentMode::Dwell && point.t_ms.is_none() {
            return Err(Error::invalid("dwell segmentation needs timestamped points"));
        }

        if let Some(rest) = self.rest {
            if rest.distance(&point) < self.config.move_epsilon {
                return Ok(None);
            }
            self.rest = None;
        }
        self.buffer.push(point);
        if self.buffer.len() >= MAX_BUFFER_POINTS {
            return self.end_stroke().map(Some);
        }
        if self.config.mode != SegmentMode::Dwell {
            return Ok(None);
        }

        let anchor = self.buffer[self.still_from];
        if anchor.distance(&point) >= self.config.move_epsilon {
            self.still_from = self.buffer.len() - 1;
            return Ok(None);
        }
        let held = point.t_ms.unwrap_or(0).saturating_sub(anchor.t_ms.unwrap_or(0));
        if held < self.config.dwell_ms {
            return Ok(None);
        }
        // The stationary tail is not part of the gesture.
        self.buffer.truncate(self.still_from + 1);
        if self.buffer.len() < self.config.min_points {
            self.reset();
            self.rest = Some(anchor);
            return Ok(None);
        }
        let event = self.end_stroke();
        self.rest = Some(anchor);
        event.map(Some)
    }

    /// Classifies the buffered stroke and returns the session to Idle.
    pub fn end_stroke(&mut self) -> Result<GestureEvent> {
        let points = std::mem::take(&mut self.buffer);
        self.still_from = 0;
        self.rest = None;
        if points.len() < self.config.min_points {
            return Err(Error::TooShort {
                got: points.len(),
                min: self.config.min_points,
            });
        }
        let trajectory = RawTrajectory::new(points, self.frame.0, self.frame.1)?;
        let start = Instant::now();
        let prediction = self.model.classify(&trajectory)?;
        let latency_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(GestureEvent {
            session_id: self.id.clone(),
            decision: decide(&prediction, self.config.confidence_threshold),
            prediction,
            trajectory,
            latency_ms,
        })
    }
}
