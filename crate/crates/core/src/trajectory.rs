//! Fingertip trajectories and the preprocessing chain shared by every
//! classifier: smooth, resample to a fixed length, normalize into the unit
//! box, and expand into per-step features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of points every trajectory is resampled to before classification.
pub const RESAMPLE_LEN: usize = 50;

/// Default centered moving-average window.
pub const DEFAULT_SMOOTH_WINDOW: usize = 3;

/// Relative bounding-box diagonal below which a stroke is rejected.
const DEGENERATE_FRACTION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub t_ms: Option<u64>,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y, t_ms: None }
    }

    pub const fn at(x: f64, y: f64, t_ms: u64) -> Self {
        Point {
            x,
            y,
            t_ms: Some(t_ms),
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A pixel-space trajectory as produced by a fingertip detector.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTrajectory {
    points: Vec<Point>,
    frame_width: u32,
    frame_height: u32,
}

impl RawTrajectory {
    pub fn new(points: Vec<Point>, frame_width: u32, frame_height: u32) -> Result<Self> {
        if frame_width == 0 || frame_height == 0 {
            return Err(Error::invalid("frame dimensions must be positive"));
        }
        if points.is_empty() {
            return Err(Error::invalid("trajectory must contain at least one point"));
        }
        let (w, h) = (frame_width as f64, frame_height as f64);
        let mut last_t: Option<u64> = None;
        for (i, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::invalid(format!("point {i} is not finite")));
            }
            if p.x < 0.0 || p.x > w || p.y < 0.0 || p.y > h {
                return Err(Error::invalid(format!(
                    "point {i} ({}, {}) lies outside the {frame_width}x{frame_height} frame",
                    p.x, p.y
                )));
            }
            if let Some(t) = p.t_ms {
                if let Some(last) = last_t {
                    if t < last {
                        return Err(Error::Ordering { last, got: t });
                    }
                }
                last_t = Some(t);
            }
        }
        Ok(RawTrajectory {
            points,
            frame_width,
            frame_height,
        })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame(&self) -> (u32, u32) {
        (self.frame_width, self.frame_height)
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Total length of the piecewise-linear path.
    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    // Points derived from a valid trajectory by convex combinations stay in frame.
    fn derived(&self, points: Vec<Point>) -> RawTrajectory {
        RawTrajectory {
            points,
            frame_width: self.frame_width,
            frame_height: self.frame_height,
        }
    }
}

/// A trajectory scaled into the unit box with its aspect ratio preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct NormTrajectory {
    points: Vec<Point>,
}

impl NormTrajectory {
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-step classifier input: `(x, y, dx, dy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    rows: Vec<[f64; 4]>,
}

impl FeatureSequence {
    pub const WIDTH: usize = 4;

    pub fn rows(&self) -> &[[f64; 4]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row-major `len × 4` copy.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Centered moving average, truncated at the sequence ends.
pub fn smooth(raw: &RawTrajectory, window: usize) -> Result<RawTrajectory> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    if window == 1 {
        return Ok(raw.clone());
    }
    let half = window / 2;
    let pts = raw.points();
    let n = pts.len();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let (sx, sy) = pts[lo..=hi]
                .iter()
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            Point {
                x: sx / count,
                y: sy / count,
                t_ms: pts[i].t_ms,
            }
        })
        .collect();
    Ok(raw.derived(out))
}

/// Resamples to `len` points spaced at equal arc length along the path.
pub fn resample(raw: &RawTrajectory, len: usize) -> Result<RawTrajectory> {
    if len < 2 {
        return Err(Error::invalid(format!("resample length must be >= 2, got {len}")));
    }
    if raw.len() < 2 {
        return Err(Error::Degenerate("cannot resample a single point".into()));
    }
    let total = raw.arc_length();
    if total <= 0.0 {
        return Err(Error::Degenerate("path has zero arc length".into()));
    }
    let targets: Vec<f64> = (0..len)
        .map(|i| total * i as f64 / (len - 1) as f64)
        .collect();
    Ok(raw.derived(sample_at_arc_lengths(raw.points(), &targets)))
}

/// Samples the polyline at the given non-decreasing arc-length positions.
///
/// The first and last targets are snapped to the path endpoints when they
/// equal `0` and the total length respectively. Timestamps are linearly
/// interpolated when both segment ends carry one.
pub(crate) fn sample_at_arc_lengths(points: &[Point], targets: &[f64]) -> Vec<Point> {
    debug_assert!(points.len() >= 2);
    let mut cumulative = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in points.windows(2) {
        acc += w[0].distance(&w[1]);
        cumulative.push(acc);
    }
    let total = acc;
    let last = points.len() - 1;

    let mut seg = 0;
    targets
        .iter()
        .map(|&s| {
            if s <= 0.0 {
                return points[0];
            }
            if s >= total {
                return points[last];
            }
            while seg + 1 < last && cumulative[seg + 1] < s {
                seg += 1;
            }
            let (a, b) = (&points[seg], &points[seg + 1]);
            let seg_len = cumulative[seg + 1] - cumulative[seg];
            let frac = if seg_len > 0.0 {
                ((s - cumulative[seg]) / seg_len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let t_ms = match (a.t_ms, b.t_ms) {
                (Some(ta), Some(tb)) => {
                    Some((ta as f64 + (tb as f64 - ta as f64) * frac).round() as u64)
                }
                _ => None,
            };
            Point {
                x: a.x + (b.x - a.x) * frac,
                y: a.y + (b.y - a.y) * frac,
                t_ms,
            }
        })
        .collect()
}

/// Uniform, aspect-preserving scale into `[0,1]²`, centered along the short axis.
pub fn normalize(raw: &RawTrajectory) -> Result<NormTrajectory> {
    let (fw, fh) = raw.frame();
    let eps = DEGENERATE_FRACTION * fw.max(fh) as f64;
    let pts = raw.points();
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in pts {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let (bw, bh) = (max_x - min_x, max_y - min_y);
    if bw.hypot(bh) < eps {
        return Err(Error::Degenerate(format!(
            "bounding-box diagonal {} below {eps}",
            bw.hypot(bh)
        )));
    }
    let extent = bw.max(bh);
    let off_x = (1.0 - bw / extent) / 2.0;
    let off_y = (1.0 - bh / extent) / 2.0;
    let points = pts
        .iter()
        .map(|p| Point {
            x: ((p.x - min_x) / extent + off_x).clamp(0.0, 1.0),
            y: ((p.y - min_y) / extent + off_y).clamp(0.0, 1.0),
            t_ms: p.t_ms,
        })
        .collect();
    Ok(NormTrajectory { points })
}

pub fn featurize(norm: &NormTrajectory) -> FeatureSequence {
    let pts = norm.points();
    let rows = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (dx, dy) = if i == 0 {
                (0.0, 0.0)
            } else {
                (p.x - pts[i - 1].x, p.y - pts[i - 1].y)
            };
            [p.x, p.y, dx, dy]
        })
        .collect();
    FeatureSequence { rows }
}

/// The preprocessing settings a trained model was built with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub resample_len: usize,
    pub smooth_window: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resample_len: RESAMPLE_LEN,
            smooth_window: DEFAULT_SMOOTH_WINDOW,
        }
    }
}

impl PreprocessConfig {
    /// smooth → resample → normalize.
    pub fn apply(&self, raw: &RawTrajectory) -> Result<NormTrajectory> {
        let smoothed = smooth(raw, self.smooth_window)?;
        let resampled = resample(&smoothed, self.resample_len)?;
        normalize(&resampled)
    }
}

/// One line of the trajectory text format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub label: Option<String>,
    pub frame: [u32; 2],
    pub points: Vec<PointRepr>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointRepr {
    Timed(f64, f64, u64),
    Bare(f64, f64),
}

impl TrajectoryRecord {
    pub fn new(label: Option<String>, traj: &RawTrajectory) -> Self {
        let (w, h) = traj.frame();
        let points = traj
            .points()
            .iter()
            .map(|p| match p.t_ms {
                Some(t) => PointRepr::Timed(p.x, p.y, t),
                None => PointRepr::Bare(p.x, p.y),
            })
            .collect();
        TrajectoryRecord {
            label,
            frame: [w, h],
            points,
        }
    }

    pub fn to_trajectory(&self) -> Result<RawTrajectory> {
        let points = self
            .points
            .iter()
            .map(|p| match *p {
                PointRepr::Timed(x, y, t) => Point::at(x, y, t),
                PointRepr::Bare(x, y) => Point::new(x, y),
            })
            .collect();
        RawTrajectory::new(points, self.frame[0], self.frame[1])
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory records always serialize")
    }

    /// Parses one line; `line_no` is 1-based and only used for diagnostics.
    pub fn from_line(line: &str, line_no: usize) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(xy: &[(f64, f64)]) -> RawTrajectory {
        let pts = xy.iter().map(|&(x, y)| Point::new(x, y)).collect();
        RawTrajectory::new(pts, 640, 480).unwrap()
    }

    fn xy(t: &[Point]) -> Vec<(f64, f64)> {
        t.iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn smooth_window_one_is_identity() {
        let t = raw(&[(1.0, 2.0), (5.0, 3.0), (7.0, 9.0)]);
        assert_eq!(smooth(&t, 1).unwrap(), t);
    }

    #[test]
    fn smooth_truncates_at_boundaries() {
        let t = raw(&[(0.0, 0.0), (3.0, 0.0), (0.0, 0.0)]);
        let s = smooth(&t, 3).unwrap();
        assert_eq!(xy(s.points()), vec![(1.5, 0.0), (1.0, 0.0), (1.5, 0.0)]);
    }

    #[test]
    fn smooth_constant_unchanged() {
        let t = raw(&[(2.0, 2.0); 5]);
        assert_eq!(smooth(&t, 3).unwrap(), t);
    }

    #[test]
    fn smooth_rejects_even_and_zero_windows() {
        let t = raw(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(smooth(&t, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(smooth(&t, 4), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn smooth_keeps_timestamps() {
        let pts = vec![Point::at(0.0, 0.0, 0), Point::at(3.0, 0.0, 33), Point::at(0.0, 0.0, 66)];
        let t = RawTrajectory::new(pts, 10, 10).unwrap();
        let s = smooth(&t, 3).unwrap();
        let ts: Vec<_> = s.points().iter().map(|p| p.t_ms).collect();
        assert_eq!(ts, vec![Some(0), Some(33), Some(66)]);
    }

    #[test]
    fn resample_midpoint() {
        let r = resample(&raw(&[(0.0, 0.0), (1.0, 1.0)]), 3).unwrap();
        assert_eq!(xy(r.points()), vec![(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
    }

    #[test]
    fn resample_walks_corners() {
        let r = resample(&raw(&[(0.0, 0.0), (2.0, 0.0), (2.0, 1.0)]), 4).unwrap();
        assert_eq!(
            xy(r.points()),
            vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (2.0, 1.0)]
        );
    }

    #[test]
    fn resample_is_idempotent_on_uniform_input() {
        let pts: Vec<_> = (0..10).map(|i| (i as f64 * 3.0, i as f64 * 4.0)).collect();
        let t = raw(&pts);
        let r = resample(&t, 10).unwrap();
        for (a, b) in r.points().iter().zip(t.points()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_rejects_degenerate_paths() {
        assert!(matches!(
            resample(&raw(&[(1.0, 1.0)]), 5),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            resample(&raw(&[(1.0, 1.0), (1.0, 1.0)]), 5),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn normalize_square() {
        let n = normalize(&raw(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)])).unwrap();
        assert_eq!(
            xy(n.points()),
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        );
    }

    #[test]
    fn normalize_centers_short_axis() {
        let n = normalize(&raw(&[(0.0, 0.0), (4.0, 0.0)])).unwrap();
        assert_eq!(xy(n.points()), vec![(0.0, 0.5), (1.0, 0.5)]);
    }

    #[test]
    fn normalize_rejects_single_location() {
        assert!(matches!(
            normalize(&raw(&[(3.0, 3.0); 4])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn featurize_deltas() {
        let n = normalize(&raw(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])).unwrap();
        let f = featurize(&n);
        assert_eq!(f.len(), 4);
        assert_eq!(&f.rows()[0][2..], &[0.0, 0.0]);
        let step = 1.0 / 3.0;
        for row in &f.rows()[1..] {
            assert!((row[2] - step).abs() < 1e-12 && (row[3] - step).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_trajectory_validation() {
        assert!(RawTrajectory::new(vec![], 10, 10).is_err());
        assert!(RawTrajectory::new(vec![Point::new(11.0, 0.0)], 10, 10).is_err());
        assert!(RawTrajectory::new(vec![Point::new(f64::NAN, 0.0)], 10, 10).is_err());
        let out_of_order = vec![Point::at(0.0, 0.0, 10), Point::at(1.0, 0.0, 5)];
        assert!(matches!(
            RawTrajectory::new(out_of_order, 10, 10),
            Err(Error::Ordering { last: 10, got: 5 })
        ));
    }

    #[test]
    fn record_line_round_trip() {
        let t = RawTrajectory::new(
            vec![Point::at(1.25, 2.5, 0), Point::at(3.0, 4.0, 33)],
            640,
            480,
        )
        .unwrap();
        let rec = TrajectoryRecord::new(Some("Circle".into()), &t);
        let line = rec.to_line();
        assert_eq!(
            line,
            r#"{"label":"Circle","frame":[640,480],"points":[[1.25,2.5,0],[3.0,4.0,33]]}"#
        );
        let back = TrajectoryRecord::from_line(&line, 1).unwrap();
        assert_eq!(back.to_trajectory().unwrap(), t);
    }

    #[test]
    fn record_accepts_untimed_points_and_null_label() {
        let rec =
            TrajectoryRecord::from_line(r#"{"label":null,"frame":[10,10],"points":[[1,2],[3,4]]}"#, 1)
                .unwrap();
        assert_eq!(rec.label, None);
        assert_eq!(rec.to_trajectory().unwrap().points()[1], Point::new(3.0, 4.0));
    }

    #[test]
    fn record_parse_error_names_line() {
        match TrajectoryRecord::from_line("{not json", 7) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("unexpected {other:?}"),
        }
    }
}
