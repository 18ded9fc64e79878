//! The ten gesture classes, their canonical unistroke templates, a seeded
//! synthetic generator and dataset files.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{resample, sample_at_arc_lengths, Point, RawTrajectory, TrajectoryRecord};

/// Side of the square frame templates are drawn in.
pub const TEMPLATE_FRAME: u32 = 480;
/// Points in a dense template polyline.
pub const TEMPLATE_POINTS: usize = 128;
/// Points in a synthesized stroke before dropout.
pub const SYNTH_POINTS: usize = 64;
/// Nominal capture rate used for synthetic timestamps.
pub const SAMPLES_PER_SECOND: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GestureClass {
    SwipeLeft,
    SwipeRight,
    SwipeUp,
    SwipeDown,
    Circle,
    Rectangle,
    CheckMark,
    Cross,
    Caret,
    Star,
}

impl GestureClass {
    pub const COUNT: usize = 10;

    pub const ALL: [GestureClass; 10] = [
        GestureClass::SwipeLeft,
        GestureClass::SwipeRight,
        GestureClass::SwipeUp,
        GestureClass::SwipeDown,
        GestureClass::Circle,
        GestureClass::Rectangle,
        GestureClass::CheckMark,
        GestureClass::Cross,
        GestureClass::Caret,
        GestureClass::Star,
    ];

    /// Stable serialization code, 0..=9.
    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::SwipeLeft => "SwipeLeft",
            GestureClass::SwipeRight => "SwipeRight",
            GestureClass::SwipeUp => "SwipeUp",
            GestureClass::SwipeDown => "SwipeDown",
            GestureClass::Circle => "Circle",
            GestureClass::Rectangle => "Rectangle",
            GestureClass::CheckMark => "CheckMark",
            GestureClass::Cross => "Cross",
            GestureClass::Caret => "Caret",
            GestureClass::Star => "Star",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown gesture label {s:?}")))
    }
}

impl Serialize for GestureClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for GestureClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrajectory {
    pub label: GestureClass,
    pub trajectory: RawTrajectory,
}

/// Drawing-variability model. Jitter is a fraction of the template extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseParams {
    pub jitter_sigma: f64,
    pub rotation_sigma: f64,
    pub scale_sigma: f64,
    pub point_dropout: f64,
    pub speed_warp_sigma: f64,
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams {
        jitter_sigma: 0.0,
        rotation_sigma: 0.0,
        scale_sigma: 0.0,
        point_dropout: 0.0,
        speed_warp_sigma: 0.0,
    };

    /// The default acceptance noise level.
    pub const DEFAULT: NoiseParams = NoiseParams {
        jitter_sigma: 0.03,
        rotation_sigma: 0.12,
        scale_sigma: 0.10,
        point_dropout: 0.05,
        speed_warp_sigma: 0.15,
    };

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("jitter_sigma", self.jitter_sigma),
            ("rotation_sigma", self.rotation_sigma),
            ("scale_sigma", self.scale_sigma),
            ("point_dropout", self.point_dropout),
            ("speed_warp_sigma", self.speed_warp_sigma),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        if self.point_dropout >= 1.0 {
            return Err(Error::invalid("point_dropout must be < 1"));
        }
        Ok(())
    }
}

/// Vertices of each class's control polyline in a 480×480 frame (y grows downward).
fn control_polyline(class: GestureClass) -> Vec<(f64, f64)> {
    match class {
        GestureClass::SwipeRight => vec![(80.0, 240.0), (400.0, 240.0)],
        GestureClass::SwipeLeft => vec![(400.0, 240.0), (80.0, 240.0)],
        GestureClass::SwipeUp => vec![(240.0, 400.0), (240.0, 80.0)],
        GestureClass::SwipeDown => vec![(240.0, 80.0), (240.0, 400.0)],
        GestureClass::Rectangle => vec![
            (100.0, 130.0),
            (380.0, 130.0),
            (380.0, 350.0),
            (100.0, 350.0),
            (100.0, 130.0),
        ],
        // The long leg rises only about 16°, so under heavy jitter a check
        // mark drifts toward a rotated right swipe.
        GestureClass::CheckMark => vec![(100.0, 220.0), (150.0, 260.0), (390.0, 190.0)],
        GestureClass::Cross => vec![
            (120.0, 120.0),
            (360.0, 360.0),
            (360.0, 120.0),
            (120.0, 360.0),
        ],
        GestureClass::Caret => vec![(100.0, 360.0), (240.0, 120.0), (380.0, 360.0)],
        GestureClass::Star => {
            // Outer vertices visited 0, 2, 4, 1, 3, 0.
            let outer: Vec<(f64, f64)> = (0..5)
                .map(|k| {
                    let a = -PI / 2.0 + TAU * k as f64 / 5.0;
                    (240.0 + 160.0 * a.cos(), 250.0 + 160.0 * a.sin())
                })
                .collect();
            [0, 2, 4, 1, 3, 0].iter().map(|&k| outer[k]).collect()
        }
        GestureClass::Circle => unreachable!("circle is parametric"),
    }
}

/// The ideal dense polyline for `class` in a 480×480 frame.
pub fn template(class: GestureClass) -> RawTrajectory {
    let points = if class == GestureClass::Circle {
        // Clockwise on screen from the top, closed.
        let mut pts: Vec<Point> = (0..TEMPLATE_POINTS)
            .map(|i| {
                let a = -PI / 2.0 + TAU * i as f64 / (TEMPLATE_POINTS - 1) as f64;
                Point::new(240.0 + 150.0 * a.cos(), 240.0 + 150.0 * a.sin())
            })
            .collect();
        pts[TEMPLATE_POINTS - 1] = pts[0];
        pts
    } else {
        let ctrl: Vec<Point> = control_polyline(class)
            .into_iter()
            .map(|(x, y)| Point::new(x, y))
            .collect();
        let ctrl = RawTrajectory::new(ctrl, TEMPLATE_FRAME, TEMPLATE_FRAME)
            .expect("control polylines lie inside the frame");
        resample(&ctrl, TEMPLATE_POINTS)
            .expect("control polylines have positive length")
            .into_points()
    };
    RawTrajectory::new(points, TEMPLATE_FRAME, TEMPLATE_FRAME).expect("templates are in frame")
}

fn bbox_center(points: &[Point]) -> (f64, f64) {
    let (mut lx, mut ly, mut hx, mut hy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        lx = lx.min(p.x);
        ly = ly.min(p.y);
        hx = hx.max(p.x);
        hy = hy.max(p.y);
    }
    ((lx + hx) / 2.0, (ly + hy) / 2.0)
}

fn extent(points: &[Point]) -> f64 {
    let (mut lx, mut ly, mut hx, mut hy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        lx = lx.min(p.x);
        ly = ly.min(p.y);
        hx = hx.max(p.x);
        hy = hy.max(p.y);
    }
    (hx - lx).max(hy - ly)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one noisy stroke of `class`. Deterministic in `(class, seed, noise)`.
///
/// Noise is applied as: rotation and scale about the template center,
/// per-point jitter, a smooth monotone speed warp of the arc-length spacing,
/// and interior point dropout. Timestamps tick at 30 samples/s before dropout.
pub fn synthesize(class: GestureClass, seed: u64, noise: &NoiseParams) -> Result<LabeledTrajectory> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5EED, class.code() as u64));
    let base = template(class);
    let frame = TEMPLATE_FRAME as f64;
    let ext = extent(base.points());

    let angle = noise.rotation_sigma * normal(&mut rng);
    let scale = (1.0 + noise.scale_sigma * normal(&mut rng)).clamp(0.5, 1.5);
    let mut shape = base.into_points();
    if angle != 0.0 || scale != 1.0 {
        let (cx, cy) = bbox_center(&shape);
        let (sin, cos) = angle.sin_cos();
        for p in &mut shape {
            let (dx, dy) = (p.x - cx, p.y - cy);
            p.x = cx + scale * (cos * dx - sin * dy);
            p.y = cy + scale * (sin * dx + cos * dy);
        }
    }

    let jitter: Vec<(f64, f64)> = (0..SYNTH_POINTS)
        .map(|_| {
            let jx = noise.jitter_sigma * ext * normal(&mut rng);
            let jy = noise.jitter_sigma * ext * normal(&mut rng);
            (jx, jy)
        })
        .collect();

    // w(u) = u + a·sin(2πu)/2π is monotone for |a| < 1 and fixes both ends.
    let warp = (noise.speed_warp_sigma * normal(&mut rng)).clamp(-0.9, 0.9);
    let total: f64 = shape.windows(2).map(|w| w[0].distance(&w[1])).sum();
    let last = (SYNTH_POINTS - 1) as f64;
    let targets: Vec<f64> = (0..SYNTH_POINTS)
        .map(|i| {
            let u = i as f64 / last;
            total * i as f64 / last + total * warp * (TAU * u).sin() / TAU
        })
        .collect();
    let sampled = sample_at_arc_lengths(&shape, &targets);

    let mut points = Vec::with_capacity(SYNTH_POINTS);
    for (i, (p, (jx, jy))) in sampled.into_iter().zip(jitter).enumerate() {
        let keep = i == 0 || i + 1 == SYNTH_POINTS || rng.random::<f64>() >= noise.point_dropout;
        if !keep {
            continue;
        }
        points.push(Point::at(
            (p.x + jx).clamp(0.0, frame),
            (p.y + jy).clamp(0.0, frame),
            (i as f64 * 1000.0 / SAMPLES_PER_SECOND).round() as u64,
        ));
    }

    Ok(LabeledTrajectory {
        label: class,
        trajectory: RawTrajectory::new(points, TEMPLATE_FRAME, TEMPLATE_FRAME)?,
    })
}

/// SplitMix64 finalizer over `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<LabeledTrajectory>,
    pub test: Vec<LabeledTrajectory>,
    pub seed: u64,
    pub noise: NoiseParams,
}

pub fn generate_dataset(
    per_class_train: usize,
    per_class_test: usize,
    seed: u64,
    noise: &NoiseParams,
) -> Result<Dataset> {
    if per_class_train == 0 || per_class_test == 0 {
        return Err(Error::invalid("per-class counts must be at least 1"));
    }
    noise.validate()?;
    let split = |stream: u64, per_class: usize| -> Result<Vec<LabeledTrajectory>> {
        let mut out = Vec::with_capacity(per_class * GestureClass::COUNT);
        for i in 0..per_class {
            for class in GestureClass::ALL {
                let idx = (i * GestureClass::COUNT + class.code()) as u64;
                out.push(synthesize(class, derive_seed(seed, stream, idx), noise)?);
            }
        }
        Ok(out)
    };
    Ok(Dataset {
        train: split(TRAIN_STREAM, per_class_train)?,
        test: split(TEST_STREAM, per_class_test)?,
        seed,
        noise: *noise,
    })
}

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const META_FILE: &str = "dataset.json";

#[derive(Serialize, Deserialize)]
struct DatasetMeta {
    seed: u64,
    noise: NoiseParams,
}

/// Writes one labeled trajectory per line.
pub fn write_split(samples: &[LabeledTrajectory], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        let rec = TrajectoryRecord::new(Some(s.label.name().to_string()), &s.trajectory);
        writeln!(w, "{}", rec.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a split file; blank lines are skipped and every record needs a label.
pub fn read_split(path: &Path) -> Result<Vec<LabeledTrajectory>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 1;
        let rec = TrajectoryRecord::from_line(&line, line_no)?;
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let label = rec
            .label
            .as_deref()
            .ok_or_else(|| parse_err("missing label".into()))?
            .parse::<GestureClass>()
            .map_err(|e| parse_err(e.to_string()))?;
        let trajectory = rec.to_trajectory().map_err(|e| parse_err(e.to_string()))?;
        out.push(LabeledTrajectory { label, trajectory });
    }
    Ok(out)
}

/// Saves `d` as a directory holding the two split files and generator metadata.
pub fn save_dataset(d: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_split(&d.train, &dir.join(TRAIN_FILE))?;
    write_split(&d.test, &dir.join(TEST_FILE))?;
    let meta = serde_json::to_string_pretty(&DatasetMeta {
        seed: d.seed,
        noise: d.noise,
    })
    .expect("metadata serializes");
    let meta_path = dir.join(META_FILE);
    fs::write(&meta_path, meta).map_err(|e| Error::io(meta_path, e))
}

/// Loads a dataset directory. The metadata file is optional so externally
/// captured data can be dropped in as two split files.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let train = read_split(&dir.join(TRAIN_FILE))?;
    let test = read_split(&dir.join(TEST_FILE))?;
    let meta_path = dir.join(META_FILE);
    let (seed, noise) = match fs::read_to_string(&meta_path) {
        Ok(text) => {
            let meta: DatasetMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("{}: {e}", meta_path.display()),
            })?;
            (meta.seed, meta.noise)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => (0, NoiseParams::ZERO),
        Err(e) => return Err(Error::io(meta_path, e)),
    };
    Ok(Dataset {
        train,
        test,
        seed,
        noise,
    })
}
