//! Argument parsing and command dispatch for the `airpen` binary.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use airpen_core::classifiers::{train, ClassifierKind, ClassifierModel, TrainConfig};
use airpen_core::evaluation::{compare_report, evaluate};
use airpen_core::fingertip::{fingertip_train, test_errors, FingertipNet, FingertipTrainConfig, SuccessCurve};
use airpen_core::gestures::{generate_dataset, load_dataset, save_dataset, NoiseParams};
use airpen_core::streaming::{SegmentMode, SegmenterConfig, Session};
use airpen_core::trajectory::TrajectoryRecord;
use airpen_core::Error;
use airpen_service::{ServiceConfig, ServiceError, DEFAULT_PORT};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_MODEL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "airpen", version, about = "Air-drawn gesture recognition pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic gesture dataset.
    Gen(GenArgs),
    /// Train a classifier or the fingertip regressor.
    Train(TrainArgs),
    /// Compare classifiers on a dataset's test split.
    Eval(EvalArgs),
    /// Classify the trajectories in a file.
    Classify(ClassifyArgs),
    /// Run the WebSocket service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_class_train: usize,
    #[arg(long, default_value_t = 24)]
    pub per_class_test: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = NoiseParams::DEFAULT.jitter_sigma)]
    pub jitter: f64,
    #[arg(long, default_value_t = NoiseParams::DEFAULT.rotation_sigma)]
    pub rotation: f64,
    #[arg(long, default_value_t = NoiseParams::DEFAULT.scale_sigma)]
    pub scale: f64,
    #[arg(long, default_value_t = NoiseParams::DEFAULT.point_dropout)]
    pub dropout: f64,
    #[arg(long, default_value_t = NoiseParams::DEFAULT.speed_warp_sigma)]
    pub warp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "dtw_knn", alias = "dtw")]
    DtwKnn,
    Svm,
    Lstm,
    Bilstm,
    Fingertip,
}

impl ModelArg {
    fn classifier(self) -> Option<ClassifierKind> {
        match self {
            ModelArg::DtwKnn => Some(ClassifierKind::DtwKnn),
            ModelArg::Svm => Some(ClassifierKind::Svm),
            ModelArg::Lstm => Some(ClassifierKind::Lstm),
            ModelArg::Bilstm => Some(ClassifierKind::BiLstm),
            ModelArg::Fingertip => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "bilstm")]
    pub model: ModelArg,
    /// Dataset directory written by `gen` (not used by `fingertip`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Override the default epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Synthetic renders for `fingertip`.
    #[arg(long, default_value_t = 2000)]
    pub n_train: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Trained classifier files; kinds listed in `--kinds` without a file are trained on the fly.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "dtw_knn,svm,lstm,bilstm")]
    pub kinds: Vec<String>,
    /// Seed for classifiers trained on the fly.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
    /// Timed repeats per model; 0 skips latency.
    #[arg(long, default_value_t = 30)]
    pub latency_repeats: usize,
    /// Write the structured report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also print confusion matrices.
    #[arg(long)]
    pub confusion: bool,
    /// Evaluate a fingertip model on held-out renders instead.
    #[arg(long)]
    pub fingertip: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory file, one JSON record per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Manual,
    Dwell,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, value_enum, default_value = "manual")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.85)]
    pub threshold: f64,
    /// Directory holding the demo UI build, served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Service(ServiceError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Service(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(e) => CliError::Core(e),
            other => CliError::Service(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Service(_) => EXIT_IO,
            CliError::Core(e) => match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                Error::Io { .. } => EXIT_IO,
                Error::Numeric(_) => EXIT_NUMERIC,
                Error::Degenerate(_)
                | Error::Shape(_)
                | Error::Parse { .. }
                | Error::Version { .. }
                | Error::Model(_)
                | Error::TooShort { .. }
                | Error::Ordering { .. }
                | Error::UndefinedMetrics(_) => EXIT_MODEL,
            },
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
        Command::Serve(a) => serve(a),
    }
}

fn gen(a: GenArgs) -> Result<(), CliError> {
    let noise = NoiseParams {
        jitter_sigma: a.jitter,
        rotation_sigma: a.rotation,
        scale_sigma: a.scale,
        point_dropout: a.dropout,
        speed_warp_sigma: a.warp,
    };
    let data = generate_dataset(a.per_class_train, a.per_class_test, a.seed, &noise)?;
    save_dataset(&data, &a.out)?;
    println!(
        "wrote {} train / {} test trajectories to {}",
        data.train.len(),
        data.test.len(),
        a.out.display()
    );
    Ok(())
}

fn print_losses(history: &[f64]) {
    for (i, l) in history.iter().enumerate() {
        println!("epoch {:>3} loss {l:.6}", i + 1);
    }
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let Some(kind) = a.model.classifier() else {
        let mut config = FingertipTrainConfig {
            seed: a.seed,
            ..Default::default()
        };
        if let Some(e) = a.epochs {
            config.epochs = e;
        }
        let trained = fingertip_train(&config, a.n_train)?;
        print_losses(&trained.loss_history);
        trained.net.save(&a.out, &config, &trained.loss_history)?;
        println!("saved fingertip model to {}", a.out.display());
        return Ok(());
    };
    let data_dir = a
        .data
        .ok_or_else(|| CliError::Usage("the following required argument was not provided: --data".into()))?;
    let data = load_dataset(&data_dir)?;
    let mut config = TrainConfig::new(kind).with_seed(a.seed);
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    let model = train(&config, &data.train)?;
    print_losses(&model.loss_history);
    model.save(&a.out)?;
    println!("saved {} model to {}", kind.name(), a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    if !(a.threshold > 0.0 && a.threshold < 1.0) {
        return Err(CliError::Usage("--threshold must lie in (0, 1)".into()));
    }
    if let Some(path) = &a.fingertip {
        return eval_fingertip(path, a.seed);
    }
    let kinds = a
        .kinds
        .iter()
        .map(|k| k.parse::<ClassifierKind>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let mut given = Vec::new();
    for path in &a.models {
        given.push(ClassifierModel::load(path)?);
    }
    let data = load_dataset(&a.data)?;
    let mut models = Vec::new();
    for kind in &kinds {
        match given.iter().position(|m| m.kind == *kind) {
            Some(i) => models.push(given.swap_remove(i)),
            None => {
                tracing::info!(kind = kind.name(), "training missing baseline");
                models.push(train(&TrainConfig::new(*kind).with_seed(a.seed), &data.train)?);
            }
        }
    }
    // Files whose kind was not listed are still reported.
    models.extend(given);
    let refs: Vec<&ClassifierModel> = models.iter().collect();
    let report = compare_report(&refs, &data.test, a.threshold, a.latency_repeats)?;
    print!("{}", report.to_text());
    if a.confusion {
        for (model, row) in models.iter().zip(&report.rows) {
            println!("\n{} (argmax decisions)", row.model);
            print!("{}", row.confusion.to_text());
            let gated = evaluate(model, &data.test, a.threshold)?.thresholded;
            println!("top confusions: {:?}", gated.top_confusions().iter().take(5).collect::<Vec<_>>());
        }
    }
    if let Some(path) = &a.report {
        fs::write(path, report.to_json()).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    Ok(())
}

fn eval_fingertip(path: &Path, seed: u64) -> Result<(), CliError> {
    let net = FingertipNet::load(path)?;
    let errors = test_errors(|img| net.forward(&img.pixels), 500, seed)?;
    let curve = SuccessCurve::from_errors(&errors);
    println!("{:>6} {:>8}", "px", "success");
    for (t, r) in curve.thresholds.iter().zip(&curve.success_rate) {
        println!("{t:>6} {r:>8.3}");
    }
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    let model = Arc::new(ClassifierModel::load(&a.model)?);
    let text = fs::read_to_string(&a.input).map_err(|e| Error::Io {
        path: a.input.clone(),
        source: e,
    })?;
    let config = SegmenterConfig {
        confidence_threshold: a.threshold,
        ..Default::default()
    };
    let mut any = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = TrajectoryRecord::from_line(line, i + 1)?;
        let traj = record.to_trajectory()?;
        let mut session = Session::new(format!("{}:{}", a.input.display(), i + 1), model.clone(), config, traj.frame())?;
        for p in traj.points() {
            session.push_point(*p)?;
        }
        let event = session.end_stroke()?;
        println!("{}", serde_json::to_string(&event).expect("events serialize"));
        any = true;
    }
    if !any {
        return Err(Error::InvalidArgument(format!("{} contains no trajectories", a.input.display())).into());
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad --host/--port: {e}")))?;
    let segmenter = SegmenterConfig {
        mode: match a.mode {
            ModeArg::Manual => SegmentMode::Manual,
            ModeArg::Dwell => SegmentMode::Dwell,
        },
        confidence_threshold: a.threshold,
        ..Default::default()
    };
    segmenter.validate()?;
    let config = ServiceConfig {
        segmenter,
        static_dir: a.static_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Service(ServiceError::Io(e)))?;
    runtime.block_on(airpen_service::run_service(addr, &a.model, config))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("airpen").chain(args.iter().copied()))
    }

    #[test]
    fn gen_flags() {
        let cli = parse(&["gen", "--out", "d/", "--per-class-train", "100", "--per-class-test", "24", "--seed", "42"]).unwrap();
        match cli.command {
            Command::Gen(g) => {
                assert_eq!(g.out, PathBuf::from("d/"));
                assert_eq!((g.per_class_train, g.per_class_test, g.seed), (100, 24, 42));
                assert_eq!(g.jitter, 0.03);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn train_flags() {
        let cli = parse(&["train", "--model", "bilstm", "--data", "d/", "--out", "m.model", "--seed", "7"]).unwrap();
        match cli.command {
            Command::Train(t) => {
                assert_eq!(t.model, ModelArg::Bilstm);
                assert_eq!(t.seed, 7);
            }
            other => panic!("{other:?}"),
        }
        let t = parse(&["train", "--data", "d", "--out", "m"]).unwrap();
        assert!(matches!(t.command, Command::Train(TrainArgs { model: ModelArg::Bilstm, .. })));
    }

    #[test]
    fn rejections() {
        assert!(parse(&["train", "--model", "cnn3d", "--out", "m"]).is_err());
        assert!(parse(&["fly"]).is_err());
        let err = parse(&["gen"]).unwrap_err().to_string();
        assert!(err.contains("--out"), "{err}");
        assert!(parse(&["serve", "--model", "m", "--mode", "gesture"]).is_err());
    }

    #[test]
    fn exit_codes_are_distinct() {
        let io = CliError::Core(Error::Io {
            path: "x".into(),
            source: std::io::Error::other("boom"),
        });
        assert_eq!(io.exit_code(), EXIT_IO);
        assert_eq!(CliError::Core(Error::Numeric("nan".into())).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::Core(Error::Model("bad".into())).exit_code(), EXIT_MODEL);
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
    }
}
