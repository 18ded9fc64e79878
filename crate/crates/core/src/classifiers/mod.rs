//! The four trajectory classifiers behind one train/predict interface.

mod dtw;
mod rnn;
mod svm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use dtw::{dtw_distance, DtwKnn};
pub use rnn::{RnnHyper, RnnNet};
pub use svm::{LinearSvm, SvmHyper};

use crate::error::{Error, Result};
use crate::gestures::{GestureClass, LabeledTrajectory};
use crate::nn::{Tensor, TensorFile};
use crate::trajectory::{featurize, FeatureSequence, NormTrajectory, Point, PreprocessConfig, RawTrajectory};

const CLASSES: usize = GestureClass::COUNT;

pub const MODEL_FORMAT: &str = "airpen-classifier";
pub const MODEL_VERSION: &str = "v1";

/// Class distribution with its argmax.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; CLASSES],
    pub class: GestureClass,
    pub confidence: f64,
}

impl Prediction {
    /// Argmax with ties going to the lower class code.
    pub fn from_probs(probs: [f64; CLASSES]) -> Self {
        let mut best = 0;
        for c in 1..CLASSES {
            if probs[c] > probs[best] {
                best = c;
            }
        }
        Self::with_class(probs, GestureClass::from_code(best).expect("valid code"))
    }

    pub(crate) fn with_class(probs: [f64; CLASSES], class: GestureClass) -> Self {
        Prediction {
            probs,
            class,
            confidence: probs[class.code()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    DtwKnn,
    Svm,
    Lstm,
    #[serde(rename = "bilstm")]
    BiLstm,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::DtwKnn,
        ClassifierKind::Svm,
        ClassifierKind::Lstm,
        ClassifierKind::BiLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::DtwKnn => "dtw_knn",
            ClassifierKind::Svm => "svm",
            ClassifierKind::Lstm => "lstm",
            ClassifierKind::BiLstm => "bilstm",
        }
    }

    /// Short display label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ClassifierKind::DtwKnn => "DTW",
            ClassifierKind::Svm => "SVM",
            ClassifierKind::Lstm => "LSTM",
            ClassifierKind::BiLstm => "Bi-LSTM",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dtw_knn" | "dtw" => Ok(ClassifierKind::DtwKnn),
            "svm" => Ok(ClassifierKind::Svm),
            "lstm" => Ok(ClassifierKind::Lstm),
            "bilstm" => Ok(ClassifierKind::BiLstm),
            other => Err(Error::invalid(format!("unknown classifier kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub svm_margin: f64,
    pub svm_lambda: f64,
    pub dtw_k: usize,
    pub clip_norm: f64,
    pub preprocess: PreprocessConfig,
}

impl TrainConfig {
    pub fn new(kind: ClassifierKind) -> Self {
        let (epochs, learning_rate) = match kind {
            ClassifierKind::Svm => (30, 0.01),
            _ => (60, 0.05),
        };
        TrainConfig {
            kind,
            epochs,
            learning_rate,
            momentum: 0.9,
            hidden_size: 64,
            batch_size: 16,
            seed: 0,
            svm_margin: 1.0,
            svm_lambda: 1e-4,
            dtw_k: 5,
            clip_norm: 5.0,
            preprocess: PreprocessConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("learning_rate", self.learning_rate),
            ("hidden_size", self.hidden_size as f64),
            ("batch_size", self.batch_size as f64),
            ("svm_margin", self.svm_margin),
            ("clip_norm", self.clip_norm),
            ("dtw_k", self.dtw_k as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.dtw_k.is_multiple_of(2) {
            return Err(Error::invalid("dtw_k must be odd"));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.svm_lambda < 0.0 {
            return Err(Error::invalid("momentum must be in [0,1) and svm_lambda >= 0"));
        }
        if self.preprocess.resample_len < 2 {
            return Err(Error::invalid("resample length must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    DtwKnn(DtwKnn),
    Svm(LinearSvm),
    Rnn(RnnNet),
}

/// A trained classifier together with the preprocessing it expects.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub preprocess: PreprocessConfig,
    pub seed: u64,
    pub params: ModelParams,
    /// Mean training loss per epoch (empty for DTW).
    pub loss_history: Vec<f64>,
}

fn preprocess_all(
    samples: &[LabeledTrajectory],
    pre: &PreprocessConfig,
) -> Result<Vec<(GestureClass, NormTrajectory)>> {
    samples
        .iter()
        .map(|s| Ok((s.label, pre.apply(&s.trajectory)?)))
        .collect()
}

fn stack_features(samples: &[(GestureClass, NormTrajectory)]) -> (Vec<f64>, Vec<usize>) {
    let mut xs = Vec::new();
    let mut ys = Vec::with_capacity(samples.len());
    for (c, t) in samples {
        xs.extend(featurize(t).flatten());
        ys.push(c.code());
    }
    (xs, ys)
}

/// Fits a classifier of `config.kind` to `train`.
pub fn train(config: &TrainConfig, train: &[LabeledTrajectory]) -> Result<ClassifierModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let samples = preprocess_all(train, &config.preprocess)?;
    let steps = config.preprocess.resample_len;
    let (params, loss_history) = match config.kind {
        ClassifierKind::DtwKnn => {
            let mut knn = DtwKnn::new(config.dtw_k);
            for (c, t) in &samples {
                knn.add(*c, t);
            }
            (ModelParams::DtwKnn(knn), Vec::new())
        }
        ClassifierKind::Svm => {
            let distinct = samples
                .iter()
                .map(|(c, _)| *c)
                .collect::<std::collections::BTreeSet<_>>();
            if distinct.len() < 2 {
                return Err(Error::invalid("SVM training needs at least two classes"));
            }
            let (xs, ys) = stack_features(&samples);
            let hyper = SvmHyper {
                epochs: config.epochs,
                learning_rate: config.learning_rate,
                momentum: config.momentum,
                batch_size: config.batch_size,
                margin: config.svm_margin,
                lambda: config.svm_lambda,
                seed: config.seed,
            };
            let (svm, hist) = LinearSvm::train(&xs, &ys, &hyper)?;
            (ModelParams::Svm(svm), hist)
        }
        ClassifierKind::Lstm | ClassifierKind::BiLstm => {
            let (xs, ys) = stack_features(&samples);
            let bidirectional = config.kind == ClassifierKind::BiLstm;
            let mut net =
                RnnNet::init(bidirectional, FeatureSequence::WIDTH, config.hidden_size, config.seed);
            let hyper = RnnHyper {
                epochs: config.epochs,
                learning_rate: config.learning_rate,
                momentum: config.momentum,
                batch_size: config.batch_size,
                clip_norm: config.clip_norm,
                seed: config.seed,
            };
            let hist = net.train(&xs, &ys, steps, &hyper)?;
            (ModelParams::Rnn(net), hist)
        }
    };
    Ok(ClassifierModel {
        kind: config.kind,
        preprocess: config.preprocess,
        seed: config.seed,
        params,
        loss_history,
    })
}

impl ClassifierModel {
    /// Classifies an already preprocessed trajectory.
    pub fn predict(&self, traj: &NormTrajectory) -> Result<Prediction> {
        if traj.len() != self.preprocess.resample_len {
            return Err(Error::invalid(format!(
                "model expects {} points, got {}",
                self.preprocess.resample_len,
                traj.len()
            )));
        }
        match &self.params {
            ModelParams::DtwKnn(knn) => knn.predict(traj.points()),
            ModelParams::Svm(svm) => svm.predict(&featurize(traj).flatten()),
            ModelParams::Rnn(net) => net.predict(&featurize(traj).flatten(), traj.len()),
        }
    }

    /// As [`predict`](Self::predict), also reporting wall-clock time.
    pub fn predict_timed(&self, traj: &NormTrajectory) -> Result<(Prediction, Duration)> {
        let start = Instant::now();
        let p = self.predict(traj)?;
        Ok((p, start.elapsed()))
    }

    /// Preprocesses a raw trajectory and classifies it.
    pub fn classify(&self, raw: &RawTrajectory) -> Result<Prediction> {
        self.predict(&self.preprocess.apply(raw)?)
    }

    pub fn exemplar_count(&self) -> Option<usize> {
        match &self.params {
            ModelParams::DtwKnn(knn) => Some(knn.exemplars.len()),
            _ => None,
        }
    }

    pub fn to_file(&self) -> TensorFile {
        let mut f = TensorFile::new(MODEL_FORMAT, MODEL_VERSION);
        f.set_header("kind", self.kind.name());
        f.set_header("resample_len", self.preprocess.resample_len as u64);
        f.set_header("smooth_window", self.preprocess.smooth_window as u64);
        f.set_header("seed", self.seed);
        f.set_header("classes", GestureClass::names());
        f.set_header("loss_history", self.loss_history.clone());
        match &self.params {
            ModelParams::DtwKnn(knn) => {
                f.set_header("k", knn.k as u64);
                let n = knn.exemplars.len();
                if n > 0 {
                    let len = knn.exemplars[0].1.len();
                    let mut coords = Vec::with_capacity(n * len * 2);
                    let mut labels = Vec::with_capacity(n);
                    for (c, pts) in &knn.exemplars {
                        coords.extend(pts.iter().flat_map(|p| [p.x, p.y]));
                        labels.push(c.code() as f64);
                    }
                    f.push("exemplars", &Tensor::new(vec![n, len, 2], coords).expect("consistent"));
                    f.push("labels", &Tensor::vector(labels));
                }
            }
            ModelParams::Svm(svm) => {
                f.push("weight", &svm.weight);
                f.push("bias", &svm.bias);
            }
            ModelParams::Rnn(net) => {
                f.set_header("hidden_size", net.hidden_size() as u64);
                let mut push_cell = |prefix: &str, cell: &crate::nn::LstmCellParams| {
                    f.push(&format!("{prefix}.w"), &cell.w);
                    f.push(&format!("{prefix}.u"), &cell.u);
                    f.push(&format!("{prefix}.b"), &cell.b);
                };
                push_cell("fwd", &net.forward);
                if let Some(b) = &net.backward {
                    push_cell("bwd", b);
                }
                f.push("head.weight", &net.head.weight);
                f.push("head.bias", &net.head.bias);
            }
        }
        f
    }

    pub fn from_file(f: &TensorFile) -> Result<Self> {
        let kind: ClassifierKind = f.header_str("kind")?.parse().map_err(|_| {
            Error::Model(format!("unknown model kind {:?}", f.header_str("kind").unwrap_or("")))
        })?;
        let classes: Vec<String> = serde_json::from_value(f.header_value("classes")?.clone())
            .map_err(|e| Error::Model(format!("bad class list: {e}")))?;
        if classes != GestureClass::names() {
            return Err(Error::Model("model class list differs from this build".into()));
        }
        let preprocess = PreprocessConfig {
            resample_len: f.header_u64("resample_len")? as usize,
            smooth_window: f.header_u64("smooth_window")? as usize,
        };
        let loss_history: Vec<f64> = match f.header.get("loss_history") {
            Some(Value::Array(_)) => serde_json::from_value(f.header["loss_history"].clone())
                .map_err(|e| Error::Model(format!("bad loss history: {e}")))?,
            _ => Vec::new(),
        };
        let params = match kind {
            ClassifierKind::DtwKnn => {
                let mut knn = DtwKnn::new(f.header_u64("k")? as usize);
                if f.tensors.iter().any(|t| t.name == "exemplars") {
                    let ex = f.get("exemplars")?;
                    let labels = f.get("labels")?;
                    let (n, len) = (ex.shape()[0], ex.shape().get(1).copied().unwrap_or(0));
                    if ex.shape().len() != 3 || ex.shape()[2] != 2 || labels.len() != n {
                        return Err(Error::Model("inconsistent exemplar tensors".into()));
                    }
                    for i in 0..n {
                        let code = labels.data()[i];
                        let class = GestureClass::from_code(code as usize)
                            .filter(|_| code.fract() == 0.0 && code >= 0.0)
                            .ok_or_else(|| Error::Model(format!("bad exemplar label {code}")))?;
                        let pts = ex.data()[i * len * 2..(i + 1) * len * 2]
                            .chunks_exact(2)
                            .map(|xy| Point::new(xy[0], xy[1]))
                            .collect();
                        knn.exemplars.push((class, pts));
                    }
                }
                ModelParams::DtwKnn(knn)
            }
            ClassifierKind::Svm => {
                let weight = f.get("weight")?;
                let bias = f.get("bias")?;
                if weight.shape().len() != 2 || weight.shape()[0] != CLASSES {
                    return Err(Error::Model("SVM weight must be 10 × d".into()));
                }
                bias.expect_shape(&[CLASSES]).map_err(|e| Error::Model(e.to_string()))?;
                ModelParams::Svm(LinearSvm { weight, bias })
            }
            ClassifierKind::Lstm | ClassifierKind::BiLstm => {
                let cell = |prefix: &str| -> Result<crate::nn::LstmCellParams> {
                    crate::nn::LstmCellParams::new(
                        f.get(&format!("{prefix}.w"))?,
                        f.get(&format!("{prefix}.u"))?,
                        f.get(&format!("{prefix}.b"))?,
                    )
                    .map_err(|e| Error::Model(e.to_string()))
                };
                let forward = cell("fwd")?;
                let backward = if kind == ClassifierKind::BiLstm {
                    Some(cell("bwd")?)
                } else {
                    None
                };
                let head = crate::nn::DenseParams::new(f.get("head.weight")?, f.get("head.bias")?)
                    .map_err(|e| Error::Model(e.to_string()))?;
                let width = forward.hidden_size() * if backward.is_some() { 2 } else { 1 };
                if head.inputs() != width || head.outputs() != CLASSES {
                    return Err(Error::Model("classifier head does not match LSTM width".into()));
                }
                if backward.as_ref().is_some_and(|b| b.w.shape() != forward.w.shape()) {
                    return Err(Error::Model("forward and backward cells differ in shape".into()));
                }
                ModelParams::Rnn(RnnNet {
                    forward,
                    backward,
                    head,
                })
            }
        };
        Ok(ClassifierModel {
            kind,
            preprocess,
            seed: f.header_u64("seed")?,
            params,
            loss_history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&TensorFile::load(path, MODEL_FORMAT, MODEL_VERSION)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gestures::{generate_dataset, template, NoiseParams};

    #[test]
    fn prediction_ties_go_to_lower_code() {
        let p = Prediction::from_probs([0.1; CLASSES]);
        assert_eq!(p.class.code(), 0);
        let mut probs = [0.0; CLASSES];
        probs[3] = 0.5;
        probs[7] = 0.5;
        assert_eq!(Prediction::from_probs(probs).class.code(), 3);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert!("cnn3d".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::new(ClassifierKind::DtwKnn);
        assert!(c.validate().is_ok());
        c.dtw_k = 4;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(ClassifierKind::Lstm);
        c.epochs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_training_set_rejected() {
        for k in ClassifierKind::ALL {
            assert!(matches!(
                train(&TrainConfig::new(k), &[]),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn dtw_zero_noise_is_perfect() {
        let d = generate_dataset(3, 2, 1, &NoiseParams::ZERO).unwrap();
        let m = train(&TrainConfig::new(ClassifierKind::DtwKnn), &d.train).unwrap();
        for s in &d.test {
            assert_eq!(m.classify(&s.trajectory).unwrap().class, s.label);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let d = generate_dataset(1, 1, 1, &NoiseParams::ZERO).unwrap();
        let m = train(&TrainConfig::new(ClassifierKind::DtwKnn), &d.train).unwrap();
        let short = PreprocessConfig {
            resample_len: 20,
            smooth_window: 3,
        }
        .apply(&template(GestureClass::Circle))
        .unwrap();
        assert!(matches!(m.predict(&short), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn model_file_round_trip_all_kinds() {
        let d = generate_dataset(2, 1, 4, &NoiseParams::DEFAULT).unwrap();
        for kind in ClassifierKind::ALL {
            let mut cfg = TrainConfig::new(kind).with_seed(3);
            cfg.epochs = 2;
            cfg.hidden_size = 6;
            let m = train(&cfg, &d.train).unwrap();
            let text = m.to_file().to_text();
            let back = ClassifierModel::from_file(
                &TensorFile::from_text(&text, MODEL_FORMAT, MODEL_VERSION).unwrap(),
            )
            .unwrap();
            assert_eq!(back, m, "{kind}");
        }
    }
}
