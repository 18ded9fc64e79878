//! Confusion matrices, precision/recall/F1, latency measurement and the
//! side-by-side classifier comparison report.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierModel, Prediction};
use crate::error::{Error, Result};
use crate::gestures::{GestureClass, LabeledTrajectory};
use crate::streaming::{decide, Decision};

const CLASSES: usize = GestureClass::COUNT;
/// Column index of the Unclassified decision.
pub const UNCLASSIFIED: usize = CLASSES;

/// Counts indexed by true class × (predicted class or Unclassified).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES + 1]; CLASSES],
}

fn column(d: Decision) -> usize {
    match d {
        Decision::Class(c) => c.code(),
        Decision::Unclassified => UNCLASSIFIED,
    }
}

pub fn confusion(decisions: &[(GestureClass, Decision)]) -> Result<ConfusionMatrix> {
    if decisions.is_empty() {
        return Err(Error::invalid("confusion matrix needs at least one decision"));
    }
    let mut counts = [[0u64; CLASSES + 1]; CLASSES];
    for &(truth, d) in decisions {
        counts[truth.code()][column(d)] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

impl ConfusionMatrix {
    pub fn get(&self, truth: GestureClass, decision: Decision) -> u64 {
        self.counts[truth.code()][column(decision)]
    }

    pub fn row_sum(&self, truth: GestureClass) -> u64 {
        self.counts[truth.code()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn unclassified(&self) -> u64 {
        self.counts.iter().map(|r| r[UNCLASSIFIED]).sum()
    }

    /// Nonzero off-diagonal cells (Unclassified excluded), largest first;
    /// ties in class-code order.
    pub fn top_confusions(&self) -> Vec<(GestureClass, GestureClass, u64)> {
        let mut out = Vec::new();
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row[..CLASSES].iter().enumerate() {
                if t != p && n > 0 {
                    out.push((GestureClass::ALL[t], GestureClass::ALL[p], n));
                }
            }
        }
        out.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        out
    }

    pub fn to_text(&self) -> String {
        let width = GestureClass::ALL.iter().map(|c| c.name().len()).max().unwrap_or(0);
        let mut s = format!("{:width$}", "true\\pred");
        for c in GestureClass::ALL {
            write!(s, " {:>5}", abbreviate(c.name())).unwrap();
        }
        s.push_str("  Uncl\n");
        for (t, row) in self.counts.iter().enumerate() {
            write!(s, "{:width$}", GestureClass::ALL[t].name()).unwrap();
            for n in row[..CLASSES].iter() {
                write!(s, " {n:>5}").unwrap();
            }
            writeln!(s, " {:>5}", row[UNCLASSIFIED]).unwrap();
        }
        s
    }
}

fn abbreviate(name: &str) -> String {
    name.chars().filter(|c| c.is_ascii_uppercase()).collect::<String>()
        + &name.chars().skip(1).filter(|c| c.is_ascii_lowercase()).take(2).collect::<String>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: GestureClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of per-class F1; the canonical single number.
    pub macro_f1: f64,
    /// Harmonic mean of macro precision and macro recall.
    pub macro_f1_harmonic: f64,
    pub accuracy_excluding_unclassified: f64,
    pub accuracy_overall: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Macro averages run over classes that occur as a true label or as a
/// prediction; absent classes would otherwise count as zeros.
pub fn metrics(m: &ConfusionMatrix) -> Result<MetricsReport> {
    let decided: u64 = m.total() - m.unclassified();
    if decided == 0 {
        return Err(Error::UndefinedMetrics("every decision is Unclassified".into()));
    }
    let mut per_class = Vec::new();
    let mut diagonal = 0;
    for c in GestureClass::ALL {
        let k = c.code();
        let tp = m.counts[k][k];
        let predicted: u64 = m.counts.iter().map(|r| r[k]).sum();
        let support = m.row_sum(c);
        diagonal += tp;
        if predicted == 0 && support == 0 {
            continue;
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            f1: harmonic(precision, recall),
            support,
        });
    }
    let n = per_class.len() as f64;
    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / n;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / n;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / n;
    Ok(MetricsReport {
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        macro_f1_harmonic: harmonic(macro_precision, macro_recall),
        accuracy_excluding_unclassified: ratio(diagonal, decided),
        accuracy_overall: ratio(diagonal, m.total()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub model: String,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub samples: usize,
}

impl LatencyReport {
    /// Nearest-rank percentiles over `samples_ms`.
    pub fn from_samples(model: impl Into<String>, samples_ms: &[f64]) -> Result<Self> {
        if samples_ms.is_empty() {
            return Err(Error::invalid("no latency samples"));
        }
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |q: f64| sorted[((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Ok(LatencyReport {
            model: model.into(),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50_ms: rank(0.50),
            p95_ms: rank(0.95),
            max_ms: sorted[sorted.len() - 1],
            samples: sorted.len(),
        })
    }
}

/// Times `repeats` single-trajectory classifications (preprocessing
/// included), cycling through `test`, after one untimed warm-up call.
pub fn benchmark_latency(
    model: &ClassifierModel,
    test: &[LabeledTrajectory],
    repeats: usize,
) -> Result<LatencyReport> {
    if repeats < 10 {
        return Err(Error::invalid(format!("need at least 10 repeats, got {repeats}")));
    }
    if test.is_empty() {
        return Err(Error::invalid("latency benchmark needs at least one trajectory"));
    }
    model.classify(&test[0].trajectory)?;
    let mut samples = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let traj = &test[r % test.len()].trajectory;
        let start = Instant::now();
        std::hint::black_box(model.classify(std::hint::black_box(traj))?);
        // Keep every sample strictly positive even on coarse clocks.
        samples.push((start.elapsed().as_secs_f64() * 1e3).max(1e-6));
    }
    LatencyReport::from_samples(model.kind.label(), &samples)
}

/// Predictions of `model` on `test` with both argmax and thresholded tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    /// Every sample decided by argmax.
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// Decisions under the confidence threshold.
    pub thresholded: ConfusionMatrix,
    pub threshold: f64,
}

pub fn evaluate(model: &ClassifierModel, test: &[LabeledTrajectory], threshold: f64) -> Result<Evaluation> {
    if let Some(0) = model.exemplar_count() {
        return Err(Error::Model("DTW model has no exemplars".into()));
    }
    let predictions = test
        .iter()
        .map(|s| model.classify(&s.trajectory))
        .collect::<Result<Vec<_>>>()?;
    let argmax: Vec<_> = test
        .iter()
        .zip(&predictions)
        .map(|(s, p)| (s.label, Decision::Class(p.class)))
        .collect();
    let gated: Vec<_> = test
        .iter()
        .zip(&predictions)
        .map(|(s, p)| (s.label, decide(p, threshold)))
        .collect();
    let confusion = confusion(&argmax)?;
    Ok(Evaluation {
        metrics: metrics(&confusion)?,
        confusion,
        thresholded: self::confusion(&gated)?,
        predictions,
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub macro_f1_harmonic: f64,
    pub accuracy: f64,
    pub threshold: f64,
    /// Accuracy over samples whose confidence clears the threshold.
    pub accuracy_excluding_unclassified: Option<f64>,
    pub unclassified: u64,
    pub mean_latency_ms: Option<f64>,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub test_samples: usize,
    pub rows: Vec<ReportRow>,
}

pub const LATENCY_REPEATS: usize = 30;

/// One row per model on `test`; `latency_repeats` of zero skips timing.
pub fn compare_report(
    models: &[&ClassifierModel],
    test: &[LabeledTrajectory],
    threshold: f64,
    latency_repeats: usize,
) -> Result<ComparisonReport> {
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let ev = evaluate(model, test, threshold)?;
        let gated = metrics(&ev.thresholded).ok();
        let latency = if latency_repeats > 0 {
            Some(benchmark_latency(model, test, latency_repeats)?.mean_ms)
        } else {
            None
        };
        rows.push(ReportRow {
            model: model.kind.label().to_string(),
            macro_precision: ev.metrics.macro_precision,
            macro_recall: ev.metrics.macro_recall,
            macro_f1: ev.metrics.macro_f1,
            macro_f1_harmonic: ev.metrics.macro_f1_harmonic,
            accuracy: ev.metrics.accuracy_overall,
            threshold,
            accuracy_excluding_unclassified: gated.map(|g| g.accuracy_excluding_unclassified),
            unclassified: ev.thresholded.unclassified(),
            mean_latency_ms: latency,
            metrics: ev.metrics,
            confusion: ev.confusion,
        });
    }
    Ok(ComparisonReport {
        test_samples: test.len(),
        rows,
    })
}

impl ComparisonReport {
    /// Copy with timing removed, for reproducibility comparisons.
    pub fn without_latency(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.rows {
            r.mean_latency_ms = None;
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let threshold = self.rows.first().map(|r| r.threshold).unwrap_or(0.85);
        let gated = format!("acc>{threshold}");
        writeln!(
            s,
            "{:<8} {:>9} {:>7} {:>7} {:>7} {:>8} {:>9} {:>6} {:>11}",
            "model", "precision", "recall", "f1", "f1(hm)", "accuracy", gated, "uncl", "latency_ms"
        )
        .unwrap();
        for r in &self.rows {
            let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
            writeln!(
                s,
                "{:<8} {:>9.3} {:>7.3} {:>7.3} {:>7.3} {:>8.3} {:>9} {:>6} {:>11}",
                r.model,
                r.macro_precision,
                r.macro_recall,
                r.macro_f1,
                r.macro_f1_harmonic,
                r.accuracy,
                opt(r.accuracy_excluding_unclassified, 3),
                r.unclassified,
                opt(r.mean_latency_ms, 3),
            )
            .unwrap();
        }
        s
    }
}
