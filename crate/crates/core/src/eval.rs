//! Classifier evaluation: confusion matrix, per-class precision/recall/F1,
//! error rates, and wall-clock timing of the encrypt/infer/decrypt stages.

use crate::encinfer::{self, EncryptedVector, InferError, QuantizedModel};
use crate::fixedpoint::FixedPointCodec;
use crate::paillier::{PrivateKey, PublicKey};
use rand::Rng;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and prediction vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label {value} at position {index} outside [1, {k}]")]
    LabelOutOfRange { index: usize, value: u32, k: usize },
    #[error("class count must be at least 1")]
    NoClasses,
    #[error("sizes must be positive")]
    ZeroSize,
}

/// k x k count table; rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Option<Vec<String>>) -> Self {
        let k = counts.len();
        assert!(counts.iter().all(|row| row.len() == k));
        ConfusionMatrix {
            k,
            counts: counts.into_iter().flatten().collect(),
            class_names: class_names
                .unwrap_or_else(|| (1..=k).map(|c| format!("class {c}")).collect()),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Count of (truth, prediction), both 1-based.
    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[(truth - 1) * self.k + (pred - 1)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (1..=self.k).map(|p| self.count(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (1..=self.k).map(|t| self.count(t, pred)).sum()
    }

    /// Aligned text table in the truth-by-prediction convention.
    pub fn render_table(&self) -> String {
        let width = self
            .class_names
            .iter()
            .map(|n| n.len())
            .chain(self.counts.iter().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        let _ = write!(out, "{:>width$} |", "T \\ P");
        for name in &self.class_names {
            let _ = write!(out, " {name:>width$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat((width + 2) * (self.k + 1)));
        for t in 1..=self.k {
            let _ = write!(out, "{:>width$} |", self.class_names[t - 1]);
            for p in 1..=self.k {
                let _ = write!(out, " {:>width$}", self.count(t, p));
            }
            out.push('\n');
        }
        out
    }

    /// Text heatmap shaded by each cell's share of the largest count.
    pub fn render_heatmap(&self) -> String {
        const SHADES: &[u8] = b" .:-=+*#%@";
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = String::new();
        for t in 1..=self.k {
            for p in 1..=self.k {
                let frac = self.count(t, p) as f64 / max as f64;
                let idx = (frac * (SHADES.len() - 1) as f64).round() as usize;
                let ch = SHADES[idx] as char;
                let _ = write!(out, "{ch}{ch}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth\\prediction");
        for name in &self.class_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for t in 1..=self.k {
            let _ = write!(out, "{}", self.class_names[t - 1]);
            for p in 1..=self.k {
                let _ = write!(out, ",{}", self.count(t, p));
            }
            out.push('\n');
        }
        out
    }
}

/// Tallies `counts[t][p] = |{i : truth_i = t and pred_i = p}|`.
pub fn confusion(truth: &[u32], pred: &[u32], k: usize) -> Result<ConfusionMatrix, EvalError> {
    if k == 0 {
        return Err(EvalError::NoClasses);
    }
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch(truth.len(), pred.len()));
    }
    let mut counts = vec![0u64; k * k];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        for value in [t, p] {
            if value == 0 || value as usize > k {
                return Err(EvalError::LabelOutOfRange { index: i, value, k });
            }
        }
        counts[(t as usize - 1) * k + (p as usize - 1)] += 1;
    }
    Ok(ConfusionMatrix {
        k,
        counts,
        class_names: (1..=k).map(|c| format!("class {c}")).collect(),
    })
}

pub fn accuracy(truth: &[u32], pred: &[u32]) -> Result<f64, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::ZeroSize);
    }
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Per-class metrics; `None` marks an undefined value (zero denominator),
/// which is excluded from the means rather than silently zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    /// Classes with at least one undefined metric.
    pub undefined_classes: Vec<String>,
}

impl MetricsReport {
    pub fn render_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{:>9.2}%", 100.0 * x),
            None => format!("{:>10}", "undef"),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>width$} {:>10} {:>10} {:>10}",
            "class", "precision", "recall", "F1"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:>width$} {} {} {}",
                c.name,
                fmt(c.precision),
                fmt(c.recall),
                fmt(c.f1)
            );
        }
        let _ = writeln!(
            out,
            "{:>width$} {} {} {}",
            "mean",
            fmt(self.mean_precision),
            fmt(self.mean_recall),
            fmt(self.mean_f1)
        );
        if !self.undefined_classes.is_empty() {
            let _ = writeln!(
                out,
                "undefined metrics excluded from means: {}",
                self.undefined_classes.join(", ")
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "undef".into());
        let mut out = String::from("class,precision,recall,f1\n");
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.name,
                cell(c.precision),
                cell(c.recall),
                cell(c.f1)
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{}",
            cell(self.mean_precision),
            cell(self.mean_recall),
            cell(self.mean_f1)
        );
        out
    }
}

/// Precision `TP/(TP+FP)`, recall `TP/(TP+FN)` and their harmonic mean per
/// class, plus unweighted means over the classes where each metric is
/// defined.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut per_class = Vec::with_capacity(cm.k());
    let mut undefined = Vec::new();
    for c in 1..=cm.k() {
        let tp = cm.count(c, c) as f64;
        let col = cm.col_sum(c) as f64;
        let row = cm.row_sum(c) as f64;
        let precision = (col > 0.0).then(|| tp / col);
        let recall = (row > 0.0).then(|| tp / row);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let name = cm.class_names()[c - 1].clone();
        if precision.is_none() || recall.is_none() || f1.is_none() {
            undefined.push(name.clone());
        }
        per_class.push(ClassMetrics {
            name,
            precision,
            recall,
            f1,
        });
    }
    let mean = |get: fn(&ClassMetrics) -> Option<f64>| {
        let defined: Vec<f64> = per_class.iter().filter_map(get).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    MetricsReport {
        mean_precision: mean(|c| c.precision),
        mean_recall: mean(|c| c.recall),
        mean_f1: mean(|c| c.f1),
        per_class,
        undefined_classes: undefined,
    }
}

/// Both readings of the error-rate formula: the literal train-denominated
/// variant and the conventional test-denominated one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// misclassified test samples / training set size
    pub literal: f64,
    /// misclassified test samples / test set size
    pub standard: f64,
}

pub fn error_rate(
    misclassified: u64,
    train_size: usize,
    test_size: usize,
) -> Result<ErrorRates, EvalError> {
    if train_size == 0 || test_size == 0 {
        return Err(EvalError::ZeroSize);
    }
    Ok(ErrorRates {
        literal: misclassified as f64 / train_size as f64,
        standard: misclassified as f64 / test_size as f64,
    })
}

/// Wall-clock totals for one pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTiming {
    pub samples: usize,
    pub total_secs: f64,
}

impl StageTiming {
    pub fn mean_secs(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.total_secs / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingReport {
    pub encode_encrypt: StageTiming,
    pub inference: StageTiming,
    pub decrypt_decode: StageTiming,
}

impl TimingReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>8} {:>14} {:>16}",
            "stage", "samples", "total (s)", "mean (s/sample)"
        );
        for (name, stage) in [
            ("encode+encrypt", self.encode_encrypt),
            ("inference", self.inference),
            ("decrypt+decode", self.decrypt_decode),
        ] {
            let _ = writeln!(
                out,
                "{:<18} {:>8} {:>14.4} {:>16.6}",
                name,
                stage.samples,
                stage.total_secs,
                stage.mean_secs()
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,samples,total_secs,mean_secs\n");
        for (name, stage) in [
            ("encode_encrypt", self.encode_encrypt),
            ("inference", self.inference),
            ("decrypt_decode", self.decrypt_decode),
        ] {
            let _ = writeln!(
                out,
                "{name},{},{},{}",
                stage.samples,
                stage.total_secs,
                stage.mean_secs()
            );
        }
        out
    }
}

/// Times encode+encrypt, encrypted inference and decrypt+decode over
/// `samples`, one stage at a time. No thresholds are asserted; absolute
/// numbers are hardware-dependent and only reported.
pub fn bench_pipeline<R: Rng + ?Sized>(
    pk: &PublicKey,
    sk: &PrivateKey,
    codec: &FixedPointCodec,
    model: &QuantizedModel,
    samples: &[Vec<f64>],
    rng: &mut R,
) -> Result<TimingReport, InferError> {
    let n = samples.len();
    let zero = StageTiming {
        samples: 0,
        total_secs: 0.0,
    };
    if n == 0 {
        return Ok(TimingReport {
            encode_encrypt: zero,
            inference: zero,
            decrypt_decode: zero,
        });
    }
    model.audit(pk.n())?;

    let start = Instant::now();
    let encrypted: Vec<EncryptedVector> = samples
        .iter()
        .map(|row| encinfer::encrypt_sample(pk, codec, row, rng))
        .collect::<Result<_, _>>()?;
    let encode_encrypt = StageTiming {
        samples: n,
        total_secs: start.elapsed().as_secs_f64(),
    };

    let start = Instant::now();
    let logits: Vec<EncryptedVector> = encrypted
        .iter()
        .map(|v| encinfer::enc_forward(pk, model, v))
        .collect::<Result<_, _>>()?;
    let inference = StageTiming {
        samples: n,
        total_secs: start.elapsed().as_secs_f64(),
    };

    let start = Instant::now();
    for v in &logits {
        let _ = encinfer::decrypt_logits(sk, codec, v)?;
    }
    let decrypt_decode = StageTiming {
        samples: n,
        total_secs: start.elapsed().as_secs_f64(),
    };

    Ok(TimingReport {
        encode_encrypt,
        inference,
        decrypt_decode,
    })
}
