//! Fully connected feed-forward network: one hidden layer, softmax
//! cross-entropy training with minibatch SGD, and a hyperbolic
//! learning-rate schedule with a floor.
//!
//! The hidden activation is either the exact sigmoid or its linear
//! approximation `0.238*z + 0.5`, fitted on [-1, 1]. The linear form is what
//! survives under additive homomorphic encryption, so a model intended for
//! encrypted inference is trained and exported in `LinearApprox` mode.

use crate::data::Dataset;
use crate::encinfer::{LeveledMatrix, LeveledVec, QuantizedModel};
use crate::fixedpoint::{self, quantize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

/// Slope of the linear activation approximation.
pub const APPROX_SLOPE: f64 = 0.238;
/// Intercept of the linear activation approximation.
pub const APPROX_INTERCEPT: f64 = 0.5;
/// The schedule clamps once the raw learning rate falls below this.
pub const LR_CLAMP_THRESHOLD: f64 = 0.011;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {row}: label {value} outside [1, {classes}]")]
    LabelOutOfRange {
        row: usize,
        value: u32,
        classes: usize,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged: non-finite loss at step {0}")]
    Diverged(usize),
    #[error("model contains a non-finite weight")]
    NonFiniteWeight,
    #[error("layer widths must be at least 1")]
    EmptyLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationMode {
    Sigmoid,
    LinearApprox,
}

impl ActivationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivationMode::Sigmoid => "sigmoid",
            ActivationMode::LinearApprox => "linear_approx",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(ActivationMode::Sigmoid),
            "linear_approx" => Some(ActivationMode::LinearApprox),
            _ => None,
        }
    }
}

/// One-hidden-layer network. Weight matrices are row-major: `w1[i * n_d + j]`
/// connects input `i` to hidden unit `j`, `w2[j * n_o + k]` connects hidden
/// `j` to output `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub n_i: usize,
    pub n_d: usize,
    pub n_o: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub activation: ActivationMode,
    /// Fractional bits used when the model is exported for encrypted
    /// inference; kept with the model so both sides agree bit-exactly.
    pub frac_bits: u32,
}

/// Everything the forward pass produces. `excursions` counts hidden
/// pre-activations outside [-1, 1], where the linear approximation degrades.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub excursions: u64,
}

impl NetworkModel {
    pub fn zeros(
        n_i: usize,
        n_d: usize,
        n_o: usize,
        activation: ActivationMode,
        frac_bits: u32,
    ) -> Result<Self, NetworkError> {
        if n_i == 0 || n_d == 0 || n_o == 0 {
            return Err(NetworkError::EmptyLayer);
        }
        Ok(NetworkModel {
            n_i,
            n_d,
            n_o,
            w1: vec![0.0; n_i * n_d],
            b1: vec![0.0; n_d],
            w2: vec![0.0; n_d * n_o],
            b2: vec![0.0; n_o],
            activation,
            frac_bits,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases,
    /// deterministic under the seed.
    pub fn random_init(
        n_i: usize,
        n_d: usize,
        n_o: usize,
        activation: ActivationMode,
        frac_bits: u32,
        seed: u64,
    ) -> Result<Self, NetworkError> {
        let mut model = Self::zeros(n_i, n_d, n_o, activation, frac_bits)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bound1 = 1.0 / (n_i as f64).sqrt();
        for w in model.w1.iter_mut() {
            *w = rng.gen_range(-bound1..=bound1);
        }
        let bound2 = 1.0 / (n_d as f64).sqrt();
        for w in model.w2.iter_mut() {
            *w = rng.gen_range(-bound2..=bound2);
        }
        Ok(model)
    }

    fn activate(&self, z: f64) -> f64 {
        match self.activation {
            ActivationMode::Sigmoid => sigmoid(z),
            ActivationMode::LinearApprox => approx_activation(z),
        }
    }

    /// Derivative of the activation expressed through pre-activation `z`
    /// and activation value `a`.
    fn activation_derivative(&self, _z: f64, a: f64) -> f64 {
        match self.activation {
            ActivationMode::Sigmoid => a * (1.0 - a),
            ActivationMode::LinearApprox => APPROX_SLOPE,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward, NetworkError> {
        if x.len() != self.n_i {
            return Err(NetworkError::Dimension(format!(
                "input width {} != n_i {}",
                x.len(),
                self.n_i
            )));
        }
        let mut hidden_pre = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.w1[i * self.n_d..(i + 1) * self.n_d];
                for (j, &w) in row.iter().enumerate() {
                    hidden_pre[j] += w * xi;
                }
            }
        }
        let excursions = hidden_pre.iter().filter(|h| h.abs() > 1.0).count() as u64;
        let hidden: Vec<f64> = hidden_pre.iter().map(|&h| self.activate(h)).collect();
        let mut logits = self.b2.clone();
        for (j, &aj) in hidden.iter().enumerate() {
            let row = &self.w2[j * self.n_o..(j + 1) * self.n_o];
            for (k, &w) in row.iter().enumerate() {
                logits[k] += w * aj;
            }
        }
        let probs = softmax(&logits);
        Ok(Forward {
            hidden_pre,
            hidden,
            logits,
            probs,
            excursions,
        })
    }

    /// 1-based predicted class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize, NetworkError> {
        Ok(argmax1(&self.forward(x)?.logits))
    }

    /// Fraction of samples whose argmax matches the label.
    pub fn accuracy(&self, ds: &Dataset) -> Result<f64, NetworkError> {
        if ds.n_samples() == 0 {
            return Err(NetworkError::EmptyDataset);
        }
        let mut correct = 0usize;
        for (row, label) in ds.features.iter().zip(&ds.labels) {
            if self.predict(row)? == *label as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / ds.n_samples() as f64)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Linear approximation of the sigmoid, `0.238*z + 0.5`. Accurate on
/// [-1, 1]; callers tracking fidelity count pre-activations outside that
/// interval (see [`Forward::excursions`]).
pub fn approx_activation(z: f64) -> f64 {
    APPROX_SLOPE * z + APPROX_INTERCEPT
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Cross-entropy of a single one-hot target against predicted class
/// probabilities; `label` is 1-based.
pub fn cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label - 1].max(f64::MIN_POSITIVE).ln()
}

/// 1-based index of the maximum; ties resolve to the lowest index.
pub fn argmax1(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iters_num: usize,
    pub batch_size: usize,
    pub eta0: f64,
    pub eta_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iters_num: 20_000,
            batch_size: 100,
            eta0: 0.2,
            eta_floor: 0.01,
            seed: 42,
        }
    }
}

impl TrainConfig {
    fn validate(&self, train_size: usize) -> Result<(), NetworkError> {
        if self.iters_num == 0 {
            return Err(NetworkError::InvalidConfig("iters_num must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NetworkError::InvalidConfig("batch_size must be > 0".into()));
        }
        if self.batch_size > train_size {
            return Err(NetworkError::InvalidConfig(format!(
                "batch_size {} exceeds training set size {}",
                self.batch_size, train_size
            )));
        }
        if !(self.eta_floor > 0.0 && self.eta_floor < self.eta0) {
            return Err(NetworkError::InvalidConfig(
                "requires 0 < eta_floor < eta0".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate for epoch `i`: `eta0 * ipe / (20*i + ipe)` with
/// `ipe = train_size / batch_size` (real-valued), clamped to `eta_floor`
/// once the raw value drops below [`LR_CLAMP_THRESHOLD`].
pub fn lr_schedule(cfg: &TrainConfig, train_size: usize, epoch_index: usize) -> f64 {
    let iter_per_epoch = train_size as f64 / cfg.batch_size as f64;
    let t1 = iter_per_epoch;
    // t0 / (20i + t1) with t0 = eta0 * t1, grouped so epoch 0 yields eta0
    // exactly in floating point
    let eta = cfg.eta0 * (t1 / (epoch_index as f64 * 20.0 + t1));
    if eta < LR_CLAMP_THRESHOLD {
        cfg.eta_floor
    } else {
        eta
    }
}

/// Mean gradients over a minibatch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Pre-step statistics of the minibatch the gradients came from.
#[derive(Debug, Clone, Copy)]
pub struct BatchStats {
    pub loss: f64,
    pub correct: usize,
    pub excursions: u64,
}

pub fn gradients(
    model: &NetworkModel,
    ds: &Dataset,
    batch: &[usize],
) -> Result<(Gradients, BatchStats), NetworkError> {
    if batch.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    let mut g = Gradients {
        w1: vec![0.0; model.w1.len()],
        b1: vec![0.0; model.b1.len()],
        w2: vec![0.0; model.w2.len()],
        b2: vec![0.0; model.b2.len()],
    };
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut excursions = 0u64;
    for &idx in batch {
        let x = &ds.features[idx];
        let label = ds.labels[idx] as usize;
        if label == 0 || label > model.n_o {
            return Err(NetworkError::LabelOutOfRange {
                row: idx,
                value: ds.labels[idx],
                classes: model.n_o,
            });
        }
        let fw = model.forward(x)?;
        excursions += fw.excursions;

        // stable cross-entropy from logits
        let max = fw.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + fw.logits
                .iter()
                .map(|&l| (l - max).exp())
                .sum::<f64>()
                .ln();
        loss_sum += lse - fw.logits[label - 1];
        if argmax1(&fw.logits) == label {
            correct += 1;
        }

        // d loss / d logits = softmax - onehot
        let mut dlogits = fw.probs.clone();
        dlogits[label - 1] -= 1.0;

        for (k, &dk) in dlogits.iter().enumerate() {
            g.b2[k] += dk;
        }
        let mut dhidden = vec![0.0; model.n_d];
        for (j, &aj) in fw.hidden.iter().enumerate() {
            let row = j * model.n_o;
            let mut da = 0.0;
            for (k, &dk) in dlogits.iter().enumerate() {
                g.w2[row + k] += aj * dk;
                da += model.w2[row + k] * dk;
            }
            dhidden[j] = da * model.activation_derivative(fw.hidden_pre[j], aj);
        }
        for (j, &dj) in dhidden.iter().enumerate() {
            g.b1[j] += dj;
        }
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = i * model.n_d;
                for (j, &dj) in dhidden.iter().enumerate() {
                    g.w1[row + j] += xi * dj;
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for v in g
        .w1
        .iter_mut()
        .chain(&mut g.b1)
        .chain(&mut g.w2)
        .chain(&mut g.b2)
    {
        *v *= scale;
    }
    let stats = BatchStats {
        loss: loss_sum * scale,
        correct,
        excursions,
    };
    Ok((g, stats))
}

/// Mean cross-entropy over the given sample indices; the finite-difference
/// oracle in the tests differentiates this.
pub fn batch_loss(model: &NetworkModel, ds: &Dataset, batch: &[usize]) -> Result<f64, NetworkError> {
    let mut sum = 0.0;
    for &idx in batch {
        let fw = model.forward(&ds.features[idx])?;
        let max = fw.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max
            + fw.logits
                .iter()
                .map(|&l| (l - max).exp())
                .sum::<f64>()
                .ln();
        sum += lse - fw.logits[ds.labels[idx] as usize - 1];
    }
    Ok(sum / batch.len() as f64)
}

pub fn apply_step(model: &mut NetworkModel, g: &Gradients, eta: f64) {
    for (w, d) in model.w1.iter_mut().zip(&g.w1) {
        *w -= eta * d;
    }
    for (w, d) in model.b1.iter_mut().zip(&g.b1) {
        *w -= eta * d;
    }
    for (w, d) in model.w2.iter_mut().zip(&g.w2) {
        *w -= eta * d;
    }
    for (w, d) in model.b2.iter_mut().zip(&g.b2) {
        *w -= eta * d;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eta: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Hidden pre-activations beyond [-1, 1] seen during training.
    pub excursions: u64,
    pub final_eta: f64,
}

/// Minibatch SGD for `cfg.iters_num` steps. Epoch boundaries fall at step
/// `floor(i * train_size / batch_size)`; each boundary re-evaluates the
/// learning rate for epoch `i` and snapshots running loss/accuracy.
/// Deterministic for a fixed seed, config and dataset.
pub fn train(
    model: &mut NetworkModel,
    ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainReport, NetworkError> {
    let train_size = ds.n_samples();
    if train_size == 0 {
        return Err(NetworkError::EmptyDataset);
    }
    cfg.validate(train_size)?;
    for (row, &label) in ds.labels.iter().enumerate() {
        if label == 0 || label as usize > model.n_o {
            return Err(NetworkError::LabelOutOfRange {
                row,
                value: label,
                classes: model.n_o,
            });
        }
    }
    if ds.features[0].len() != model.n_i {
        return Err(NetworkError::Dimension(format!(
            "dataset width {} != n_i {}",
            ds.features[0].len(),
            model.n_i
        )));
    }

    let iter_per_epoch = train_size as f64 / cfg.batch_size as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut epoch_index = 0usize;
    let mut next_boundary = 0usize;
    let mut eta = cfg.eta0;
    let mut acc_loss = 0.0;
    let mut acc_correct = 0usize;
    let mut acc_batches = 0usize;
    let mut excursions = 0u64;
    let mut batch = vec![0usize; cfg.batch_size];

    for step in 0..cfg.iters_num {
        if step == next_boundary {
            if step > 0 {
                history.push(EpochRecord {
                    epoch: epoch_index - 1,
                    eta,
                    loss: acc_loss / acc_batches.max(1) as f64,
                    accuracy: acc_correct as f64 / (acc_batches * cfg.batch_size).max(1) as f64,
                });
                acc_loss = 0.0;
                acc_correct = 0;
                acc_batches = 0;
            }
            eta = lr_schedule(cfg, train_size, epoch_index);
            epoch_index += 1;
            next_boundary = (epoch_index as f64 * iter_per_epoch).floor() as usize;
        }
        for slot in batch.iter_mut() {
            *slot = rng.gen_range(0..train_size);
        }
        let (grads, stats) = gradients(model, ds, &batch)?;
        if !stats.loss.is_finite() {
            return Err(NetworkError::Diverged(step));
        }
        apply_step(model, &grads, eta);
        acc_loss += stats.loss;
        acc_correct += stats.correct;
        acc_batches += 1;
        excursions += stats.excursions;
    }
    if acc_batches > 0 {
        history.push(EpochRecord {
            epoch: epoch_index - 1,
            eta,
            loss: acc_loss / acc_batches as f64,
            accuracy: acc_correct as f64 / (acc_batches * cfg.batch_size) as f64,
        });
    }
    if excursions > 0 {
        log::warn!(
            "{excursions} hidden pre-activations left [-1, 1] during training; \
             the linear activation approximation degrades out there"
        );
    }
    Ok(TrainReport {
        history,
        excursions,
        final_eta: eta,
    })
}

/// `ceil(sqrt(n_i + n_o)) + [1, 10]`, the search interval for the hidden
/// width heuristic.
pub fn suggest_hidden_size(n_i: usize, n_o: usize) -> Result<(usize, usize), NetworkError> {
    if n_i == 0 || n_o == 0 {
        return Err(NetworkError::EmptyLayer);
    }
    let base = ((n_i + n_o) as f64).sqrt().ceil() as usize;
    Ok((base + 1, base + 10))
}

/// Quantizes the model to the signed fixed-point integers and scale levels
/// the encrypted evaluator expects: weights and the activation slope at
/// level 1, first-layer bias at level 2, activation intercept at level 3,
/// output bias at level 4.
pub fn export_model(model: &NetworkModel, frac_bits: u32) -> Result<QuantizedModel, NetworkError> {
    if !(fixedpoint::MIN_FRAC_BITS..=fixedpoint::MAX_FRAC_BITS).contains(&frac_bits) {
        return Err(NetworkError::InvalidConfig(format!(
            "frac_bits {frac_bits} outside supported range"
        )));
    }
    let q = |values: &[f64], level: u32| {
        values
            .iter()
            .map(|&v| quantize(v, frac_bits, level).ok_or(NetworkError::NonFiniteWeight))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(QuantizedModel {
        n_i: model.n_i,
        n_d: model.n_d,
        n_o: model.n_o,
        frac_bits,
        w1: LeveledMatrix::new(model.n_i, model.n_d, 1, q(&model.w1, 1)?),
        b1: LeveledVec::new(2, q(&model.b1, 2)?),
        act_slope: quantize(APPROX_SLOPE, frac_bits, 1).expect("constant is finite"),
        act_intercept: quantize(APPROX_INTERCEPT, frac_bits, 3).expect("constant is finite"),
        w2: LeveledMatrix::new(model.n_d, model.n_o, 1, q(&model.w2, 1)?),
        b2: LeveledVec::new(4, q(&model.b2, 4)?),
    })
}

/// Real-valued view of a quantized model; always linear-approx since that is
/// the only activation the quantized pipeline evaluates.
pub fn dequantize_model(q: &QuantizedModel) -> NetworkModel {
    let d = |values: &[num_bigint::BigInt], level: u32| {
        values
            .iter()
            .map(|v| fixedpoint::dequantize(v, q.frac_bits, level))
            .collect()
    };
    NetworkModel {
        n_i: q.n_i,
        n_d: q.n_d,
        n_o: q.n_o,
        w1: d(q.w1.values(), 1),
        b1: d(q.b1.values(), 2),
        w2: d(q.w2.values(), 1),
        b2: d(q.b2.values(), 4),
        activation: ActivationMode::LinearApprox,
        frac_bits: q.frac_bits,
    }
}

/// Upper bound on the per-logit error between real-valued linear-approx
/// inference and the quantized fixed-point evaluation, for inputs in
/// [0, 1]^n_i. Used to state the margin condition under which quantized and
/// real argmax agree.
pub fn quantization_logit_bound(model: &NetworkModel, frac_bits: u32) -> f64 {
    let eps1 = 2f64.powi(-(frac_bits as i32) - 1);
    let eps2 = 2f64.powi(-2 * frac_bits as i32 - 1);
    let eps3 = 2f64.powi(-3 * frac_bits as i32 - 1);
    let eps4 = 2f64.powi(-4 * frac_bits as i32 - 1);

    let mut err_logit_max: f64 = 0.0;
    // per-hidden bounds
    let mut h_bound = vec![0.0f64; model.n_d];
    let mut h_err = vec![0.0f64; model.n_d];
    for j in 0..model.n_d {
        let mut abs_sum = 0.0;
        for i in 0..model.n_i {
            abs_sum += model.w1[i * model.n_d + j].abs();
        }
        h_bound[j] = abs_sum + model.b1[j].abs();
        // input error eps1 against each |w|, weight error eps1 against each
        // |x| <= 1 (+eps1), bias error eps2
        h_err[j] = eps1 * abs_sum + eps1 * model.n_i as f64 * (1.0 + eps1) + eps2;
    }
    let mut a_bound = vec![0.0f64; model.n_d];
    let mut a_err = vec![0.0f64; model.n_d];
    for j in 0..model.n_d {
        let h_hat = h_bound[j] + h_err[j];
        a_err[j] = eps1 * h_hat + APPROX_SLOPE * h_err[j] + eps3;
        a_bound[j] = (APPROX_SLOPE + eps1) * h_hat + APPROX_INTERCEPT;
    }
    for k in 0..model.n_o {
        let mut err = eps4;
        for j in 0..model.n_d {
            let w = model.w2[j * model.n_o + k].abs();
            err += w * a_err[j] + (a_bound[j] + a_err[j]) * eps1;
        }
        err_logit_max = err_logit_max.max(err);
    }
    err_logit_max
}
