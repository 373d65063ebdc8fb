//! Evaluation of the quantized network on Paillier ciphertexts using only
//! public-key operations.
//!
//! Scale levels compose through the pipeline: encrypted inputs sit at level
//! 1, the first weighted sum lifts them to level 2, the affine activation to
//! level 3 and the second weighted sum to level 4. Every operation checks
//! the declared level of its operands; a worst-case magnitude audit against
//! the key's modulus guarantees that no intermediate signed value wraps, so
//! the encrypted pipeline computes the identical integers as the plaintext
//! fixed-point evaluation in [`forward_quantized_plain`].

use crate::fixedpoint::{quantize, CodecError, FixedPointCodec};
use crate::paillier::{Ciphertext, PaillierError, PublicKey};
use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};
use rand::Rng;
use thiserror::Error;

/// Scale level of encrypted inputs.
pub const LEVEL_INPUT: u32 = 1;
/// Scale level after the first weighted sum.
pub const LEVEL_HIDDEN: u32 = 2;
/// Scale level after the affine activation.
pub const LEVEL_ACTIVATED: u32 = 3;
/// Scale level of the encrypted logits.
pub const LEVEL_LOGITS: u32 = 4;

#[derive(Debug, Error)]
pub enum InferError {
    #[error(transparent)]
    Crypto(#[from] PaillierError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("scale level mismatch: expected {expected}, found {found}")]
    Scale { expected: u32, found: u32 },
    #[error("encrypted vector must not be empty")]
    EmptyVector,
    #[error("ciphertexts in one vector carry different scale levels")]
    MixedScales,
    #[error("codec modulus does not match the public key")]
    CodecKeyMismatch,
    #[error(
        "worst-case intermediate magnitude needs {required_bits} bits but the \
         modulus allows only {available_bits}; use a larger key or fewer frac bits"
    )]
    MagnitudeBound {
        required_bits: u64,
        available_bits: u64,
    },
}

/// Signed quantized vector with its scale level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeveledVec {
    level: u32,
    values: Vec<BigInt>,
}

impl LeveledVec {
    pub fn new(level: u32, values: Vec<BigInt>) -> Self {
        LeveledVec { level, values }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[BigInt] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Signed quantized matrix, row-major, with its scale level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeveledMatrix {
    rows: usize,
    cols: usize,
    level: u32,
    values: Vec<BigInt>,
}

impl LeveledMatrix {
    pub fn new(rows: usize, cols: usize, level: u32, values: Vec<BigInt>) -> Self {
        assert_eq!(rows * cols, values.len(), "matrix shape mismatch");
        LeveledMatrix {
            rows,
            cols,
            level,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[BigInt] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> &BigInt {
        &self.values[row * self.cols + col]
    }
}

/// The trained network quantized for homomorphic evaluation: weights and the
/// activation slope at level 1, first bias at level 2, activation intercept
/// at level 3, output bias at level 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedModel {
    pub n_i: usize,
    pub n_d: usize,
    pub n_o: usize,
    pub frac_bits: u32,
    pub w1: LeveledMatrix,
    pub b1: LeveledVec,
    pub act_slope: BigInt,
    pub act_intercept: BigInt,
    pub w2: LeveledMatrix,
    pub b2: LeveledVec,
}

impl QuantizedModel {
    /// Structural checks: shapes and declared scale levels.
    pub fn validate(&self) -> Result<(), InferError> {
        let expect = |ok: bool, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(InferError::Dimension(msg))
            }
        };
        expect(
            self.w1.rows() == self.n_i && self.w1.cols() == self.n_d,
            format!("w1 is {}x{}", self.w1.rows(), self.w1.cols()),
        )?;
        expect(self.b1.len() == self.n_d, "b1 width".into())?;
        expect(
            self.w2.rows() == self.n_d && self.w2.cols() == self.n_o,
            format!("w2 is {}x{}", self.w2.rows(), self.w2.cols()),
        )?;
        expect(self.b2.len() == self.n_o, "b2 width".into())?;
        let levels = [
            (self.w1.level(), 1),
            (self.b1.level(), LEVEL_HIDDEN),
            (self.w2.level(), 1),
            (self.b2.level(), LEVEL_LOGITS),
        ];
        for (found, expected) in levels {
            if found != expected {
                return Err(InferError::Scale { expected, found });
            }
        }
        Ok(())
    }

    /// Largest signed magnitude any intermediate can reach for inputs in
    /// [0, 1], computed from absolute row sums.
    pub fn worst_case_magnitude(&self) -> BigUint {
        let x_max = BigInt::one() << self.frac_bits as u64;
        let mut worst = x_max.clone();
        let mut h_max = BigInt::zero();
        for j in 0..self.n_d {
            let mut h = BigInt::zero();
            for i in 0..self.n_i {
                h += self.w1.get(i, j).abs() * &x_max;
            }
            h += self.b1.values()[j].abs();
            if h > h_max {
                h_max = h;
            }
        }
        worst = worst.max(h_max.clone());
        let a_max = self.act_slope.abs() * &h_max + self.act_intercept.abs();
        worst = worst.max(a_max.clone());
        let mut z_max = BigInt::zero();
        for k in 0..self.n_o {
            let mut z = BigInt::zero();
            for j in 0..self.n_d {
                z += self.w2.get(j, k).abs() * &a_max;
            }
            z += self.b2.values()[k].abs();
            if z > z_max {
                z_max = z;
            }
        }
        worst.max(z_max).magnitude().clone()
    }

    /// Refuses models whose worst-case intermediate could wrap modulo `n`.
    pub fn audit(&self, modulus: &BigUint) -> Result<(), InferError> {
        self.validate()?;
        let worst = self.worst_case_magnitude();
        if &worst * 2u32 >= *modulus {
            return Err(InferError::MagnitudeBound {
                required_bits: worst.bits() + 1,
                available_bits: modulus.bits(),
            });
        }
        Ok(())
    }
}

/// Ciphertext vector with one uniform scale level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedVector {
    cts: Vec<Ciphertext>,
    level: u32,
}

impl EncryptedVector {
    pub fn new(cts: Vec<Ciphertext>) -> Result<Self, InferError> {
        let level = cts.first().ok_or(InferError::EmptyVector)?.scale_exp();
        if cts.iter().any(|c| c.scale_exp() != level) {
            return Err(InferError::MixedScales);
        }
        Ok(EncryptedVector { cts, level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn width(&self) -> usize {
        self.cts.len()
    }

    pub fn cts(&self) -> &[Ciphertext] {
        &self.cts
    }

    pub fn into_cts(self) -> Vec<Ciphertext> {
        self.cts
    }
}

fn check_codec(pk: &PublicKey, codec: &FixedPointCodec) -> Result<(), InferError> {
    if codec.modulus() != pk.n() {
        return Err(InferError::CodecKeyMismatch);
    }
    Ok(())
}

/// Encodes each feature at level 1 and encrypts it under the public key.
pub fn encrypt_sample<R: Rng + ?Sized>(
    pk: &PublicKey,
    codec: &FixedPointCodec,
    x: &[f64],
    rng: &mut R,
) -> Result<EncryptedVector, InferError> {
    check_codec(pk, codec)?;
    let cts = x
        .iter()
        .map(|&v| {
            let encoded = codec.encode(v, LEVEL_INPUT)?;
            Ok(pk.encrypt(&encoded, rng)?.with_scale_exp(LEVEL_INPUT))
        })
        .collect::<Result<Vec<_>, InferError>>()?;
    EncryptedVector::new(cts)
}

/// Encrypts a batch of samples, fanning out over `workers` threads. The
/// per-sample rng factory keeps the output independent of the worker count.
pub fn encrypt_batch<R, F>(
    pk: &PublicKey,
    codec: &FixedPointCodec,
    rows: &[Vec<f64>],
    workers: usize,
    make_rng: F,
) -> Result<Vec<EncryptedVector>, InferError>
where
    R: Rng,
    F: Fn(usize) -> R + Sync,
{
    check_codec(pk, codec)?;
    run_pool(workers, || {
        use rayon::prelude::*;
        rows.par_iter()
            .enumerate()
            .map(|(i, row)| {
                let mut rng = make_rng(i);
                encrypt_sample(pk, codec, row, &mut rng)
            })
            .collect()
    })
}

/// Homomorphic weighted sum: `out_j = sum_i v_i * w[i][j] + b_j`, lifting the
/// scale by one level. The bias must already sit at the output level.
pub fn enc_weighted_sum(
    pk: &PublicKey,
    w: &LeveledMatrix,
    b: &LeveledVec,
    v: &EncryptedVector,
) -> Result<EncryptedVector, InferError> {
    if w.level() != 1 {
        return Err(InferError::Scale {
            expected: 1,
            found: w.level(),
        });
    }
    let out_level = v.level() + 1;
    if b.level() != out_level {
        return Err(InferError::Scale {
            expected: out_level,
            found: b.level(),
        });
    }
    if w.rows() != v.width() || b.len() != w.cols() {
        return Err(InferError::Dimension(format!(
            "weights {}x{}, bias {}, input width {}",
            w.rows(),
            w.cols(),
            b.len(),
            v.width()
        )));
    }
    let mut outs = Vec::with_capacity(w.cols());
    for j in 0..w.cols() {
        // E(0) with unit randomness; exact and deterministic
        let mut acc = Ciphertext::from_parts(BigUint::one(), v.level());
        for (i, ct) in v.cts().iter().enumerate() {
            let k = w.get(i, j);
            if k.is_zero() {
                continue;
            }
            acc = pk.add_ct(&acc, &pk.mul_plain(ct, k)?)?;
        }
        let acc = pk.add_plain(&acc, &b.values()[j])?;
        outs.push(acc.with_scale_exp(out_level));
    }
    EncryptedVector::new(outs)
}

/// Homomorphic affine activation `slope * v + intercept`, level 2 -> 3.
pub fn enc_activation(
    pk: &PublicKey,
    model: &QuantizedModel,
    v: &EncryptedVector,
) -> Result<EncryptedVector, InferError> {
    if v.level() != LEVEL_HIDDEN {
        return Err(InferError::Scale {
            expected: LEVEL_HIDDEN,
            found: v.level(),
        });
    }
    let outs = v
        .cts()
        .iter()
        .map(|ct| {
            let scaled = pk.mul_plain(ct, &model.act_slope)?;
            let shifted = pk.add_plain(&scaled, &model.act_intercept)?;
            Ok(shifted.with_scale_exp(LEVEL_ACTIVATED))
        })
        .collect::<Result<Vec<_>, InferError>>()?;
    EncryptedVector::new(outs)
}

/// Full encrypted forward pass: weighted sum, affine activation, weighted
/// sum. Input at level 1, encrypted logits at level 4. Touches only the
/// public key.
pub fn enc_forward(
    pk: &PublicKey,
    model: &QuantizedModel,
    v: &EncryptedVector,
) -> Result<EncryptedVector, InferError> {
    model.audit(pk.n())?;
    if v.level() != LEVEL_INPUT {
        return Err(InferError::Scale {
            expected: LEVEL_INPUT,
            found: v.level(),
        });
    }
    if v.width() != model.n_i {
        return Err(InferError::Dimension(format!(
            "input width {} != n_i {}",
            v.width(),
            model.n_i
        )));
    }
    let hidden = enc_weighted_sum(pk, &model.w1, &model.b1, v)?;
    let activated = enc_activation(pk, model, &hidden)?;
    enc_weighted_sum(pk, &model.w2, &model.b2, &activated)
}

/// Batch encrypted inference across `workers` threads. Pure math: the output
/// is identical for any worker count.
pub fn enc_forward_batch(
    pk: &PublicKey,
    model: &QuantizedModel,
    inputs: &[EncryptedVector],
    workers: usize,
) -> Result<Vec<EncryptedVector>, InferError> {
    model.audit(pk.n())?;
    run_pool(workers, || {
        use rayon::prelude::*;
        inputs
            .par_iter()
            .map(|v| enc_forward(pk, model, v))
            .collect()
    })
}

fn run_pool<T>(workers: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    // workers == 0 lets rayon pick the hardware parallelism
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    pool.install(f)
}

/// Decrypts and decodes encrypted logits; returns the real-valued logits and
/// the 1-based predicted class (ties to the lowest index).
pub fn decrypt_logits(
    sk: &crate::paillier::PrivateKey,
    codec: &FixedPointCodec,
    logits: &EncryptedVector,
) -> Result<(Vec<f64>, usize), InferError> {
    check_codec(sk.public(), codec)?;
    let decoded = logits
        .cts()
        .iter()
        .map(|ct| {
            let m = sk.decrypt_crt(ct)?;
            Ok(codec.decode(&m, logits.level()))
        })
        .collect::<Result<Vec<f64>, InferError>>()?;
    let class = crate::network::argmax1(&decoded);
    Ok((decoded, class))
}

/// Quantizes a real input vector to level-1 signed integers.
pub fn quantize_input(frac_bits: u32, x: &[f64]) -> Result<Vec<BigInt>, InferError> {
    x.iter()
        .map(|&v| quantize(v, frac_bits, LEVEL_INPUT).ok_or(InferError::Codec(CodecError::NonFinite)))
        .collect()
}

/// Plaintext fixed-point evaluation of the quantized model over signed
/// integers. The encrypted pipeline must reproduce these values exactly.
pub fn forward_quantized_plain(
    model: &QuantizedModel,
    x: &[BigInt],
) -> Result<Vec<BigInt>, InferError> {
    model.validate()?;
    if x.len() != model.n_i {
        return Err(InferError::Dimension(format!(
            "input width {} != n_i {}",
            x.len(),
            model.n_i
        )));
    }
    let mut hidden = Vec::with_capacity(model.n_d);
    for j in 0..model.n_d {
        let mut h = model.b1.values()[j].clone();
        for (i, xi) in x.iter().enumerate() {
            h += model.w1.get(i, j) * xi;
        }
        hidden.push(h);
    }
    let activated: Vec<BigInt> = hidden
        .iter()
        .map(|h| &model.act_slope * h + &model.act_intercept)
        .collect();
    let mut logits = Vec::with_capacity(model.n_o);
    for k in 0..model.n_o {
        let mut z = model.b2.values()[k].clone();
        for (j, aj) in activated.iter().enumerate() {
            z += model.w2.get(j, k) * aj;
        }
        logits.push(z);
    }
    Ok(logits)
}
