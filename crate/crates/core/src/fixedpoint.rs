//! Signed fixed-point encoding of reals into `Z_n`.
//!
//! A value `x` is quantized to `round(x * 2^(frac_bits * level))` and stored
//! as a residue: non-negative values map to themselves, negative values to
//! `n - |v|`. The scale *level* counts how many `2^frac_bits` factors a value
//! has accumulated; each plaintext multiplication under encryption adds one
//! level, and decoding divides the signed residue back down. No division is
//! ever performed under encryption: rescaling of ciphertext values is
//! deferred to post-decryption decoding.

use num_bigint::{BigInt, BigUint};
use num_traits::{FromPrimitive, Signed, ToPrimitive};
use thiserror::Error;

/// Lower bound on the fractional precision.
pub const MIN_FRAC_BITS: u32 = 5;
/// Upper bound on the fractional precision.
pub const MAX_FRAC_BITS: u32 = 64;
/// Default precision: the top of the useful 5..10 bit range, keeping
/// quantization error about an order of magnitude below the activation
/// approximation error.
pub const DEFAULT_FRAC_BITS: u32 = 10;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("frac_bits {0} outside [{MIN_FRAC_BITS}, {MAX_FRAC_BITS}]")]
    InvalidFracBits(u32),
    #[error("encoded magnitude exceeds n/2; value does not fit the modulus at this scale")]
    Overflow,
    #[error("cannot rescale from level {0} down to level {1}")]
    InvalidRescale(u32, u32),
    #[error("cannot encode a non-finite value")]
    NonFinite,
    #[error("residue {0} is not below the modulus")]
    OutOfRange(BigUint),
}

/// Signed real <-> integer-mod-n mapping with a configurable fractional-bit
/// parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointCodec {
    frac_bits: u32,
    modulus: BigUint,
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32, modulus: BigUint) -> Result<Self, CodecError> {
        if !(MIN_FRAC_BITS..=MAX_FRAC_BITS).contains(&frac_bits) {
            return Err(CodecError::InvalidFracBits(frac_bits));
        }
        Ok(FixedPointCodec { frac_bits, modulus })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    /// `2^(frac_bits * level)`.
    pub fn scale_factor(&self, level: u32) -> BigInt {
        BigInt::from(1u32) << (self.frac_bits as u64 * level as u64)
    }

    /// Quantizes `x` at the given scale level and wraps it into `[0, n)`.
    pub fn encode(&self, x: f64, level: u32) -> Result<BigUint, CodecError> {
        let signed = quantize(x, self.frac_bits, level).ok_or(CodecError::NonFinite)?;
        self.wrap_signed(&signed)
    }

    /// Interprets `v > n/2` as negative, then divides by `2^(frac_bits * level)`.
    pub fn decode(&self, v: &BigUint, level: u32) -> f64 {
        dequantize(&self.to_signed(v), self.frac_bits, level)
    }

    /// Maps a signed integer into `[0, n)`, enforcing the `|s| < n/2`
    /// magnitude bound that keeps the signed interpretation unambiguous.
    pub fn wrap_signed(&self, s: &BigInt) -> Result<BigUint, CodecError> {
        let magnitude = s.magnitude();
        if magnitude * 2u32 >= self.modulus {
            return Err(CodecError::Overflow);
        }
        if s.is_negative() {
            Ok(&self.modulus - magnitude)
        } else {
            Ok(magnitude.clone())
        }
    }

    /// Inverse of [`FixedPointCodec::wrap_signed`] on `[0, n)`.
    pub fn to_signed(&self, v: &BigUint) -> BigInt {
        if v * 2u32 > self.modulus {
            -BigInt::from(&self.modulus - v)
        } else {
            BigInt::from(v.clone())
        }
    }

    /// Multiplies the signed value by `2^(frac_bits * (to - from))`,
    /// re-wrapping into `[0, n)`. Used to align plaintext constants with a
    /// ciphertext's scale before homomorphic addition.
    pub fn rescale_plain(&self, v: &BigUint, from: u32, to: u32) -> Result<BigUint, CodecError> {
        if to < from {
            return Err(CodecError::InvalidRescale(from, to));
        }
        if *v >= self.modulus {
            return Err(CodecError::OutOfRange(v.clone()));
        }
        let shifted = self.to_signed(v) << (self.frac_bits as u64 * (to - from) as u64);
        self.wrap_signed(&shifted)
    }
}

/// `round(x * 2^(frac_bits * level))` as a signed integer, rounding half away
/// from zero. Returns `None` for non-finite inputs or scaled overflow.
pub fn quantize(x: f64, frac_bits: u32, level: u32) -> Option<BigInt> {
    if !x.is_finite() {
        return None;
    }
    let scaled = x * ((frac_bits as u64 * level as u64) as f64).exp2();
    if !scaled.is_finite() {
        return None;
    }
    BigInt::from_f64(scaled.round())
}

/// Inverse of [`quantize`] up to rounding.
pub fn dequantize(s: &BigInt, frac_bits: u32, level: u32) -> f64 {
    let v = s.to_f64().unwrap_or(f64::NAN);
    v / ((frac_bits as u64 * level as u64) as f64).exp2()
}
