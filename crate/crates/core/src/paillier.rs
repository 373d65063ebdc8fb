//! Paillier cryptosystem over arbitrary-precision integers.
//!
//! Provides key generation, probabilistic encryption, decryption (direct and
//! CRT-accelerated) and the additive homomorphic operations: ciphertext
//! addition, plaintext-scalar multiplication and plaintext-constant addition.
//! Plaintexts live in `Z_n`; ciphertexts in `Z*_{n^2}`. Signed semantics on
//! top of `Z_n` are the business of the `fixedpoint` module.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;
use std::sync::OnceLock;
use thiserror::Error;

/// Smallest accepted key size. Intended for tests and benchmarks only.
pub const MIN_BIT_LENGTH: u64 = 64;
/// Production key size. Tests and benchmarks typically use 512 or 1024.
pub const DEFAULT_BIT_LENGTH: u64 = 2048;

const MILLER_RABIN_ROUNDS: u32 = 40;
const MAX_PRIME_ATTEMPTS: u32 = 500_000;

#[derive(Debug, Error)]
pub enum PaillierError {
    #[error("key size {0} is below the {MIN_BIT_LENGTH}-bit minimum")]
    BitLengthTooSmall(u64),
    #[error("prime generation did not converge within the attempt bound")]
    PrimeGenerationFailed,
    #[error("invalid prime pair: {0}")]
    InvalidPrimes(&'static str),
    #[error("generator does not satisfy the key validity condition")]
    InvalidGenerator,
    #[error("message is outside [0, n)")]
    MessageOutOfRange,
    #[error("ciphertext is not an element of Z*_(n^2)")]
    MalformedCiphertext,
    #[error("ciphertext scale levels differ ({0} vs {1}); rescale before adding")]
    ScaleMismatch(u32, u32),
}

/// How the generator `g` is chosen during key generation.
///
/// `n + 1` always satisfies the validity condition and admits the cheap
/// `(1+n)^m = 1 + m*n (mod n^2)` encryption path; random selection resamples
/// until `gcd(L(g^lambda mod n^2), n) = 1` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorMode {
    #[default]
    NPlusOne,
    Random,
}

/// Public key `(n, g)` with the cached square of the modulus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    n: BigUint,
    g: BigUint,
    n_squared: BigUint,
    bit_length: u64,
}

/// Private key `(lambda, mu)`. The prime factors are retained for
/// CRT-accelerated decryption.
#[derive(Debug, Clone)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
    p: BigUint,
    q: BigUint,
    public: PublicKey,
    crt: CrtContext,
}

/// Precomputed values for decryption modulo p and q separately.
#[derive(Debug, Clone)]
struct CrtContext {
    p_squared: BigUint,
    q_squared: BigUint,
    hp: BigUint,
    hq: BigUint,
    p_inv_mod_q: BigUint,
}

/// An element of `Z*_{n^2}` tagged with the fixed-point scale level of its
/// underlying plaintext (0 for raw integers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    value: BigUint,
    scale_exp: u32,
}

impl Ciphertext {
    pub fn from_parts(value: BigUint, scale_exp: u32) -> Self {
        Ciphertext { value, scale_exp }
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn scale_exp(&self) -> u32 {
        self.scale_exp
    }

    /// Re-tags the scale level. Scale bookkeeping across homomorphic
    /// multiplications is owned by the `encinfer` module; nothing else
    /// should need this.
    pub fn with_scale_exp(self, scale_exp: u32) -> Self {
        Ciphertext {
            value: self.value,
            scale_exp,
        }
    }
}

impl PublicKey {
    /// Reassembles a public key from its serialized fields, validating that
    /// `g` is a unit modulo `n^2`.
    pub fn from_parts(n: BigUint, g: BigUint) -> Result<Self, PaillierError> {
        if n < BigUint::from(4u32) {
            return Err(PaillierError::InvalidPrimes("modulus too small"));
        }
        let n_squared = &n * &n;
        if g.is_zero() || g >= n_squared || !g.gcd(&n_squared).is_one() {
            return Err(PaillierError::InvalidGenerator);
        }
        let bit_length = n.bits();
        Ok(PublicKey {
            n,
            g,
            n_squared,
            bit_length,
        })
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn g(&self) -> &BigUint {
        &self.g
    }

    pub fn n_squared(&self) -> &BigUint {
        &self.n_squared
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }

    fn has_default_generator(&self) -> bool {
        self.g == &self.n + 1u32
    }

    /// `g^e mod n^2` for `e` already reduced into `[0, n)`. Uses the binomial
    /// shortcut `(1+n)^e = 1 + e*n (mod n^2)` when `g = n + 1`.
    fn g_pow(&self, e: &BigUint) -> BigUint {
        if self.has_default_generator() {
            (BigUint::one() + e * &self.n) % &self.n_squared
        } else {
            self.g.modpow(e, &self.n_squared)
        }
    }

    fn check_range(&self, value: &BigUint) -> Result<(), PaillierError> {
        if value.is_zero() || *value >= self.n_squared {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(())
    }

    /// Full membership check in `Z*_{n^2}`; used at trust boundaries
    /// (decryption, deserialized ciphertexts). The homomorphic operations
    /// only range-check since they preserve coprimality.
    pub fn check_element(&self, value: &BigUint) -> Result<(), PaillierError> {
        self.check_range(value)?;
        if !value.gcd(&self.n_squared).is_one() {
            return Err(PaillierError::MalformedCiphertext);
        }
        Ok(())
    }

    fn sample_r<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = rng.gen_biguint_range(&BigUint::one(), &self.n);
            if r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// Encrypts `m` in `[0, n)` as `g^m * r^n mod n^2` with fresh randomness
    /// `r` drawn from `Z*_n`. The result carries scale level 0.
    pub fn encrypt<R: Rng + ?Sized>(
        &self,
        m: &BigUint,
        rng: &mut R,
    ) -> Result<Ciphertext, PaillierError> {
        if *m >= self.n {
            return Err(PaillierError::MessageOutOfRange);
        }
        let r = self.sample_r(rng);
        let r_n = r.modpow(&self.n, &self.n_squared);
        let value = (self.g_pow(m) * r_n) % &self.n_squared;
        Ok(Ciphertext {
            value,
            scale_exp: 0,
        })
    }

    /// Homomorphic addition: decrypts to `(m_a + m_b) mod n`. Requires both
    /// operands at the same scale level.
    pub fn add_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, PaillierError> {
        if a.scale_exp != b.scale_exp {
            return Err(PaillierError::ScaleMismatch(a.scale_exp, b.scale_exp));
        }
        self.check_range(&a.value)?;
        self.check_range(&b.value)?;
        Ok(Ciphertext {
            value: (&a.value * &b.value) % &self.n_squared,
            scale_exp: a.scale_exp,
        })
    }

    /// Homomorphic scalar multiplication: decrypts to `(k * m_a) mod n`.
    /// Negative `k` is reduced modulo `n` first, so the signed-residue
    /// convention of `fixedpoint` carries through. The scale tag is
    /// preserved; level bookkeeping for scaled `k` is done in `encinfer`.
    pub fn mul_plain(&self, a: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check_range(&a.value)?;
        let e = reduce_mod(k, &self.n);
        Ok(Ciphertext {
            value: a.value.modpow(&e, &self.n_squared),
            scale_exp: a.scale_exp,
        })
    }

    /// Homomorphic constant addition: decrypts to `(m_a + k) mod n`.
    pub fn add_plain(&self, a: &Ciphertext, k: &BigInt) -> Result<Ciphertext, PaillierError> {
        self.check_range(&a.value)?;
        let e = reduce_mod(k, &self.n);
        Ok(Ciphertext {
            value: (&a.value * self.g_pow(&e)) % &self.n_squared,
            scale_exp: a.scale_exp,
        })
    }
}

impl PrivateKey {
    pub fn lambda(&self) -> &BigUint {
        &self.lambda
    }

    pub fn mu(&self) -> &BigUint {
        &self.mu
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    /// Direct decryption: `m = L(c^lambda mod n^2) * mu mod n`.
    pub fn decrypt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.public.check_element(&c.value)?;
        let w = c.value.modpow(&self.lambda, &self.public.n_squared);
        let l = l_function(&w, &self.public.n).ok_or(PaillierError::MalformedCiphertext)?;
        Ok((l * &self.mu) % &self.public.n)
    }

    /// CRT-accelerated decryption using the retained prime factors. Agrees
    /// with [`PrivateKey::decrypt`] on every valid ciphertext.
    pub fn decrypt_crt(&self, c: &Ciphertext) -> Result<BigUint, PaillierError> {
        self.public.check_element(&c.value)?;
        let crt = &self.crt;
        let p_minus_1 = &self.p - 1u32;
        let q_minus_1 = &self.q - 1u32;

        let wp = c.value.modpow(&p_minus_1, &crt.p_squared);
        let lp = l_function(&wp, &self.p).ok_or(PaillierError::MalformedCiphertext)?;
        let mp = (lp * &crt.hp) % &self.p;

        let wq = c.value.modpow(&q_minus_1, &crt.q_squared);
        let lq = l_function(&wq, &self.q).ok_or(PaillierError::MalformedCiphertext)?;
        let mq = (lq * &crt.hq) % &self.q;

        // Garner recombination into [0, pq).
        let diff = (&mq + &self.q - (&mp % &self.q)) % &self.q;
        Ok(&mp + &self.p * ((diff * &crt.p_inv_mod_q) % &self.q))
    }
}

/// Generates a key pair with `g = n + 1`.
pub fn keygen<R: Rng + ?Sized>(
    bit_length: u64,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    keygen_with(bit_length, GeneratorMode::NPlusOne, rng)
}

/// Generates a key pair, choosing the generator per `mode`. The primes are
/// random `bit_length/2`-bit candidates subjected to Miller-Rabin with
/// `MILLER_RABIN_ROUNDS` witnesses; the modulus has exactly `bit_length`
/// bits.
pub fn keygen_with<R: Rng + ?Sized>(
    bit_length: u64,
    mode: GeneratorMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    if bit_length < MIN_BIT_LENGTH {
        return Err(PaillierError::BitLengthTooSmall(bit_length));
    }
    let p_bits = bit_length.div_ceil(2);
    let q_bits = bit_length - p_bits;
    for _ in 0..64 {
        let p = generate_prime(p_bits, rng)?;
        let q = generate_prime(q_bits, rng)?;
        match assemble_keypair(p, q, mode, rng) {
            Ok(pair) => return Ok(pair),
            // Equal primes or lambda sharing a factor with n; both vanish
            // after a resample.
            Err(PaillierError::InvalidPrimes(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(PaillierError::PrimeGenerationFailed)
}

/// Builds a key pair from caller-supplied primes after probabilistically
/// verifying their primality. Intended for deterministic test and benchmark
/// keys; use [`keygen`] for fresh keys.
pub fn keypair_from_primes<R: Rng + ?Sized>(
    p: BigUint,
    q: BigUint,
    mode: GeneratorMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    if !is_probable_prime(&p, MILLER_RABIN_ROUNDS, rng)
        || !is_probable_prime(&q, MILLER_RABIN_ROUNDS, rng)
    {
        return Err(PaillierError::InvalidPrimes("p and q must both be prime"));
    }
    assemble_keypair(p, q, mode, rng)
}

/// Key assembly shared by [`keygen_with`], [`keypair_from_primes`] and the
/// key file loader. Assumes `p` and `q` are prime.
pub(crate) fn assemble_keypair<R: Rng + ?Sized>(
    p: BigUint,
    q: BigUint,
    mode: GeneratorMode,
    rng: &mut R,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    if p == q {
        return Err(PaillierError::InvalidPrimes("p and q must differ"));
    }
    let n = &p * &q;
    let lambda = (&p - 1u32).lcm(&(&q - 1u32));
    if !lambda.gcd(&n).is_one() {
        // Happens when p divides q-1 or vice versa; mu would not exist.
        return Err(PaillierError::InvalidPrimes(
            "lcm(p-1, q-1) shares a factor with n",
        ));
    }
    let n_squared = &n * &n;
    let g = match mode {
        GeneratorMode::NPlusOne => &n + 1u32,
        GeneratorMode::Random => loop {
            let candidate = rng.gen_biguint_below(&n_squared);
            if candidate.is_zero() || !candidate.gcd(&n).is_one() {
                continue;
            }
            let w = candidate.modpow(&lambda, &n_squared);
            match l_function(&w, &n) {
                Some(l) if l.gcd(&n).is_one() => break candidate,
                _ => continue,
            }
        },
    };
    assemble_with_generator(p, q, n, lambda, g, n_squared)
}

pub(crate) fn assemble_with_generator(
    p: BigUint,
    q: BigUint,
    n: BigUint,
    lambda: BigUint,
    g: BigUint,
    n_squared: BigUint,
) -> Result<(PublicKey, PrivateKey), PaillierError> {
    let w = g.modpow(&lambda, &n_squared);
    let l = l_function(&w, &n).ok_or(PaillierError::InvalidGenerator)?;
    let mu = mod_inverse(&l, &n).ok_or(PaillierError::InvalidGenerator)?;

    let bit_length = n.bits();
    let public = PublicKey {
        n,
        g,
        n_squared,
        bit_length,
    };
    let crt = CrtContext::build(&p, &q, &public.g).ok_or(PaillierError::InvalidGenerator)?;
    let private = PrivateKey {
        lambda,
        mu,
        p,
        q,
        public: public.clone(),
        crt,
    };
    Ok((public, private))
}

impl CrtContext {
    fn build(p: &BigUint, q: &BigUint, g: &BigUint) -> Option<Self> {
        let p_squared = p * p;
        let q_squared = q * q;
        let gp = g.modpow(&(p - 1u32), &p_squared);
        let hp = mod_inverse(&l_function(&gp, p)?, p)?;
        let gq = g.modpow(&(q - 1u32), &q_squared);
        let hq = mod_inverse(&l_function(&gq, q)?, q)?;
        let p_inv_mod_q = mod_inverse(&(p % q), q)?;
        Some(CrtContext {
            p_squared,
            q_squared,
            hp,
            hq,
            p_inv_mod_q,
        })
    }
}

/// `L(x) = (x - 1) / divisor`, defined only when the division is exact.
fn l_function(x: &BigUint, divisor: &BigUint) -> Option<BigUint> {
    let (quot, rem) = (x - 1u32).div_rem(divisor);
    rem.is_zero().then_some(quot)
}

/// Modular inverse via the extended Euclidean algorithm.
pub(crate) fn mod_inverse(a: &BigUint, modulus: &BigUint) -> Option<BigUint> {
    let a = BigInt::from(a.clone());
    let m = BigInt::from(modulus.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    ext.x.mod_floor(&m).to_biguint()
}

/// Reduces a signed integer into `[0, n)`.
fn reduce_mod(k: &BigInt, n: &BigUint) -> BigUint {
    let n_int = BigInt::from(n.clone());
    k.mod_floor(&n_int)
        .to_biguint()
        .expect("mod_floor of positive modulus is non-negative")
}

fn small_primes() -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let limit = 1usize << 12;
        let mut sieve = vec![true; limit];
        let mut primes = Vec::new();
        for i in 2..limit {
            if sieve[i] {
                primes.push(i as u64);
                let mut j = i * i;
                while j < limit {
                    sieve[j] = false;
                    j += i;
                }
            }
        }
        primes
    })
}

/// Miller-Rabin with random witnesses, preceded by small-prime trial
/// division.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    if n < &BigUint::from(2u32) {
        return false;
    }
    for &sp in small_primes() {
        let sp_big = BigUint::from(sp);
        if *n == sp_big {
            return true;
        }
        if (n % sp_big).is_zero() {
            return false;
        }
    }
    let one = BigUint::one();
    let two = BigUint::from(2u32);
    let n_minus_1 = n - &one;
    let s = n_minus_1
        .trailing_zeros()
        .expect("n is odd and > 2, so n-1 > 0");
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime with the top two bits set, so the product of two such primes
/// has exactly the requested total bit length.
fn generate_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> Result<BigUint, PaillierError> {
    debug_assert!(bits >= 8);
    for _ in 0..MAX_PRIME_ATTEMPTS {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return Ok(candidate);
        }
    }
    Err(PaillierError::PrimeGenerationFailed)
}
