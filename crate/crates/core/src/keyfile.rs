//! Key file serialization: one JSON document per key with all big integers
//! as lowercase hexadecimal strings. Private key files are written with
//! owner-only permissions where the platform supports it.

use crate::paillier::{self, PaillierError, PrivateKey, PublicKey};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const KEY_FILE_VERSION: u32 = 1;
pub const PUBLIC_KEY_FILE: &str = "public_key.json";
pub const PRIVATE_KEY_FILE: &str = "private_key.json";

#[derive(Debug, Error)]
pub enum KeyfileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed key file: {0}")]
    Format(String),
    #[error("unsupported key file version {0}")]
    Version(u32),
    #[error("key file fails validation: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Crypto(#[from] PaillierError),
}

// deny_unknown_fields keeps a private key file from passing as a public one
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PublicKeyFile {
    version: u32,
    bit_length: u64,
    n: String,
    g: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrivateKeyFile {
    version: u32,
    bit_length: u64,
    n: String,
    g: String,
    lambda: String,
    mu: String,
    p: String,
    q: String,
}

fn hex(v: &BigUint) -> String {
    format!("{v:x}")
}

fn parse_hex(field: &str, value: &str) -> Result<BigUint, KeyfileError> {
    BigUint::parse_bytes(value.as_bytes(), 16)
        .ok_or_else(|| KeyfileError::Format(format!("field '{field}' is not lowercase hex")))
}

pub fn save_public(path: impl AsRef<Path>, pk: &PublicKey) -> Result<(), KeyfileError> {
    let file = PublicKeyFile {
        version: KEY_FILE_VERSION,
        bit_length: pk.bit_length(),
        n: hex(pk.n()),
        g: hex(pk.g()),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| KeyfileError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_public(path: impl AsRef<Path>) -> Result<PublicKey, KeyfileError> {
    let text = std::fs::read_to_string(path)?;
    let file: PublicKeyFile =
        serde_json::from_str(&text).map_err(|e| KeyfileError::Format(e.to_string()))?;
    if file.version != KEY_FILE_VERSION {
        return Err(KeyfileError::Version(file.version));
    }
    let n = parse_hex("n", &file.n)?;
    let g = parse_hex("g", &file.g)?;
    let pk = PublicKey::from_parts(n, g)?;
    if pk.bit_length() != file.bit_length {
        return Err(KeyfileError::Inconsistent(format!(
            "bit_length field {} does not match modulus ({} bits)",
            file.bit_length,
            pk.bit_length()
        )));
    }
    Ok(pk)
}

pub fn save_private(path: impl AsRef<Path>, sk: &PrivateKey) -> Result<(), KeyfileError> {
    let pk = sk.public();
    let file = PrivateKeyFile {
        version: KEY_FILE_VERSION,
        bit_length: pk.bit_length(),
        n: hex(pk.n()),
        g: hex(pk.g()),
        lambda: hex(sk.lambda()),
        mu: hex(sk.mu()),
        p: hex(sk.p()),
        q: hex(sk.q()),
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| KeyfileError::Format(e.to_string()))?;
    std::fs::write(&path, json)?;
    restrict_to_owner(path.as_ref())?;
    Ok(())
}

#[cfg(unix)]
fn restrict_to_owner(path: &Path) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))
}

#[cfg(not(unix))]
fn restrict_to_owner(_path: &Path) -> std::io::Result<()> {
    Ok(())
}

/// Loads and fully re-validates a private key: primality of the factors,
/// consistency of n, lambda and mu with them, and the generator's validity.
pub fn load_private(path: impl AsRef<Path>) -> Result<PrivateKey, KeyfileError> {
    let text = std::fs::read_to_string(path)?;
    let file: PrivateKeyFile =
        serde_json::from_str(&text).map_err(|e| KeyfileError::Format(e.to_string()))?;
    if file.version != KEY_FILE_VERSION {
        return Err(KeyfileError::Version(file.version));
    }
    let n = parse_hex("n", &file.n)?;
    let g = parse_hex("g", &file.g)?;
    let lambda = parse_hex("lambda", &file.lambda)?;
    let mu = parse_hex("mu", &file.mu)?;
    let p = parse_hex("p", &file.p)?;
    let q = parse_hex("q", &file.q)?;

    if &p * &q != n {
        return Err(KeyfileError::Inconsistent("n is not p * q".into()));
    }
    let mut rng = rand::rngs::OsRng;
    for (name, prime) in [("p", &p), ("q", &q)] {
        if !paillier::is_probable_prime(prime, 40, &mut rng) {
            return Err(KeyfileError::Inconsistent(format!("{name} is not prime")));
        }
    }
    let n_squared = &n * &n;
    let (public, private) =
        paillier::assemble_with_generator(p, q, n.clone(), lambda.clone(), g, n_squared)?;
    if private.lambda() != &lambda || private.mu() != &mu {
        return Err(KeyfileError::Inconsistent(
            "stored lambda/mu do not match the primes and generator".into(),
        ));
    }
    if public.bit_length() != file.bit_length {
        return Err(KeyfileError::Inconsistent(format!(
            "bit_length field {} does not match modulus ({} bits)",
            file.bit_length,
            public.bit_length()
        )));
    }
    Ok(private)
}
