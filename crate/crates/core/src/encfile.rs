//! Encrypted sample/logit files: JSON Lines, one record per sample with a
//! mandatory version field, the scale level, the width and the ciphertext
//! values as lowercase hex big integers.

use crate::encinfer::{EncryptedVector, InferError};
use crate::paillier::{Ciphertext, PublicKey};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

pub const ENC_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncfileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("record {line}: {detail}")]
    Record { line: usize, detail: String },
    #[error("record {line}: unsupported version {found}")]
    Version { line: usize, found: u32 },
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Serialize, Deserialize)]
struct EncRecord {
    version: u32,
    scale_level: u32,
    width: usize,
    values: Vec<String>,
}

pub fn write_encrypted(
    path: impl AsRef<Path>,
    vectors: &[EncryptedVector],
) -> Result<(), EncfileError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in vectors {
        let record = EncRecord {
            version: ENC_FILE_VERSION,
            scale_level: v.level(),
            width: v.width(),
            values: v.cts().iter().map(|c| format!("{:x}", c.value())).collect(),
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| EncfileError::Record {
                line: 0,
                detail: e.to_string(),
            })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads and validates records against the public key: width consistency,
/// range and coprimality of every ciphertext value. Errors carry the
/// offending line number.
pub fn read_encrypted(
    path: impl AsRef<Path>,
    pk: &PublicKey,
) -> Result<Vec<EncryptedVector>, EncfileError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut vectors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EncRecord = serde_json::from_str(&line).map_err(|e| EncfileError::Record {
            line: line_no,
            detail: e.to_string(),
        })?;
        if record.version != ENC_FILE_VERSION {
            return Err(EncfileError::Version {
                line: line_no,
                found: record.version,
            });
        }
        if record.values.len() != record.width {
            return Err(EncfileError::Record {
                line: line_no,
                detail: format!(
                    "width field {} does not match {} values",
                    record.width,
                    record.values.len()
                ),
            });
        }
        let mut cts = Vec::with_capacity(record.width);
        for value in &record.values {
            let v = BigUint::parse_bytes(value.as_bytes(), 16).ok_or_else(|| {
                EncfileError::Record {
                    line: line_no,
                    detail: format!("value is not lowercase hex: '{value}'"),
                }
            })?;
            pk.check_element(&v).map_err(|e| EncfileError::Record {
                line: line_no,
                detail: e.to_string(),
            })?;
            cts.push(Ciphertext::from_parts(v, record.scale_level));
        }
        vectors.push(EncryptedVector::new(cts).map_err(|e| EncfileError::Record {
            line: line_no,
            detail: e.to_string(),
        })?);
    }
    Ok(vectors)
}
