//! Model file serialization: one JSON document carrying the real-valued
//! weights (decimal strings, round-trip exact for f64) together with their
//! quantized integer images and scale levels, plus the training history CSV.

use crate::encinfer::{LeveledMatrix, LeveledVec, QuantizedModel};
use crate::network::{ActivationMode, EpochRecord, NetworkModel};
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const MODEL_FILE_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.json";
pub const NORMALIZATION_FILE: &str = "normalization.json";
pub const CHANNELS_FILE: &str = "channels.json";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Error)]
pub enum ModelfileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error("model file is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Serialize, Deserialize)]
struct Dims {
    n_i: usize,
    n_d: usize,
    n_o: usize,
}

#[derive(Serialize, Deserialize)]
struct LeveledValues {
    level: u32,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct LeveledValue {
    level: u32,
    value: String,
}

#[derive(Serialize, Deserialize)]
struct QuantizedSection {
    w1: LeveledValues,
    b1: LeveledValues,
    act_slope: LeveledValue,
    act_intercept: LeveledValue,
    w2: LeveledValues,
    b2: LeveledValues,
}

#[derive(Serialize, Deserialize)]
struct WeightsSection {
    w1: Vec<String>,
    b1: Vec<String>,
    w2: Vec<String>,
    b2: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dims: Dims,
    activation_mode: String,
    frac_bits: u32,
    weights: WeightsSection,
    quantized: QuantizedSection,
}

fn reals_to_strings(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn strings_to_reals(field: &str, values: &[String]) -> Result<Vec<f64>, ModelfileError> {
    values
        .iter()
        .map(|s| {
            f64::from_str(s)
                .map_err(|_| ModelfileError::Format(format!("bad real in '{field}': '{s}'")))
        })
        .collect()
}

fn ints_to_strings(values: &[BigInt]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

fn strings_to_ints(field: &str, values: &[String]) -> Result<Vec<BigInt>, ModelfileError> {
    values
        .iter()
        .map(|s| {
            BigInt::from_str(s)
                .map_err(|_| ModelfileError::Format(format!("bad integer in '{field}': '{s}'")))
        })
        .collect()
}

pub fn save_model(
    path: impl AsRef<Path>,
    model: &NetworkModel,
    quantized: &QuantizedModel,
) -> Result<(), ModelfileError> {
    let file = ModelFile {
        version: MODEL_FILE_VERSION,
        dims: Dims {
            n_i: model.n_i,
            n_d: model.n_d,
            n_o: model.n_o,
        },
        activation_mode: model.activation.as_str().to_string(),
        frac_bits: quantized.frac_bits,
        weights: WeightsSection {
            w1: reals_to_strings(&model.w1),
            b1: reals_to_strings(&model.b1),
            w2: reals_to_strings(&model.w2),
            b2: reals_to_strings(&model.b2),
        },
        quantized: QuantizedSection {
            w1: LeveledValues {
                level: quantized.w1.level(),
                values: ints_to_strings(quantized.w1.values()),
            },
            b1: LeveledValues {
                level: quantized.b1.level(),
                values: ints_to_strings(quantized.b1.values()),
            },
            act_slope: LeveledValue {
                level: 1,
                value: quantized.act_slope.to_string(),
            },
            act_intercept: LeveledValue {
                level: 3,
                value: quantized.act_intercept.to_string(),
            },
            w2: LeveledValues {
                level: quantized.w2.level(),
                values: ints_to_strings(quantized.w2.values()),
            },
            b2: LeveledValues {
                level: quantized.b2.level(),
                values: ints_to_strings(quantized.b2.values()),
            },
        },
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| ModelfileError::Format(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(
    path: impl AsRef<Path>,
) -> Result<(NetworkModel, QuantizedModel), ModelfileError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| ModelfileError::Format(e.to_string()))?;
    if file.version != MODEL_FILE_VERSION {
        return Err(ModelfileError::Version(file.version));
    }
    let activation = ActivationMode::parse(&file.activation_mode).ok_or_else(|| {
        ModelfileError::Format(format!("unknown activation_mode '{}'", file.activation_mode))
    })?;
    let Dims { n_i, n_d, n_o } = file.dims;
    let expect_len = |name: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(ModelfileError::Inconsistent(format!(
                "'{name}' has {got} entries, expected {want}"
            )))
        }
    };
    expect_len("weights.w1", file.weights.w1.len(), n_i * n_d)?;
    expect_len("weights.b1", file.weights.b1.len(), n_d)?;
    expect_len("weights.w2", file.weights.w2.len(), n_d * n_o)?;
    expect_len("weights.b2", file.weights.b2.len(), n_o)?;
    expect_len("quantized.w1", file.quantized.w1.values.len(), n_i * n_d)?;
    expect_len("quantized.b1", file.quantized.b1.values.len(), n_d)?;
    expect_len("quantized.w2", file.quantized.w2.values.len(), n_d * n_o)?;
    expect_len("quantized.b2", file.quantized.b2.values.len(), n_o)?;

    let model = NetworkModel {
        n_i,
        n_d,
        n_o,
        w1: strings_to_reals("weights.w1", &file.weights.w1)?,
        b1: strings_to_reals("weights.b1", &file.weights.b1)?,
        w2: strings_to_reals("weights.w2", &file.weights.w2)?,
        b2: strings_to_reals("weights.b2", &file.weights.b2)?,
        activation,
        frac_bits: file.frac_bits,
    };
    let quantized = QuantizedModel {
        n_i,
        n_d,
        n_o,
        frac_bits: file.frac_bits,
        w1: LeveledMatrix::new(
            n_i,
            n_d,
            file.quantized.w1.level,
            strings_to_ints("quantized.w1", &file.quantized.w1.values)?,
        ),
        b1: LeveledVec::new(
            file.quantized.b1.level,
            strings_to_ints("quantized.b1", &file.quantized.b1.values)?,
        ),
        act_slope: BigInt::from_str(&file.quantized.act_slope.value)
            .map_err(|_| ModelfileError::Format("bad act_slope".into()))?,
        act_intercept: BigInt::from_str(&file.quantized.act_intercept.value)
            .map_err(|_| ModelfileError::Format("bad act_intercept".into()))?,
        w2: LeveledMatrix::new(
            n_d,
            n_o,
            file.quantized.w2.level,
            strings_to_ints("quantized.w2", &file.quantized.w2.values)?,
        ),
        b2: LeveledVec::new(
            file.quantized.b2.level,
            strings_to_ints("quantized.b2", &file.quantized.b2.values)?,
        ),
    };
    quantized
        .validate()
        .map_err(|e| ModelfileError::Inconsistent(e.to_string()))?;
    Ok((model, quantized))
}

/// Training history as CSV: epoch, eta, loss, train_acc.
pub fn write_history_csv(
    path: impl AsRef<Path>,
    history: &[EpochRecord],
) -> Result<(), ModelfileError> {
    let mut out = String::from("epoch,eta,loss,train_acc\n");
    for rec in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.epoch, rec.eta, rec.loss, rec.accuracy
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{export_model, NetworkModel};

    #[test]
    fn model_file_roundtrips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let model =
            NetworkModel::random_init(5, 4, 3, ActivationMode::LinearApprox, 10, 77).unwrap();
        let quantized = export_model(&model, 10).unwrap();
        let path = dir.path().join(MODEL_FILE);
        save_model(&path, &model, &quantized).unwrap();
        let (m2, q2) = load_model(&path).unwrap();
        assert_eq!(m2, model);
        assert_eq!(q2, quantized);
    }

    #[test]
    fn truncated_and_mismatched_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MODEL_FILE);
        std::fs::write(&path, "{\"version\": 1}").unwrap();
        assert!(matches!(load_model(&path), Err(ModelfileError::Format(_))));

        let model =
            NetworkModel::random_init(3, 2, 2, ActivationMode::Sigmoid, 10, 1).unwrap();
        let quantized = export_model(&model, 10).unwrap();
        save_model(&path, &model, &quantized).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        parsed["dims"]["n_i"] = serde_json::Value::from(7);
        std::fs::write(&path, parsed.to_string()).unwrap();
        assert!(matches!(
            load_model(&path),
            Err(ModelfileError::Inconsistent(_))
        ));
    }

    #[test]
    fn history_csv_has_expected_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(HISTORY_FILE);
        let history = vec![
            EpochRecord {
                epoch: 0,
                eta: 0.2,
                loss: 1.5,
                accuracy: 0.3,
            },
            EpochRecord {
                epoch: 1,
                eta: 0.1,
                loss: 0.9,
                accuracy: 0.6,
            },
        ];
        write_history_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,eta,loss,train_acc");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,0.2,"));
    }
}
