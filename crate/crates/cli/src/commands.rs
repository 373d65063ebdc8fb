//! Subcommand implementations wiring the library modules to files and flags.

use crate::error::CliError;
use crate::Command;
use enn_core::data;
use enn_core::encfile;
use enn_core::encinfer::{self, QuantizedModel};
use enn_core::eval;
use enn_core::fixedpoint::FixedPointCodec;
use enn_core::keyfile::{self, PRIVATE_KEY_FILE, PUBLIC_KEY_FILE};
use enn_core::modelfile::{self, CHANNELS_FILE, HISTORY_FILE, MODEL_FILE, NORMALIZATION_FILE};
use enn_core::network::{self, ActivationMode, NetworkModel, TrainConfig};
use enn_core::paillier::{self, PrivateKey, PublicKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::path::Path;

/// Hidden-layer width of the reference configuration.
const DEFAULT_HIDDEN: usize = 20;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Keygen {
            bit_length,
            keys_dir,
            seed,
            deterministic_crypto,
        } => keygen(bit_length, &keys_dir, seed, deterministic_crypto),
        Command::Train {
            data,
            out,
            label_column,
            channels_k,
            train_fraction,
            iters,
            batch,
            eta0,
            seed,
            frac_bits,
            activation,
        } => train(
            &data,
            &out,
            &label_column,
            channels_k,
            train_fraction,
            iters,
            batch,
            eta0,
            seed,
            frac_bits,
            &activation,
        ),
        Command::Encrypt {
            keys_dir,
            model,
            data,
            out,
            label_column,
            workers,
            seed,
            deterministic_crypto,
        } => encrypt(
            &keys_dir,
            &model,
            &data,
            &out,
            &label_column,
            workers,
            seed,
            deterministic_crypto,
        ),
        Command::Predict {
            keys_dir,
            model,
            data,
            out,
            workers,
        } => predict(&keys_dir, &model, &data, &out, workers),
        Command::Decrypt {
            keys_dir,
            data,
            out,
            frac_bits,
        } => decrypt(&keys_dir, &data, &out, frac_bits),
        Command::Evaluate {
            data,
            pred,
            label_column,
            train_size,
            out,
        } => evaluate(&data, &pred, &label_column, train_size, out.as_deref()),
        Command::Bench {
            keys_dir,
            model,
            data,
            label_column,
            samples,
            seed,
            deterministic_crypto,
            out,
        } => bench(
            &keys_dir,
            &model,
            &data,
            &label_column,
            samples,
            seed,
            deterministic_crypto,
            out.as_deref(),
        ),
    }
}

/// Splitmix64 step; derives independent per-sample seeds from the master
/// seed so outputs do not depend on the worker count.
fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn load_keys_public(keys_dir: &Path) -> Result<PublicKey, CliError> {
    Ok(keyfile::load_public(keys_dir.join(PUBLIC_KEY_FILE))?)
}

fn load_keys_private(keys_dir: &Path) -> Result<PrivateKey, CliError> {
    Ok(keyfile::load_private(keys_dir.join(PRIVATE_KEY_FILE))?)
}

fn keygen(
    bit_length: u64,
    keys_dir: &Path,
    seed: u64,
    deterministic: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(keys_dir)?;
    let (pk, sk) = if deterministic {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        paillier::keygen(bit_length, &mut rng)?
    } else {
        paillier::keygen(bit_length, &mut rand::rngs::OsRng)?
    };
    keyfile::save_public(keys_dir.join(PUBLIC_KEY_FILE), &pk)?;
    keyfile::save_private(keys_dir.join(PRIVATE_KEY_FILE), &sk)?;
    println!(
        "wrote {}-bit key pair to {}",
        pk.bit_length(),
        keys_dir.display()
    );
    if deterministic {
        println!("warning: --deterministic-crypto keys are for testing only");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    data: &Path,
    out: &Path,
    label_column: &str,
    channels_k: Option<usize>,
    train_fraction: f64,
    iters: usize,
    batch: usize,
    eta0: f64,
    seed: u64,
    frac_bits: u32,
    activation: &str,
) -> Result<(), CliError> {
    let activation = ActivationMode::parse(activation)
        .ok_or_else(|| CliError::Data(format!("unknown activation '{activation}'")))?;
    std::fs::create_dir_all(out)?;

    let raw = data::load_csv(data, label_column)?;
    let k = channels_k.unwrap_or(raw.n_channels());
    let (selected, ranking) = data::select_channels(&raw, k)?;
    let normalized = data::normalize(&selected);
    let stats = normalized
        .normalization
        .clone()
        .expect("normalize always records stats");
    let (train_ds, test_ds) = data::split(&normalized, train_fraction, seed)?;

    let n_i = train_ds.n_channels();
    let n_o = raw.n_classes();
    let (lo, hi) = network::suggest_hidden_size(n_i, n_o)?;
    let n_d = DEFAULT_HIDDEN;
    println!(
        "training {n_i}-{n_d}-{n_o} network ({} train / {} test samples); \
         heuristic hidden interval [{lo}, {hi}]",
        train_ds.n_samples(),
        test_ds.n_samples()
    );

    let mut model =
        NetworkModel::random_init(n_i, n_d, n_o, activation, frac_bits, seed.wrapping_add(1))?;
    let cfg = TrainConfig {
        iters_num: iters,
        batch_size: batch,
        eta0,
        eta_floor: 0.01,
        seed: seed.wrapping_add(2),
    };
    let report = network::train(&mut model, &train_ds, &cfg)?;
    let last = report.history.last().expect("at least one epoch");

    let test_truth = &test_ds.labels;
    let mut test_pred = Vec::with_capacity(test_ds.n_samples());
    for row in &test_ds.features {
        test_pred.push(model.predict(row)? as u32);
    }
    let test_acc = eval::accuracy(test_truth, &test_pred)?;
    let misclassified = test_truth
        .iter()
        .zip(&test_pred)
        .filter(|(t, p)| t != p)
        .count() as u64;
    let rates = eval::error_rate(misclassified, train_ds.n_samples(), test_ds.n_samples())?;

    println!(
        "final epoch {}: eta {:.4}, loss {:.4}, train accuracy {:.2}%",
        last.epoch,
        last.eta,
        last.loss,
        100.0 * last.accuracy
    );
    println!(
        "test accuracy {:.2}% ({misclassified} misclassified); error rate {:.2}% \
         (test-denominated) / {:.2}% (train-denominated)",
        100.0 * test_acc,
        100.0 * rates.standard,
        100.0 * rates.literal
    );
    if report.excursions > 0 {
        println!(
            "note: {} hidden pre-activations left [-1, 1] during training",
            report.excursions
        );
    }

    let quantized = network::export_model(&model, frac_bits)?;
    modelfile::save_model(out.join(MODEL_FILE), &model, &quantized)?;
    data::save_normalization(out.join(NORMALIZATION_FILE), &stats)?;
    data::save_ranking(out.join(CHANNELS_FILE), &ranking)?;
    modelfile::write_history_csv(out.join(HISTORY_FILE), &report.history)?;
    println!("wrote model artifacts to {}", out.display());
    Ok(())
}

/// Loads the model plus the channel selection and normalization stats that
/// live alongside it, then projects and normalizes the raw CSV the same way
/// training did.
fn prepare_features(
    model_path: &Path,
    data: &Path,
    label_column: &str,
) -> Result<(NetworkModel, QuantizedModel, data::Dataset), CliError> {
    let (model, quantized) = modelfile::load_model(model_path)?;
    let model_dir = model_path.parent().unwrap_or_else(|| Path::new("."));
    let ranking = data::load_ranking(model_dir.join(CHANNELS_FILE))?;
    let stats = data::load_normalization(model_dir.join(NORMALIZATION_FILE))?;

    let raw = data::load_features_csv(data, label_column)?;
    let projected = data::project_by_names(&raw, &ranking.selected_names)?;
    let normalized = data::apply_normalization(&projected, &stats)?;
    if normalized.n_channels() != model.n_i {
        return Err(CliError::Data(format!(
            "selected {} channels but the model expects {}",
            normalized.n_channels(),
            model.n_i
        )));
    }
    Ok((model, quantized, normalized))
}

#[allow(clippy::too_many_arguments)]
fn encrypt(
    keys_dir: &Path,
    model_path: &Path,
    data: &Path,
    out: &Path,
    label_column: &str,
    workers: usize,
    seed: u64,
    deterministic: bool,
) -> Result<(), CliError> {
    let pk = load_keys_public(keys_dir)?;
    let (_, quantized, ds) = prepare_features(model_path, data, label_column)?;
    let codec = FixedPointCodec::new(quantized.frac_bits, pk.n().clone())?;
    quantized.audit(pk.n())?;

    let vectors = if deterministic {
        encinfer::encrypt_batch(&pk, &codec, &ds.features, workers, |i| {
            ChaCha20Rng::seed_from_u64(derive_seed(seed, i as u64))
        })?
    } else {
        encinfer::encrypt_batch(&pk, &codec, &ds.features, workers, |_| rand::rngs::OsRng)?
    };
    encfile::write_encrypted(out, &vectors)?;
    println!(
        "encrypted {} samples x {} features to {}",
        vectors.len(),
        ds.n_channels(),
        out.display()
    );
    if deterministic {
        println!("warning: --deterministic-crypto ciphertexts are for testing only");
    }
    Ok(())
}

fn predict(
    keys_dir: &Path,
    model_path: &Path,
    data: &Path,
    out: &Path,
    workers: usize,
) -> Result<(), CliError> {
    // only the public key is ever read on this path
    let pk = load_keys_public(keys_dir)?;
    let (_, quantized) = modelfile::load_model(model_path)?;
    let inputs = encfile::read_encrypted(data, &pk)?;
    let logits = encinfer::enc_forward_batch(&pk, &quantized, &inputs, workers)?;
    encfile::write_encrypted(out, &logits)?;
    println!(
        "classified {} encrypted samples; encrypted logits written to {}",
        logits.len(),
        out.display()
    );
    Ok(())
}

fn decrypt(keys_dir: &Path, data: &Path, out: &Path, frac_bits: u32) -> Result<(), CliError> {
    let sk = load_keys_private(keys_dir)?;
    let codec = FixedPointCodec::new(frac_bits, sk.public().n().clone())?;
    let vectors = encfile::read_encrypted(data, sk.public())?;

    let mut writer = csv::Writer::from_path(out)?;
    let width = vectors.first().map(|v| v.width()).unwrap_or(0);
    let mut header = vec!["sample".to_string(), "predicted_class".to_string()];
    header.extend((1..=width).map(|k| format!("logit_{k}")));
    writer.write_record(&header)?;
    for (i, v) in vectors.iter().enumerate() {
        let (logits, class) = encinfer::decrypt_logits(&sk, &codec, v)?;
        let mut record = vec![i.to_string(), class.to_string()];
        record.extend(logits.iter().map(|l| l.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| CliError::Io(e.to_string()))?;
    println!(
        "decrypted {} predictions to {}",
        vectors.len(),
        out.display()
    );
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<u32>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "predicted_class")
        .ok_or_else(|| CliError::Data("predictions file lacks a 'predicted_class' column".into()))?;
    let mut preds = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let cell = record
            .get(col)
            .ok_or_else(|| CliError::Data(format!("prediction row {} is truncated", i + 1)))?;
        let value: u32 = cell
            .parse()
            .map_err(|_| CliError::Data(format!("prediction row {}: bad class '{cell}'", i + 1)))?;
        preds.push(value);
    }
    Ok(preds)
}

fn evaluate(
    truth_csv: &Path,
    pred_csv: &Path,
    label_column: &str,
    train_size: Option<usize>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let truth_ds = data::load_csv(truth_csv, label_column)?;
    let preds = read_predictions(pred_csv)?;
    if preds.len() != truth_ds.n_samples() {
        return Err(CliError::Data(format!(
            "{} truth rows but {} predictions",
            truth_ds.n_samples(),
            preds.len()
        )));
    }
    let k = truth_ds
        .n_classes()
        .max(preds.iter().max().copied().unwrap_or(0) as usize);
    let cm = eval::confusion(&truth_ds.labels, &preds, k)?;
    let report = eval::metrics(&cm);
    let acc = eval::accuracy(&truth_ds.labels, &preds)?;
    let misclassified = cm.total() - (1..=k).map(|c| cm.count(c, c)).sum::<u64>();

    println!("confusion matrix (rows = truth, columns = prediction):");
    println!("{}", cm.render_table());
    println!("{}", cm.render_heatmap());
    println!("{}", report.render_table());
    println!("accuracy {:.2}% over {} samples", 100.0 * acc, cm.total());
    let rates = eval::error_rate(
        misclassified,
        train_size.unwrap_or(truth_ds.n_samples()),
        truth_ds.n_samples(),
    )?;
    println!("error rate (test-denominated): {:.2}%", 100.0 * rates.standard);
    if train_size.is_some() {
        println!("error rate (train-denominated): {:.2}%", 100.0 * rates.literal);
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("confusion.csv"), cm.to_csv())?;
        std::fs::write(dir.join("metrics.csv"), report.to_csv())?;
        println!("wrote confusion.csv and metrics.csv to {}", dir.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    keys_dir: &Path,
    model_path: &Path,
    data: &Path,
    label_column: &str,
    samples: usize,
    seed: u64,
    deterministic: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let pk = load_keys_public(keys_dir)?;
    let sk = load_keys_private(keys_dir)?;
    let (_, quantized, ds) = prepare_features(model_path, data, label_column)?;
    let codec = FixedPointCodec::new(quantized.frac_bits, pk.n().clone())?;
    let slice: Vec<Vec<f64>> = ds.features.into_iter().take(samples).collect();

    let report = if deterministic {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        eval::bench_pipeline(&pk, &sk, &codec, &quantized, &slice, &mut rng)?
    } else {
        eval::bench_pipeline(&pk, &sk, &codec, &quantized, &slice, &mut rand::rngs::OsRng)?
    };
    println!(
        "timing over {} samples with a {}-bit key:",
        slice.len(),
        pk.bit_length()
    );
    println!("{}", report.render_table());
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("timing.csv"), report.to_csv())?;
        println!("wrote timing.csv to {}", dir.display());
    }
    Ok(())
}
