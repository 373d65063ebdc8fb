//! Single binary exposing the offline (keygen, train) and online (encrypt,
//! predict, decrypt) halves of the pipeline as subcommands, plus evaluation
//! and timing reports.

mod commands;
mod error;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "enn",
    version,
    about = "Train a feed-forward classifier on plaintext features and classify \
             Paillier-encrypted samples without decrypting them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a Paillier key pair into --keys-dir
    Keygen {
        /// Modulus size in bits (production default 2048; tests use 512)
        #[arg(long, default_value_t = enn_core::paillier::DEFAULT_BIT_LENGTH,
              value_parser = clap::value_parser!(u64).range(64..=16384))]
        bit_length: u64,
        #[arg(long)]
        keys_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Derive prime-generation randomness from --seed. INSECURE: for
        /// tests and reproducible demos only.
        #[arg(long)]
        deterministic_crypto: bool,
    },
    /// Select channels, normalize, split, train and export the model
    Train {
        /// Labeled feature CSV
        #[arg(long)]
        data: PathBuf,
        /// Output directory for model.json, channels.json,
        /// normalization.json and history.csv
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Keep the k channels most correlated with the label
        /// (default: keep all)
        #[arg(long)]
        channels_k: Option<usize>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long, default_value_t = 20_000)]
        iters: usize,
        #[arg(long, default_value_t = 100)]
        batch: usize,
        #[arg(long, default_value_t = 0.2)]
        eta0: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(5..=64))]
        frac_bits: u32,
        /// Hidden activation: the exact sigmoid or the linear approximation
        /// used under encryption
        #[arg(long, default_value = "linear_approx", value_parser = ["sigmoid", "linear_approx"])]
        activation: String,
    },
    /// Encrypt feature rows under the public key into a JSONL record file
    Encrypt {
        #[arg(long)]
        keys_dir: PathBuf,
        /// model.json from `train`; channels.json and normalization.json are
        /// read from the same directory
        #[arg(long)]
        model: PathBuf,
        /// Feature CSV (a label column is ignored if present)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Derive encryption randomness from --seed. INSECURE: for tests and
        /// reproducible demos only.
        #[arg(long)]
        deterministic_crypto: bool,
    },
    /// Run the encrypted forward pass; needs only the public key
    Predict {
        #[arg(long)]
        keys_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Encrypted samples (JSONL from `encrypt`)
        #[arg(long)]
        data: PathBuf,
        /// Output file for encrypted logits (JSONL)
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Decrypt encrypted logits into a class-prediction CSV
    Decrypt {
        #[arg(long)]
        keys_dir: PathBuf,
        /// Encrypted logits (JSONL from `predict`)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Must match the frac_bits the model was exported with
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(5..=64))]
        frac_bits: u32,
    },
    /// Confusion matrix, precision/recall/F1 and error rates
    Evaluate {
        /// Labeled truth CSV (same row order as the encrypted input)
        #[arg(long)]
        data: PathBuf,
        /// Predictions CSV from `decrypt`
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Training-set size; enables the train-denominated error rate
        #[arg(long)]
        train_size: Option<usize>,
        /// Optional directory for confusion.csv and metrics.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the encode+encrypt / inference / decrypt+decode stages
    Bench {
        #[arg(long)]
        keys_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Feature CSV to draw samples from
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Number of samples to time
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Derive encryption randomness from --seed. INSECURE.
        #[arg(long)]
        deterministic_crypto: bool,
        /// Optional directory for timing.csv
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
