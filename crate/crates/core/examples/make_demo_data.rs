//! Writes a synthetic labeled feature CSV for trying out the CLI pipeline:
//! 12800 samples, 64 channels, 4 classes.
//!
//! Usage: cargo run -p enn-core --example make_demo_data [PATH]

use enn_core::data::{synthetic_blobs, write_csv, BlobSpec};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo_data.csv".to_string());
    let ds = synthetic_blobs(&BlobSpec {
        channels: 64,
        ..BlobSpec::default()
    });
    write_csv(&path, &ds, "label").expect("write csv");
    println!(
        "wrote {} samples x {} channels to {path}",
        ds.n_samples(),
        ds.n_channels()
    );
}
