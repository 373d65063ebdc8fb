//! Drives the `enn` binary through the full offline/online pipeline and
//! checks exit-code discipline, determinism and key separation.

use enn_core::data::{self, BlobSpec};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

struct Env {
    dir: tempfile::TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ds = data::synthetic_blobs(&BlobSpec {
            samples: 300,
            channels: 10,
            classes: 3,
            separation: 0.9,
            noise: 0.05,
            seed: 5,
        });
        data::write_csv(dir.path().join("data.csv"), &ds, "label").unwrap();
        Env { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }
}

fn enn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = enn(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails_with(args: &[&str], code: i32) -> String {
    let out = enn(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "command {:?}: stderr {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn keygen(env: &Env, dir: &str, seed: &str) {
    ok(&[
        "keygen",
        "--bit-length",
        "512",
        "--keys-dir",
        &env.arg(dir),
        "--deterministic-crypto",
        "--seed",
        seed,
    ]);
}

fn train(env: &Env, out: &str) {
    ok(&[
        "train",
        "--data",
        &env.arg("data.csv"),
        "--out",
        &env.arg(out),
        "--channels-k",
        "8",
        "--iters",
        "4000",
        "--batch",
        "30",
        "--seed",
        "3",
    ]);
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn pipeline_end_to_end_with_key_separation() {
    let env = Env::new();
    keygen(&env, "keys", "7");
    assert!(env.path("keys/public_key.json").exists());
    assert!(env.path("keys/private_key.json").exists());
    enn_core::keyfile::load_public(env.path("keys/public_key.json")).unwrap();
    enn_core::keyfile::load_private(env.path("keys/private_key.json")).unwrap();

    train(&env, "model");
    for artifact in [
        "model/model.json",
        "model/channels.json",
        "model/normalization.json",
        "model/history.csv",
    ] {
        assert!(env.path(artifact).exists(), "{artifact} missing");
    }

    // history CSV header shape
    let history = String::from_utf8(read(&env.path("model/history.csv"))).unwrap();
    assert!(history.starts_with("epoch,eta,loss,train_acc"));

    // fresh unlabeled-style data: reuse the first 21 lines (header + 20 rows)
    let data = String::from_utf8(read(&env.path("data.csv"))).unwrap();
    let head: Vec<&str> = data.lines().take(21).collect();
    std::fs::write(env.path("new.csv"), head.join("\n")).unwrap();

    ok(&[
        "encrypt",
        "--keys-dir",
        &env.arg("keys"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("new.csv"),
        "--out",
        &env.arg("enc.jsonl"),
        "--deterministic-crypto",
        "--seed",
        "9",
        "--workers",
        "2",
    ]);

    // predict must run with no private key anywhere near it
    std::fs::create_dir_all(env.path("pubonly")).unwrap();
    std::fs::copy(
        env.path("keys/public_key.json"),
        env.path("pubonly/public_key.json"),
    )
    .unwrap();
    ok(&[
        "predict",
        "--keys-dir",
        &env.arg("pubonly"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("enc.jsonl"),
        "--out",
        &env.arg("logits.jsonl"),
        "--workers",
        "2",
    ]);

    ok(&[
        "decrypt",
        "--keys-dir",
        &env.arg("keys"),
        "--data",
        &env.arg("logits.jsonl"),
        "--out",
        &env.arg("preds.csv"),
    ]);
    let preds = String::from_utf8(read(&env.path("preds.csv"))).unwrap();
    assert!(preds.starts_with("sample,predicted_class,logit_1"));
    assert_eq!(preds.lines().count(), 21);

    let stdout = ok(&[
        "evaluate",
        "--data",
        &env.arg("new.csv"),
        "--pred",
        &env.arg("preds.csv"),
        "--train-size",
        "240",
    ]);
    assert!(stdout.contains("confusion matrix"));
    assert!(stdout.contains("accuracy"));
    assert!(stdout.contains("train-denominated"));

    let stdout = ok(&[
        "bench",
        "--keys-dir",
        &env.arg("keys"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("data.csv"),
        "--samples",
        "3",
        "--deterministic-crypto",
        "--seed",
        "4",
    ]);
    assert!(stdout.contains("encode+encrypt"));
}

#[test]
fn reruns_are_byte_identical() {
    let env = Env::new();
    keygen(&env, "keys", "7");

    train(&env, "model_a");
    train(&env, "model_b");
    assert_eq!(
        read(&env.path("model_a/model.json")),
        read(&env.path("model_b/model.json"))
    );
    assert_eq!(
        read(&env.path("model_a/history.csv")),
        read(&env.path("model_b/history.csv"))
    );

    let data = String::from_utf8(read(&env.path("data.csv"))).unwrap();
    let head: Vec<&str> = data.lines().take(11).collect();
    std::fs::write(env.path("new.csv"), head.join("\n")).unwrap();

    for (out, workers) in [("enc_a.jsonl", "1"), ("enc_b.jsonl", "3")] {
        ok(&[
            "encrypt",
            "--keys-dir",
            &env.arg("keys"),
            "--model",
            &env.arg("model_a/model.json"),
            "--data",
            &env.arg("new.csv"),
            "--out",
            &env.arg(out),
            "--deterministic-crypto",
            "--seed",
            "11",
            "--workers",
            workers,
        ]);
    }
    // same seed, different worker counts: identical ciphertext files
    assert_eq!(read(&env.path("enc_a.jsonl")), read(&env.path("enc_b.jsonl")));

    for (out, workers) in [("logits_1.jsonl", "1"), ("logits_4.jsonl", "4")] {
        ok(&[
            "predict",
            "--keys-dir",
            &env.arg("keys"),
            "--model",
            &env.arg("model_a/model.json"),
            "--data",
            &env.arg("enc_a.jsonl"),
            "--out",
            &env.arg(out),
            "--workers",
            workers,
        ]);
    }
    assert_eq!(
        read(&env.path("logits_1.jsonl")),
        read(&env.path("logits_4.jsonl"))
    );
}

#[test]
fn wrong_key_cannot_decrypt_usefully() {
    let env = Env::new();
    keygen(&env, "keys", "7");
    keygen(&env, "wrong_keys", "8");
    train(&env, "model");

    let data = String::from_utf8(read(&env.path("data.csv"))).unwrap();
    let head: Vec<&str> = data.lines().take(11).collect();
    std::fs::write(env.path("new.csv"), head.join("\n")).unwrap();

    ok(&[
        "encrypt",
        "--keys-dir",
        &env.arg("keys"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("new.csv"),
        "--out",
        &env.arg("enc.jsonl"),
        "--deterministic-crypto",
        "--seed",
        "2",
    ]);
    ok(&[
        "predict",
        "--keys-dir",
        &env.arg("keys"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("enc.jsonl"),
        "--out",
        &env.arg("logits.jsonl"),
    ]);
    ok(&[
        "decrypt",
        "--keys-dir",
        &env.arg("keys"),
        "--data",
        &env.arg("logits.jsonl"),
        "--out",
        &env.arg("preds.csv"),
    ]);

    // with the unrelated key, decryption either errors out or produces
    // predictions that do not match the legitimate ones
    let out = enn(&[
        "decrypt",
        "--keys-dir",
        &env.arg("wrong_keys"),
        "--data",
        &env.arg("logits.jsonl"),
        "--out",
        &env.arg("wrong_preds.csv"),
    ]);
    if out.status.success() {
        assert_ne!(
            read(&env.path("preds.csv")),
            read(&env.path("wrong_preds.csv"))
        );
    }
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let env = Env::new();

    // usage error from clap: bit length below the minimum
    let out = enn(&[
        "keygen",
        "--bit-length",
        "32",
        "--keys-dir",
        &env.arg("keys"),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // data error: missing label column
    let stderr = fails_with(
        &[
            "train",
            "--data",
            &env.arg("data.csv"),
            "--out",
            &env.arg("model"),
            "--label-column",
            "nosuch",
            "--iters",
            "10",
            "--batch",
            "10",
        ],
        3,
    );
    assert!(stderr.contains("nosuch"), "stderr: {stderr}");

    // io error: missing key file
    keygen(&env, "keys", "7");
    train(&env, "model");
    fails_with(
        &[
            "predict",
            "--keys-dir",
            &env.arg("empty_dir"),
            "--model",
            &env.arg("model/model.json"),
            "--data",
            &env.arg("enc.jsonl"),
            "--out",
            &env.arg("logits.jsonl"),
        ],
        5,
    );

    // crypto error: tampered public key file
    std::fs::create_dir_all(env.path("badkeys")).unwrap();
    let text = std::fs::read_to_string(env.path("keys/public_key.json")).unwrap();
    let mut parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    parsed["g"] = serde_json::Value::String("0".into());
    std::fs::write(env.path("badkeys/public_key.json"), parsed.to_string()).unwrap();
    let data = String::from_utf8(read(&env.path("data.csv"))).unwrap();
    let head: Vec<&str> = data.lines().take(3).collect();
    std::fs::write(env.path("new.csv"), head.join("\n")).unwrap();
    fails_with(
        &[
            "encrypt",
            "--keys-dir",
            &env.arg("badkeys"),
            "--model",
            &env.arg("model/model.json"),
            "--data",
            &env.arg("new.csv"),
            "--out",
            &env.arg("enc.jsonl"),
        ],
        4,
    );
}

#[test]
fn malformed_encrypted_records_are_row_addressed() {
    let env = Env::new();
    keygen(&env, "keys", "7");
    train(&env, "model");
    let data = String::from_utf8(read(&env.path("data.csv"))).unwrap();
    let head: Vec<&str> = data.lines().take(4).collect();
    std::fs::write(env.path("new.csv"), head.join("\n")).unwrap();
    ok(&[
        "encrypt",
        "--keys-dir",
        &env.arg("keys"),
        "--model",
        &env.arg("model/model.json"),
        "--data",
        &env.arg("new.csv"),
        "--out",
        &env.arg("enc.jsonl"),
        "--deterministic-crypto",
        "--seed",
        "1",
    ]);
    let mut lines: Vec<String> = String::from_utf8(read(&env.path("enc.jsonl")))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    lines[1] = "{\"version\":1,\"scale_level\":1,\"width\":1,\"values\":[\"zz\"]}".into();
    std::fs::write(env.path("enc.jsonl"), lines.join("\n")).unwrap();

    let stderr = fails_with(
        &[
            "predict",
            "--keys-dir",
            &env.arg("keys"),
            "--model",
            &env.arg("model/model.json"),
            "--data",
            &env.arg("enc.jsonl"),
            "--out",
            &env.arg("logits.jsonl"),
        ],
        3,
    );
    assert!(stderr.contains("record 2"), "stderr: {stderr}");
}
