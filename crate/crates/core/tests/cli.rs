use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use htr_core::encoder::EncoderConfig;
use htr_core::model::ModelConfig;
use htr_core::trainer::RunConfig;
use serde_json::Value;
use tempfile::TempDir;

fn htr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_htr"))
        .args(args)
        .output()
        .expect("htr runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn records(text: &str) -> Vec<Value> {
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(max_epochs: usize, lr: f64) -> RunConfig {
    let mut c = RunConfig {
        model: ModelConfig {
            encoder: EncoderConfig {
                mdlstm_units: vec![2, 6, 12],
                conv_features: vec![6, 12],
                conv_kernel: [2, 2],
                feature_dim: 12,
                dropout: 0.0,
                init_range: 0.3,
            },
            attention_units: 4,
            state_projection: 4,
            state_units: 12,
            decoder_hidden: 12,
            init_range: 0.3,
        },
        ..RunConfig::default()
    };
    c.train.max_epochs = max_epochs;
    c.train.learning_rate = lr;
    c.train.batch_size = 2;
    c
}

fn write_config(dir: &Path, name: &str, c: &RunConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, c.to_toml()).unwrap();
    p
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let root = dir.join(name);
    let mut args = vec!["gen-data", "--out", s(&root)];
    args.extend_from_slice(extra);
    ok(htr(&args));
    root
}

fn train(config: &Path, data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--config",
        s(config),
        "--data",
        s(data),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    htr(&args)
}

#[test]
fn gen_data_echoes_config_and_writes_the_manifest() {
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("c");
    let o = ok(htr(&[
        "gen-data",
        "--out",
        s(&root),
        "--n-samples",
        "5",
        "--seed",
        "3",
    ]));
    let echo = &records(&stderr(&o))[0];
    assert_eq!(echo["command"], "gen-data");
    assert_eq!(echo["config"]["spec"]["n_samples"], 5);
    assert_eq!(
        echo["config"]["spec"]["chars_per_line"],
        serde_json::json!([3, 10])
    );
    assert_eq!(records(&stdout(&o))[0]["samples"], 5);
    assert_eq!(
        fs::read_to_string(root.join("manifest.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn unknown_flags_and_bad_values_are_config_errors() {
    assert_eq!(
        htr(&["gen-data", "--out", "x", "--bogus"]).status.code(),
        Some(2)
    );
    let dir = TempDir::new().unwrap();
    let root = dir.path().join("c");
    let o = htr(&[
        "gen-data",
        "--out",
        s(&root),
        "--min-chars",
        "5",
        "--max-chars",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[train]\nlearning_rate = \"fast\"\n").unwrap();
    let o = htr(&[
        "train",
        "--config",
        s(&bad),
        "--data",
        s(&root),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_manifest_is_a_data_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", &tiny_config(1, 0.01));
    let data = dir.path().join("nowhere");
    let o = train(&cfg, &data, &dir.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        stderr(&o).contains(&data.join("manifest.jsonl").display().to_string()),
        "{}",
        stderr(&o)
    );
}

#[test]
fn training_is_reproducible_and_resumable() {
    let dir = TempDir::new().unwrap();
    let data = gen(
        dir.path(),
        "c",
        &["--n-samples", "20", "--max-chars", "4", "--seed", "5"],
    );
    let cfg = write_config(dir.path(), "run.toml", &tiny_config(2, 0.01));
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c-run"),
    );
    ok(train(&cfg, &data, &a, &["--seed", "7"]));
    let o = ok(train(&cfg, &data, &b, &["--seed", "7"]));
    let echo = &records(&stderr(&o))[0];
    assert_eq!(echo["config"]["run"]["train"]["seed"], 7);
    let log_a = fs::read(a.join("metrics.jsonl")).unwrap();
    assert_eq!(log_a, fs::read(b.join("metrics.jsonl")).unwrap());
    assert_eq!(records(&String::from_utf8(log_a.clone()).unwrap()).len(), 2);
    for e in ["epoch-001.ckpt", "epoch-002.ckpt"] {
        assert_eq!(
            fs::read(a.join(e)).unwrap(),
            fs::read(b.join(e)).unwrap(),
            "{e}"
        );
    }

    ok(train(
        &cfg,
        &data,
        &c,
        &["--seed", "7", "--max-epochs", "1"],
    ));
    let first = c.join("epoch-001.ckpt");
    ok(train(
        &cfg,
        &data,
        &c,
        &["--seed", "7", "--resume", s(&first)],
    ));
    let full = records(&String::from_utf8(log_a).unwrap());
    let resumed = records(&fs::read_to_string(c.join("metrics.jsonl")).unwrap());
    assert_eq!(resumed.len(), 2);
    for (x, y) in full.iter().zip(&resumed) {
        assert_eq!(x["epoch"], y["epoch"]);
        let d = (x["train_loss"].as_f64().unwrap() - y["train_loss"].as_f64().unwrap()).abs();
        assert!(d < 1e-6, "{x} vs {y}");
        let dv = (x["val_cer"].as_f64().unwrap() - y["val_cer"].as_f64().unwrap()).abs();
        assert!(dv < 1e-6, "{x} vs {y}");
    }
    assert_eq!(
        fs::read(a.join("epoch-002.ckpt")).unwrap(),
        fs::read(c.join("epoch-002.ckpt")).unwrap()
    );

    let mut other = tiny_config(2, 0.01);
    other.model.decoder_hidden = 5;
    let other = write_config(dir.path(), "other.toml", &other);
    let o = train(
        &other,
        &data,
        &dir.path().join("d"),
        &["--resume", s(&first)],
    );
    assert_eq!(o.status.code(), Some(2));
}

fn memorized(dir: &Path) -> (PathBuf, PathBuf) {
    let data = gen(
        dir,
        "one",
        &[
            "--n-samples",
            "1",
            "--min-chars",
            "3",
            "--max-chars",
            "3",
            "--seed",
            "2",
        ],
    );
    let cfg = write_config(dir, "mem.toml", &tiny_config(150, 0.01));
    ok(train(&cfg, &data, &dir.join("mem"), &[]));
    (data, dir.join("mem").join("epoch-150.ckpt"))
}

#[test]
fn eval_transcribe_and_dump_on_a_memorized_sample() {
    let dir = TempDir::new().unwrap();
    let (data, ckpt) = memorized(dir.path());
    let o = ok(htr(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&data),
        "--split",
        "train",
    ]));
    let recs = records(&stdout(&o));
    assert_eq!(recs.len(), 2);
    let keys: Vec<&String> = recs[0].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["id", "reference", "hypothesis", "cer"]);
    assert_eq!(recs[1]["mean_cer"], 0.0, "{}", stdout(&o));
    assert_eq!(recs[1]["head"], "attention");
    let again = ok(htr(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&data),
        "--split",
        "train",
    ]));
    assert_eq!(stdout(&again), stdout(&o));

    let reference = recs[0]["reference"].as_str().unwrap().to_owned();
    let image = data.join("images").join("000000.pgm");
    let o = ok(htr(&[
        "transcribe",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&image),
    ]));
    assert_eq!(records(&stdout(&o))[0]["text"], reference.as_str());

    let out = dir.path().join("dump");
    let o = ok(htr(&[
        "attention-dump",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&image),
        "--out",
        s(&out),
    ]));
    let summary = &records(&stdout(&o))[0];
    assert_eq!(summary["truncated"], false);
    let trace = records(&fs::read_to_string(out.join("trace.jsonl")).unwrap());
    assert_eq!(trace.len(), reference.chars().count() + 1);
    assert_eq!(trace.last().unwrap()["emitted_char"], "<eos>");
    for (t, rec) in trace.iter().enumerate() {
        assert_eq!(rec["t"], t);
        let total: f64 = rec["alpha"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()))
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "step {t}: {total}");
        let top5 = rec["top5"].as_array().unwrap();
        assert_eq!(top5.len(), 5);
        assert_eq!(top5[0][0], rec["emitted_char"]);
        let heat = htr_core::datagen::read_pgm(&out.join(format!("heatmap-{t:03}.pgm"))).unwrap();
        let img = htr_core::datagen::read_pgm(&image).unwrap();
        assert_eq!(heat.shape(), img.shape());
    }
    assert!(out.join("overlay.pgm").exists());
}

#[test]
fn eval_guards_heads_and_vocabularies() {
    let dir = TempDir::new().unwrap();
    let digits = gen(
        dir.path(),
        "two",
        &[
            "--n-samples",
            "10",
            "--min-lines",
            "2",
            "--max-lines",
            "2",
            "--max-chars",
            "3",
        ],
    );
    let cfg = write_config(dir.path(), "run.toml", &tiny_config(1, 0.01));
    ok(train(&cfg, &digits, &dir.path().join("r"), &[]));
    let ckpt = dir.path().join("r").join("epoch-001.ckpt");
    let o = ok(htr(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&digits),
        "--head",
        "ctc",
        "--max-steps",
        "8",
    ]));
    assert!(
        stderr(&o).contains("warning: the CTC head assumes single-line input"),
        "{}",
        stderr(&o)
    );
    assert_eq!(records(&stdout(&o)).last().unwrap()["head"], "ctc");

    let letters = gen(dir.path(), "abc", &["--n-samples", "10", "--vocab", "abc"]);
    let o = htr(&["eval", "--ckpt", s(&ckpt), "--data", s(&letters)]);
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    let o = htr(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&digits),
        "--head",
        "beam",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn attention_dump_rejects_unreadable_images() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "c", &["--n-samples", "4", "--max-chars", "3"]);
    let cfg = write_config(dir.path(), "run.toml", &tiny_config(1, 0.01));
    ok(train(&cfg, &data, &dir.path().join("r"), &[]));
    let ckpt = dir.path().join("r").join("epoch-001.ckpt");
    let junk = dir.path().join("junk.pgm");
    fs::write(&junk, b"P2 not binary").unwrap();
    let out = dir.path().join("d");
    let o = htr(&[
        "attention-dump",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&junk),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = htr(&[
        "attention-dump",
        "--ckpt",
        s(&ckpt),
        "--image",
        s(&dir.path().join("none.pgm")),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gradcheck_reports_and_detects_planted_bugs() {
    let o = ok(htr(&["gradcheck", "--scope", "ctc"]));
    let r = &records(&stdout(&o))[0];
    assert!(r["max_rel_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(r["pass"], true);
    assert_eq!(r["seed"], 29);
    let again = ok(htr(&["gradcheck", "--scope", "ctc"]));
    assert_eq!(stdout(&again), stdout(&o));

    let o = htr(&["gradcheck", "--scope", "cell", "--perturb-grads"]);
    assert_eq!(o.status.code(), Some(1));
    let r = &records(&stdout(&o))[0];
    let worst = r["worst_param"].as_str().unwrap();
    assert!(worst.starts_with("cell."));
    assert!(stderr(&o).contains(worst));

    assert_eq!(
        htr(&["gradcheck", "--scope", "everything"]).status.code(),
        Some(2)
    );
}
