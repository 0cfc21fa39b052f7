use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffedit::cli::{read_latents, ExperimentConfig};
use diffedit::directions::{read_dataset, write_dataset};
use diffedit::numerics::read_tensor;
use diffedit::synthworld::PairTruth;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diffedit"))
}

/// Small, fast experiment; `patch` is merged over it.
fn write_config(dir: &Path, patch: Value) -> PathBuf {
    let mut cfg = json!({
        "seed": 5,
        "dataset": {"pairs": 200, "source_count": 3},
        "train": {
            "total_steps": 60,
            "log_interval": 25,
            "depth": 2,
            "width": 32,
            "time_pe_dim": 8,
            "time_hidden": 16,
            "schedule": {"steps": 50, "beta_start": 0.002, "beta_end": 0.4}
        },
        "grad_check": {"denoiser": {"input_dim": 8, "depth": 2, "width": 8, "time_pe_dim": 4, "time_hidden": 6}}
    });
    merge(&mut cfg, patch);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn diffedit(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(verb)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn ok(verb: &str, config: &Path, out: &Path) {
    let o = diffedit(verb, config, out, &[]);
    assert!(
        o.status.success(),
        "{verb} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn pipeline(config: &Path, out: &Path, verbs: &[&str]) {
    for v in verbs {
        ok(v, config, out);
    }
}

#[test]
fn gen_world_is_byte_identical_and_creates_the_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let (a, b) = (tmp.path().join("a/nested"), tmp.path().join("b"));
    ok("gen-world", &cfg, &a);
    ok("gen-world", &cfg, &b);
    for f in ["world.meta.json", "world.basis.ldir", "world.centers.ldir", "world.observe.ldir"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_rank_sum_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        json!({"world": {"dim": 4, "attributes": [
            {"name": "a", "rank": 3, "modes": 1, "magnitude": 1.0, "mode_noise": 0.0, "outlier_rate": 0.0, "observable_dim": 2},
            {"name": "b", "rank": 2, "modes": 1, "magnitude": 1.0, "mode_noise": 0.0, "outlier_rate": 0.0, "observable_dim": 2}
        ]}}),
    );
    let o = diffedit("gen-world", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sum of attribute ranks") && err.contains("exceeds latent dimension"), "{err}");
}

#[test]
fn missing_world_lists_every_absent_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let o = diffedit("gen-pairs", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for f in ["world.meta.json", "world.basis.ldir", "world.centers.ldir", "world.observe.ldir"] {
        assert!(err.contains(f), "{err}");
    }
}

#[test]
fn malformed_config_and_bad_usage_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"unknown_key": 1}));
    assert_eq!(diffedit("gen-world", &cfg, tmp.path(), &[]).status.code(), Some(2));
    let o = bin().arg("no-such-verb").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["gen-world", "--seed", "minus-one"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_pairs_writes_unit_directions_with_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"dataset": {"pairs": 1000}}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs"]);
    let ds = read_dataset(out.join("dataset.ldir")).unwrap();
    assert_eq!(ds.len(), 1000);
    ds.check_normalized(1e-9).unwrap();
    let labels = ds.labels.as_ref().unwrap();
    assert_eq!(labels.len(), 1000);
    assert!(labels.iter().all(|l| matches!(l, PairTruth::Mode(_))));
    assert_eq!(read_tensor(out.join("raw.ldir")).unwrap().dims, vec![1000, 16]);
    assert_eq!(read_latents(&out.join("sources.ldir")).unwrap().len(), 3);
}

#[test]
fn gen_pairs_outlier_fraction_is_binomial() {
    let tmp = tempfile::tempdir().unwrap();
    let mut base: Value = serde_json::to_value(ExperimentConfig::default().world).unwrap();
    base["attributes"][0]["outlier_rate"] = json!(0.1);
    let cfg = write_config(tmp.path(), json!({"world": base, "dataset": {"pairs": 10000}}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs"]);
    let ds = read_dataset(out.join("dataset.ldir")).unwrap();
    let n = ds.len() as f64;
    let outliers = ds.labels.unwrap().iter().filter(|l| **l == PairTruth::Outlier).count() as f64;
    let sigma = (n * 0.1 * 0.9).sqrt();
    assert!((outliers - 0.1 * n).abs() <= 3.0 * sigma, "{outliers} outliers of {n}");
}

#[test]
fn train_is_reproducible_and_logs_the_expected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs", "train"]);
    let first = fs::read(out.join("checkpoint.lckp")).unwrap();
    ok("train", &cfg, &out);
    assert_eq!(first, fs::read(out.join("checkpoint.lckp")).unwrap());

    let csv = fs::read_to_string(out.join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,loss"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3); // ⌈60 / 25⌉
    assert!(rows[2].starts_with("50,"));
}

#[test]
fn train_refuses_an_unnormalized_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs"]);
    let mut ds = read_dataset(out.join("dataset.ldir")).unwrap();
    ds.directions[7] = ds.directions[7].scaled(3.0);
    write_dataset(out.join("dataset.ldir"), &ds).unwrap();
    let o = diffedit("train", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("not normalized") && err.contains("direction 7"), "{err}");
}

#[test]
fn sample_edit_eval_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"sample": {"gamma": 0.0, "lambda": 0.0}}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs", "train", "sample", "edit", "eval"]);

    // Five edits per attribute by default, one row per sample, dimension D.
    let samples = read_tensor(out.join("samples.ldir")).unwrap();
    assert_eq!(samples.dims, vec![5, 16]);
    let again = tmp.path().join("again");
    fs::create_dir_all(&again).unwrap();
    fs::copy(out.join("checkpoint.lckp"), again.join("checkpoint.lckp")).unwrap();
    ok("sample", &cfg, &again);
    assert_eq!(fs::read(out.join("samples.ldir")).unwrap(), fs::read(again.join("samples.ldir")).unwrap());
    let o = diffedit("sample", &cfg, &again, &["--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(fs::read(out.join("samples.ldir")).unwrap(), fs::read(again.join("samples.ldir")).unwrap());

    // γ = λ = 0 reproduces each source latent bit-exactly, once per sample.
    let sources = read_latents(&out.join("sources.ldir")).unwrap();
    let edited = read_latents(&out.join("edited.ldir")).unwrap();
    assert_eq!(edited.len(), sources.len() * 5);
    for (i, e) in edited.iter().enumerate() {
        let s = &sources[i / 5];
        assert!(e.iter().zip(s.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let report: Value = serde_json::from_slice(&fs::read(out.join("edit_report.json")).unwrap()).unwrap();
    assert_eq!(report["gamma"], json!(0.0));
    assert_eq!(report["lambda"], json!(0.0));

    let metrics: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(metrics["provenance"]["master_seed"], json!(5));
    assert_eq!(metrics["provenance"]["generated_count"], json!(5));
    assert_eq!(metrics["provenance"]["dataset_count"], json!(200));
    for (name, count) in [("dataset", 200u64), ("generated", 5)] {
        let csv = fs::read_to_string(out.join(format!("hist_{name}.csv"))).unwrap();
        let total: u64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
        assert_eq!(total, count, "{name}");
    }
}

#[test]
fn single_and_one_stage_sequential_edits_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"sample": {"gamma": 1.5, "lambda": 0.5}}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs", "train", "sample", "edit"]);
    let single = read_latents(&out.join("edited.ldir")).unwrap();

    let seq_out = tmp.path().join("seq");
    fs::create_dir_all(&seq_out).unwrap();
    fs::copy(out.join("sources.ldir"), seq_out.join("sources.ldir")).unwrap();
    let seq_cfg = write_config(
        tmp.path(),
        json!({"edit": {"sequence": [{
            "samples": out.join("samples.ldir"),
            "checkpoint": out.join("checkpoint.lckp"),
            "index": 2, "gamma": 1.5, "lambda": 0.5
        }]}}),
    );
    ok("edit", &seq_cfg, &seq_out);
    let seq = read_latents(&seq_out.join("edited.ldir")).unwrap();
    assert_eq!(seq.len(), 3);
    for (j, row) in seq.iter().enumerate() {
        assert_eq!(row, &single[j * 5 + 2]);
    }
    let report: Value = serde_json::from_slice(&fs::read(seq_out.join("edit_report.json")).unwrap()).unwrap();
    assert_eq!(report["mode"], json!("sequential"));
    assert_eq!(report["stages"][0]["gamma"], json!(1.5));
}

#[test]
fn eval_of_dataset_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({"eval": {"generated": "dataset"}}));
    let out = tmp.path().join("out");
    pipeline(&cfg, &out, &["gen-world", "gen-pairs", "eval"]);
    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["metrics"]["precision"], json!(1.0));
    assert_eq!(report["metrics"]["recall"], json!(1.0));
    assert!(report["notes"][0].as_str().unwrap().contains("FID"));
}

#[test]
fn eval_lists_missing_artifacts_together() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    ok("gen-world", &cfg, &out);
    let o = diffedit("eval", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for f in ["dataset.ldir", "dataset.meta.json", "raw.ldir", "sources.ldir", "samples.ldir"] {
        assert!(err.contains(f), "{f} missing from: {err}");
    }
}

#[test]
fn grad_check_exit_codes_follow_the_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), json!({}));
    let out = tmp.path().join("out");
    let o = diffedit("grad-check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let strict = write_config(tmp.path(), json!({"grad_check": {"tolerance": 1e-12}}));
    let o = diffedit("grad-check", &strict, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&fs::read(out.join("grad_check.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], json!(false));
    let worst = report["worst_parameter"].as_str().unwrap();
    assert!(worst.contains('.') && worst.contains('['), "{worst}");
}

#[test]
fn default_config_grad_check_passes() {
    // The shipped defaults are the depth-3 / width-32 / D = 8 probe.
    let tmp = tempfile::tempdir().unwrap();
    let o = bin().arg("grad-check").arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
}
