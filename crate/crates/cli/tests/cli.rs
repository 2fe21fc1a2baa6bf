use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use exchangeable::data::RatingsTable;
use exchangeable::synthetic::{full_table, synthetic_task, SyntheticSpec};

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn records(&self) -> Vec<Value> {
        self.stdout.lines().map(|l| serde_json::from_str(l).expect("JSON line")).collect()
    }
}

fn exch(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_exch")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn tab_lines(t: &RatingsTable, map: impl Fn(f64) -> f64) -> String {
    t.ratings()
        .iter()
        .map(|r| format!("{}\t{}\t{}\t0\n", t.users().id(r.user), t.items().id(r.item), map(r.value)))
        .collect()
}

fn spec(seed: u64, prefix: &str) -> SyntheticSpec {
    SyntheticSpec {
        rows: 20,
        cols: 25,
        id_prefix: prefix.into(),
        ..SyntheticSpec::standard(seed)
    }
}

/// A MovieLens-style directory with u1.base / u1.test.
fn dataset(dir: &Path, seed: u64, prefix: &str) -> PathBuf {
    let s = synthetic_task(&spec(seed, prefix)).unwrap();
    let d = dir.join(format!("data-{prefix}{seed}"));
    std::fs::create_dir_all(&d).unwrap();
    std::fs::write(d.join("u1.base"), tab_lines(&s.train, |v| v)).unwrap();
    std::fs::write(d.join("u1.test"), tab_lines(&s.test, |v| v)).unwrap();
    d
}

const SMALL_FEA: &str = "[model]\narchitecture = \"fea\"\nencoder = [8, 8, 4]\ndecoder = [8]\ndropout_after = []\n[train]\noptimizer = { kind = \"adam\", lr = 0.01, beta1 = 0.9, beta2 = 0.999, eps = 1e-8 }\n";
const SMALL_SS: &str = "[model]\narchitecture = \"self-supervised\"\nhidden = [8, 8]\ndropout_after = []\n";

fn train(dir: &Path, data: &Path, config: &str, name: &str, extra: &[&str]) -> (Run, PathBuf) {
    let cfg = dir.join(format!("{name}.toml"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(name);
    let mut args = vec![
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (exch(&args), out)
}

#[test]
fn train_then_evaluate_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 1, "");
    let (run, out) = train(dir.path(), &data, SMALL_FEA, "fea", &["--epochs", "8", "--seed", "3"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let records = run.records();
    assert_eq!(records.len(), 9);
    let last = records.last().unwrap();
    assert_eq!(last["event"], "final");
    let report = std::fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 9);
    // validation monitors the test split, so the best validation RMSE is the
    // test RMSE of the saved checkpoint
    assert_eq!(last["validation_rmse"], last["test_rmse"]);

    let ck = out.join("checkpoint.exch");
    let eval = exch(&["evaluate", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(eval.code, 0, "{}", eval.stderr);
    assert_eq!(eval.records()[0]["rmse"], last["test_rmse"]);
}

#[test]
fn training_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 2, "");
    let (a, out_a) = train(dir.path(), &data, SMALL_SS, "a", &["--epochs", "3", "--seed", "5"]);
    let (b, out_b) = train(dir.path(), &data, SMALL_SS, "b", &["--epochs", "3", "--seed", "5"]);
    assert_eq!(a.code, 0, "{}", a.stderr);
    let strip = |r: &Run| -> Vec<Value> {
        r.records()
            .into_iter()
            .map(|mut v| {
                v.as_object_mut().unwrap().remove("wall_clock_secs");
                v.as_object_mut().unwrap().remove("checkpoint");
                v
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(
        std::fs::read(out_a.join("checkpoint.exch")).unwrap(),
        std::fs::read(out_b.join("checkpoint.exch")).unwrap()
    );
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 3, "");
    let (run, out) = train(dir.path(), &data, SMALL_SS, "z", &["--epochs", "0"]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let records = run.records();
    assert_eq!(records.len(), 1);
    assert!(records[0]["test_rmse"].as_f64().unwrap().is_finite());
    assert!(out.join("checkpoint.exch").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let r = exch(&["train", "--data", missing.to_str().unwrap(), "--epochs", "1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("does not exist"), "{}", r.stderr);
    assert_eq!(exch(&["train", "--bogus"]).code, 2);
    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[model]\nwidth = 3\n").unwrap();
    let data = dataset(dir.path(), 4, "");
    let r = exch(&["train", "--config", bad_cfg.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn sweep_emits_one_record_per_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 5, "");
    let (_, out) = train(dir.path(), &data, SMALL_FEA, "m", &["--epochs", "3"]);
    let ck = out.join("checkpoint.exch");
    let other = dataset(dir.path(), 6, "new-");
    let metrics = dir.path().join("sweep.jsonl");
    let r = exch(&[
        "extrapolate",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--data",
        other.to_str().unwrap(),
        "--observed-fraction",
        "0.05,0.25,0.45,0.65,0.85,0.95",
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let records = r.records();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|v| v["mode"] == "extrapolate" && v["rmse"].as_f64().unwrap().is_finite()));
    assert_eq!(std::fs::read_to_string(metrics).unwrap().lines().count(), 6);
}

#[test]
fn foreign_scales_need_rebinning() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 7, "");
    let (_, out) = train(dir.path(), &data, SMALL_FEA, "m", &["--epochs", "2"]);
    let ck = out.join("checkpoint.exch");

    // the same kind of matrix on a 1..10 scale
    let t = full_table(&spec(8, "ten-")).unwrap();
    let ten = dir.path().join("ten.tsv");
    std::fs::write(&ten, tab_lines(&t, |v| 2.0 * v)).unwrap();
    let base = ["evaluate", "--checkpoint", ck.to_str().unwrap(), "--data", ten.to_str().unwrap(), "--format", "movielens"];

    let r = exch(&[&base[..], &["--scale", "1-10", "--observed-fraction", "0.5"]].concat());
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("1-10") && r.stderr.contains("1-5"), "{}", r.stderr);

    let r = exch(&[&base[..], &["--observed-fraction", "0.5"]].concat());
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("1-5"), "{}", r.stderr);

    let r = exch(&[&base[..], &["--rebin-from", "1-10", "--rebin-to", "1-5", "--observed-fraction", "0.5"]].concat());
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn factorize_writes_id_keyed_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 9, "");
    let (_, fea) = train(dir.path(), &data, SMALL_FEA, "fea", &["--epochs", "2"]);
    let other = dataset(dir.path(), 10, "other-");
    let out = dir.path().join("factors");
    let ck = fea.join("checkpoint.exch");
    let r = exch(&["factorize", "--checkpoint", ck.to_str().unwrap(), "--data", other.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let rows = std::fs::read_to_string(out.join("row_factors.tsv")).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next().unwrap(), "id\tf0\tf1\tf2\tf3");
    let body: Vec<&str> = lines.collect();
    assert_eq!(body.len(), 20);
    assert!(body.iter().all(|l| l.starts_with("other-u") && l.split('\t').count() == 5));
    let cols = std::fs::read_to_string(out.join("col_factors.tsv")).unwrap();
    assert_eq!(cols.lines().count(), 26);

    let (_, ss) = train(dir.path(), &data, SMALL_SS, "ss", &["--epochs", "1"]);
    let ck = ss.join("checkpoint.exch");
    let r = exch(&["factorize", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("self-supervised"), "{}", r.stderr);
}

#[test]
fn verify_reports_and_caps() {
    let r = exch(&["verify", "--dims", "3,4"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.records()[0]["passed"], true);
    let r = exch(&["verify", "--dims", "2,2,2", "--trials", "10"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.records()[0]["orbit_count"], 8);
    let r = exch(&["verify", "--dims", "5000,5000"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("4096"), "{}", r.stderr);
}

#[test]
fn sample_check_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 11, "");
    let d = data.to_str().unwrap();
    let r = exch(&["sample-check", "--data", d, "--budget", "75", "--trials", "200"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = &r.records()[0];
    // 150 training cells, batches of 75
    assert_eq!(v["cells"], 150);
    assert_eq!(v["expected_frequency"], 0.5);
    assert!((v["mean_frequency"].as_f64().unwrap() - 0.5).abs() < 1e-12);

    let r = exch(&["sample-check", "--data", d, "--budget", "75", "--trials", "0"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.records()[0]["trials"], 0);

    assert_eq!(exch(&["sample-check", "--data", d, "--budget", "1000"]).code, 2);

    let table = dir.path().join("rows.tsv");
    let r = exch(&[
        "sample-check", "--data", d, "--sampler", "conditional", "--budget", "50", "--target-rows", "1", "--trials", "500", "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.records()[0]["target_rows"], 1);
    assert_eq!(std::fs::read_to_string(table).unwrap().lines().count(), 21);
}
