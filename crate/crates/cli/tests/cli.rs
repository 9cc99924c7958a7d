use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dsb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsb")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = dsb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn clone_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (data, clone, sample) = (dir.path().join("r.dsb"), dir.path().join("c.dsb"), dir.path().join("s.dsb"));
    let v = ok_json(&["data", "sample-rect", "--n", "4000", "--seed", "2", "--out", p(&data)]);
    assert_eq!(v["class_counts"], serde_json::json!([2000, 2000]));
    let v = ok_json(&["clone", "fit", "--data", p(&data), "--mode", "full", "--out", p(&clone)]);
    assert_eq!(v["components"], 2);
    let v = ok_json(&["clone", "sample", "--clone", p(&clone), "--n-per-component", "100", "--out", p(&sample)]);
    assert_eq!(v["n"], 200);
    let v = ok_json(&["clone", "validate", "--clone", p(&clone), "--data", p(&data), "--n-per-component", "20000"]);
    assert_eq!(v["pass"], true);
    let iso = dir.path().join("iso.dsb");
    ok_json(&["clone", "fit", "--data", p(&data), "--mode", "isotropic", "--out", p(&iso)]);
    let v = ok_json(&["clone", "validate", "--clone", p(&iso), "--data", p(&data), "--sigma", "3"]);
    assert_eq!(v["pass"], false);
}

#[test]
fn seeds_control_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let f = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        ok_json(&["data", "sample-rect", "--n", "50", "--seed", seed, "--out", p(&path)]);
        std::fs::read(path).unwrap()
    };
    assert_eq!(f("a", "5"), f("b", "5"));
    assert_ne!(f("a", "5"), f("c", "6"));
}

#[test]
fn analytic_ordering() {
    let v = ok_json(&["analytic", "solve", "--n", "200000", "--seed", "1"]);
    let theta = |k: &str| v[k]["theta_oracle"].as_f64().unwrap();
    assert!(theta("correction") < theta("lda"));
    assert!(theta("lda") < theta("naive"));
    assert!(theta("oracle").abs() < 1e-12);
}

#[test]
fn gflow_and_perceptron_runs() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("g.csv");
    let v = ok_json(&[
        "gflow", "run", "--order", "0", "--steps", "500", "--sample-size", "5000", "--eval-size", "2000", "--out", p(&g),
    ]);
    assert!(v["theta_naive"].as_f64().unwrap() < 0.05, "{v}");
    assert!(g.is_file());
    let run = dir.path().join("runs/p.csv");
    let v = ok_json(&["train", "perceptron", "--steps", "3000", "--eval-size", "2000", "--out", p(&run)]);
    assert!(v["final_accuracy"].as_f64().unwrap() > 0.9);
    assert!(run.with_extension("json").is_file());
}

#[test]
fn mlp_on_synthetic_batches() {
    let dir = tempfile::tempdir().unwrap();
    let cif = dir.path().join("cifar");
    dsb::data::write_synthetic_cifar(&cif, 10, 5, 0).unwrap();
    let (train, test) = (dir.path().join("train.dsb"), dir.path().join("test.dsb"));
    let v = ok_json(&["data", "load-cifar", "--dir", p(&cif), "--per-class", "8", "--out", p(&train)]);
    assert_eq!((v["n"].as_u64(), v["dim"].as_u64()), (Some(80), Some(1024)));
    ok_json(&["data", "load-cifar", "--dir", p(&cif), "--split", "test", "--out", p(&test)]);
    let run = dir.path().join("mlp.csv");
    let v = ok_json(&[
        "train", "mlp", "--data", p(&train), "--eval", p(&test), "--hidden", "16", "--steps", "30", "--out", p(&run),
    ]);
    assert!(v["checkpoints"].as_u64().unwrap() > 2);
}

#[test]
fn experiment_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "seeds = [0]\neval_size = 1000\n[perceptron]\nsteps = 500\nclone_fit_size = 5000\n").unwrap();
    let run = |out: &str| {
        let o = dir.path().join(out);
        let v = ok_json(&["experiment", "run", "rect-clone-collapse", "--config", p(&cfg), "--out", p(&o), "--seed", "4"]);
        (v, std::fs::read(o.join("summary.csv")).unwrap(), o)
    };
    let (va, sa, oa) = run("a");
    let (vb, sb, _) = run("b");
    assert_eq!(va, vb);
    assert_eq!(sa, sb);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(oa.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["data_seed"], 4);
    assert_eq!(m["experiment"], "rect-clone-collapse");
}

#[test]
fn failures_print_a_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsb(&["experiment", "run", "fig-7", "--out", p(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: kind=unknown message=\""), "{err}");

    let out = dsb(&["data", "load-cifar", "--dir", p(&dir.path().join("none")), "--out", "x.dsb"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=missing_file"));

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "experiment = \"rect-alignment\"\n").unwrap();
    let out = dsb(&["experiment", "run", "rect-boundaries", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=config"));
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = dsb(&["experiment", "run", "rect-boundaries", "--config", p(&cfg), "--out", p(dir.path())]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=config"));
}
