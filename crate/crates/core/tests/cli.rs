//! End-to-end runs of the `tensor-pspline` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tensor_pspline::cli::artifacts::{LoadedFit, MANIFEST_FILE};

const BIN: &str = env!("CARGO_BIN_EXE_tensor-pspline");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

/// `n` rows of `t, y` with `t` spanning [1990, 2020].
fn write_data(dir: &Path, n: usize) -> PathBuf {
    let mut s = String::from("t,y\n");
    for i in 0..n {
        let t = 1990.0 + 30.0 * i as f64 / (n - 1) as f64;
        let y = 14.0 + (t / 4.0).sin() + 0.2 * ((i * 29 % 13) as f64 / 13.0 - 0.5);
        s.push_str(&format!("{t},{y}\n"));
    }
    let path = dir.join("data.csv");
    fs::write(&path, s).unwrap();
    path
}

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let cfg = format!(
        r#"input = "data.csv"
coordinates = ["t"]
response = "y"
basis_dims = [5]
output = "fit"
chains = 2

[sampler]
iterations = 200
burn_in = 50
seed = 11
{extra}"#
    );
    let path = dir.join("fit.toml");
    fs::write(&path, cfg).unwrap();
    path
}

fn fit_once(dir: &Path) -> PathBuf {
    write_data(dir, 50);
    let cfg = write_config(dir, "\n[[effects]]\ncoordinates = [\"t\"]\ngrid = 40\n");
    let o = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    dir.join("fit")
}

#[test]
fn minimal_fit_writes_a_valid_artifact_set() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fit_once(tmp.path());
    let fit = LoadedFit::load(&out).unwrap();
    let m = &fit.manifest;
    assert_eq!((m.n, m.dims.clone(), m.p()), (50, vec![5], 1));
    for f in m.files.iter().chain(m.chains.iter().map(|c| &c.file)) {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    for key in ["format_version", "config_hash", "config", "rescaling", "y_mean", "y_scale", "prior", "columns", "chains"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m.rescaling[0].min, 1990.0);
    assert_eq!(m.rescaling[0].max, 2020.0);

    let effect = fs::read_to_string(out.join("effect_t.csv")).unwrap();
    let mut lines = effect.lines();
    assert_eq!(lines.next(), Some("t,mean,pointwise_lo,pointwise_hi,simultaneous_lo,simultaneous_hi"));
    assert_eq!(lines.count(), 40);
}

#[test]
fn same_seed_gives_identical_sample_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (fa, fb) = (fit_once(a.path()), fit_once(b.path()));
    for c in 0..2 {
        let name = format!("samples_chain{c}.bin");
        assert_eq!(fs::read(fa.join(&name)).unwrap(), fs::read(fb.join(&name)).unwrap());
    }

    let o = run(&[
        "fit",
        "--config",
        a.path().join("fit.toml").to_str().unwrap(),
        "--seed",
        "12",
        "--output",
        a.path().join("other").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    assert_ne!(
        fs::read(fa.join("samples_chain0.bin")).unwrap(),
        fs::read(a.path().join("other/samples_chain0.bin")).unwrap()
    );
}

#[test]
fn effect_for_a_missing_coordinate_fails_before_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    write_data(tmp.path(), 50);
    let cfg = write_config(tmp.path(), "\n[[effects]]\ncoordinates = [\"u\"]\n");
    let o = run(&["fit", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("'u'"));
    assert!(!tmp.path().join("fit").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    write_data(tmp.path(), 50);
    let cfg = write_config(tmp.path(), "");
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--set", "basis_dims=[3]"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["fit", "--config", cfg.to_str().unwrap(), "--set", "colour=1"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["fit", "--config", tmp.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn plotdata_and_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fit_once(tmp.path());
    let fit_arg = out.to_str().unwrap();
    let pd = tmp.path().join("plots");
    let o = run(&[
        "plotdata",
        "--fit",
        fit_arg,
        "--trace",
        "sigma2",
        "--trace",
        "tau2_t",
        "--chain",
        "1",
        "--out",
        pd.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let traces: Vec<_> = fs::read_dir(&pd).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(traces.len(), 2);
    for t in traces {
        let body = fs::read_to_string(&t).unwrap();
        assert_eq!(body.lines().count(), 1 + 150, "{}", t.display());
        assert!(body.lines().nth(1).unwrap().starts_with("51,"));
    }

    let o = run(&["plotdata", "--fit", fit_arg, "--trace", "tau2_x"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["plotdata", "--fit", fit_arg, "--slice", "t=2000"]);
    assert_eq!(o.status.code(), Some(1), "fixing every coordinate must fail");

    let o = run(&["effects", "--fit", fit_arg, "--coords", "t", "--grid", "9", "--center", "--out", pd.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let centered = fs::read_to_string(pd.join("effect_t.csv")).unwrap();
    assert_eq!(centered.lines().count(), 10);
    let o = run(&["effects", "--fit", fit_arg, "--coords", "t,t"]);
    assert_eq!(o.status.code(), Some(1));

    let o = run(&["diagnose", "--fit", fit_arg, "--params", "sigma2,b_3"]);
    assert!(o.status.success(), "{}", text(&o));
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("sigma2") && table.contains("b_3") && table.contains("rhat"));
}

#[test]
fn config_drift_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fit_once(tmp.path());
    let cfg = tmp.path().join("fit.toml");
    let o = run(&["diagnose", "--fit", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));

    let changed = fs::read_to_string(&cfg).unwrap().replace("seed = 11", "seed = 12");
    fs::write(&cfg, changed).unwrap();
    let o = run(&["diagnose", "--fit", out.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("drift"));
}

#[test]
fn simulate_writes_replicate_table() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("sim.csv");
    let o = run(&[
        "simulate",
        "--function",
        "f1",
        "--p",
        "2",
        "--n",
        "200",
        "--d",
        "5",
        "--replicates",
        "2",
        "--iterations",
        "300",
        "--burn-in",
        "100",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let body = fs::read_to_string(&csv).unwrap();
    assert_eq!(body.lines().count(), 3);
    assert!(body.starts_with("function,p,n,d,sigma,replicate,seed,mse"));
    let o = run(&["simulate", "--function", "f2", "--p", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
