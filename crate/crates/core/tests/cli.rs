use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use extdiv::imaging::{encode_pgm, neuron_phantom, GrayImage};

fn extdiv(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_extdiv"));
    cmd.args(args).env_remove("EXTDIV_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn read_curve(dir: &Path) -> Vec<(f64, f64)> {
    let mut r = csv::Reader::from_path(dir.join("curve.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["x", "y"]);
    r.deserialize().map(|row| row.unwrap()).collect()
}

fn same_files(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).unwrap_or_else(|_| panic!("{name:?} missing in replay"));
        assert!(x == y, "{name:?} differs between run and replay");
    }
}

#[test]
fn ext_div_curve_matches_operator_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = extdiv(
        &["operator-curve", "--op", "ext-div", "--omega", "2", "--eta1", "0.3", "--a", "3", "--grid", "0:10:1001", "--out", out],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pts = read_curve(dir.path());
    assert_eq!(pts.len(), 1001);
    let kappa = 1.0 / (2.0 * (-0.3f64).exp() - 1.0);
    for &(x, y) in &pts {
        if x >= 3.0 * (-0.3f64).exp() && x <= 3.0 * 0.3f64.exp() {
            assert_eq!(y, 3.0);
        }
        if x > 3.0 * kappa {
            assert_eq!(y, x);
        }
    }
    assert!(pts.iter().any(|&(x, y)| x == 3.0 && y == 3.0));
    assert!(dir.path().join("run.meta").exists());
}

#[test]
fn soft_curve_on_symmetric_grid() {
    let dir = tempfile::tempdir().unwrap();
    let o = extdiv(&["operator-curve", "--op", "soft", "--gamma", "1", "--grid", "-3:3:7", "--out", dir.path().to_str().unwrap()], &[]);
    assert!(o.status.success());
    let ys: Vec<f64> = read_curve(dir.path()).into_iter().map(|p| p.1).collect();
    assert_eq!(ys, vec![-2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
}

#[test]
fn bs_prox_curve_has_multiplicative_wings() {
    let dir = tempfile::tempdir().unwrap();
    let o = extdiv(
        &["operator-curve", "--op", "bregman-prox-bs", "--a", "3", "--eta", "0.3", "--grid", "0.1:10:100", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(o.status.success());
    for (x, y) in read_curve(dir.path()) {
        if x > 3.0 * 0.3f64.exp() {
            assert!((y / x - (-0.3f64).exp()).abs() < 1e-12);
        } else if x < 3.0 * (-0.3f64).exp() {
            assert!((y / x - 0.3f64.exp()).abs() < 1e-12);
        }
    }
}

#[test]
fn invalid_parameters_name_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let o = extdiv(&["operator-curve", "--op", "ext-div", "--eta1", "0.8", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("log(omega)"));
}

#[test]
fn unknown_flags_are_fatal() {
    let o = extdiv(&["trace", "--no-such-flag"], &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = extdiv(&["synth-bench", "--trials", "1", "--grid", "huge"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_cap_must_be_a_positive_integer() {
    let o = extdiv(&["operator-curve", "--op", "soft"], &[("EXTDIV_THREADS", "lots")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn trace_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = extdiv(&["trace", "--method", "rkl", "--seed", "3", "--out", a.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let text = fs::read_to_string(a.join("trace.csv")).unwrap();
    assert!(text.starts_with("iter,delta_norm,fidelity,nmse\n"));
    let meta = a.join("run.meta");
    let o = extdiv(&["--from-meta", meta.to_str().unwrap(), "--out", b.to_str().unwrap()], &[("EXTDIV_THREADS", "1")]);
    assert!(o.status.success());
    same_files(&a, &b);
}

#[test]
fn forward_kl_trace_does_not_settle_in_ten_thousand_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let o = extdiv(
        &["trace", "--method", "fkl", "--eta", "0.01", "--max-iter", "10000", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("converged=false"));
}

#[test]
fn synth_bench_writes_one_row_per_trial_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = extdiv(
        &["synth-bench", "--m", "30", "--n", "40", "--rho-list", "0.1,0.2", "--trials", "2", "--fkl-max-iter", "2000", "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    assert_eq!(
        r.headers().unwrap(),
        vec!["trial", "method", "rho", "m", "n", "lambda", "omega", "eta1", "a", "eta", "nmse", "iters", "converged"]
    );
    assert_eq!(r.records().count(), 2 * 2 * 4);
    let meta = fs::read_to_string(dir.path().join("run.meta")).unwrap();
    assert!(meta.contains("\"k_max\": 50.0"));
}

#[test]
fn restore_from_pgm_input() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::new(16, 12, (0..192).map(|i| ((i * 7) % 31) as f64).collect()).unwrap();
    let input = dir.path().join("in.pgm");
    fs::write(&input, encode_pgm(&img)).unwrap();
    let out = dir.path().join("out");
    let o = extdiv(
        &["restore", "--input", input.to_str().unwrap(), "--method", "rkl", "--max-iter", "50", "--out", out.to_str().unwrap()],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["restored.pgm", "observed.pgm", "comparison.csv", "restore.txt", "run.meta"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let restored = extdiv::imaging::load_pgm(out.join("restored.pgm")).unwrap();
    assert_eq!((restored.width(), restored.height()), (16, 12));
    let side = fs::read_to_string(out.join("restore.txt")).unwrap();
    assert!(side.contains("method rkl") && side.contains("psnr_db") && side.contains("seed 0"));
}

#[test]
fn restore_needs_exactly_one_source() {
    assert_eq!(extdiv(&["restore"], &[]).status.code(), Some(2));
    let o = extdiv(&["restore", "--phantom", "--input", "x.pgm"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn phantom_pgm_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("phantom.pgm");
    extdiv::imaging::save_pgm(&neuron_phantom(), &p).unwrap();
    let back = extdiv::imaging::load_pgm(&p).unwrap();
    assert_eq!(back.pixels().len(), 64 * 64);
    assert_eq!(back.max(), 30.0);
}
