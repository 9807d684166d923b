use std::path::Path;
use std::process::Command;

fn gltorus(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gltorus")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn manifest_value(dir: &Path, key: &str) -> String {
    read(&dir.join("manifest"))
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap_or_else(|| panic!("manifest lacks {key}"))
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().to_string()).collect()
}

#[test]
fn spectrum_of_trivial_bundle_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let (code, _, err) = gltorus(&["spectrum", "-o", o, "--set", "lattice.degree=0", "--set", "lattice.n1=12", "--set", "lattice.n2=12"]);
    assert_eq!(code, 0, "{err}");
    let first: f64 = csv_column(&read(&dir.path().join("spectrum.csv")), "eigenvalue")[0].parse().unwrap();
    assert!(first.abs() < 1e-10);
    assert_eq!(manifest_value(dir.path(), "status"), "ok");
}

#[test]
fn sweep_flips_from_normal_to_vortex_at_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let (code, _, err) = gltorus(&["sweep", "-o", o, "--set", "lattice.n1=16", "--set", "lattice.n2=16"]);
    assert_eq!(code, 0, "{err}");
    let table = read(&dir.path().join("sweep.csv"));
    let ratio: Vec<f64> = csv_column(&table, "tau_over_bradlow").iter().map(|s| s.parse().unwrap()).collect();
    let class = csv_column(&table, "classification");
    for (r, c) in ratio.iter().zip(&class) {
        if *r <= 0.9 + 1e-12 {
            assert_eq!(c, "normal", "tau/tau_B = {r}");
        }
        if *r >= 1.1 - 1e-12 {
            assert_eq!(c, "vortex", "tau/tau_B = {r}");
        }
    }
    let flip = class.iter().position(|c| c == "vortex").unwrap();
    assert!(class[..flip].iter().all(|c| c == "normal"));
    assert!(class[flip..].iter().all(|c| c == "vortex"));
}

#[test]
fn identical_config_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--set", "lattice.n1=12", "--set", "lattice.n2=12", "--set", "solver.seed=5"];
    for d in [&a, &b] {
        let mut v = vec!["minimize", "-o", d.path().to_str().unwrap()];
        v.extend(args);
        assert_eq!(gltorus(&v).0, 0);
    }
    for f in ["report.json", "energy_history.csv", "solution.glf"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest_value(a.path(), "config_sha256"), manifest_value(b.path(), "config_sha256"));
    assert_eq!(manifest_value(a.path(), "seed"), "5");
}

#[test]
fn emitted_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = a.path().to_str().unwrap();
    assert_eq!(gltorus(&["spectrum", "-o", oa, "--set", "lattice.n1=10", "--set", "spectrum.k=4"]).0, 0);
    let cfg = a.path().join("config.ini");
    let (code, _, err) = gltorus(&["spectrum", "-c", cfg.to_str().unwrap(), "-o", b.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(manifest_value(a.path(), "config_sha256"), manifest_value(b.path(), "config_sha256"));
    assert_eq!(read(&a.path().join("spectrum.csv")), read(&b.path().join("spectrum.csv")));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    assert_eq!(gltorus(&["frobnicate"]).0, 1);
    assert_eq!(gltorus(&["minimize", "-o", o, "--set", "lattice.colour=red"]).0, 1);
    assert_eq!(gltorus(&["minimize", "-o", o, "--set", "lattice.n1=2"]).0, 1);
    let (code, _, err) = gltorus(&["certify", "-o", o]);
    assert_eq!(code, 1);
    assert!(err.contains("certify.input"));
    assert!(manifest_value(dir.path(), "status").starts_with("error"));
}

#[test]
fn nonconvergence_exits_with_two_and_keeps_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let (code, _, _) = gltorus(&[
        "minimize",
        "-o",
        o,
        "--set",
        "lattice.n1=8",
        "--set",
        "lattice.n2=8",
        "--set",
        "solver.max_iter=1",
        "--set",
        "solver.newton_max_iter=0",
    ]);
    assert_eq!(code, 2);
    assert_eq!(manifest_value(dir.path(), "status"), "nonconverged");
    assert!(dir.path().join("solution.glf").exists());
}

#[test]
fn bifurcate_then_certify_finds_a_descent_direction() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let grid = ["--set", "lattice.n1=16", "--set", "lattice.n2=16"];
    let mut args = vec!["bifurcate", "--level", "2", "--refine", "-o", o];
    args.extend(grid);
    let (code, _, err) = gltorus(&args);
    assert_eq!(code, 0, "{err}");
    assert_eq!(csv_column(&read(&dir.path().join("branch.csv")), "classification"), ["nonminimal"]);

    let snap = dir.path().join("branch_1.glf");
    let cert_dir = dir.path().join("certify");
    let (code, stdout, err) = gltorus(&["certify", "--input", snap.to_str().unwrap(), "-o", cert_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let cert: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(cert["second_variation"].as_f64().unwrap() < 0.0);
    let index: serde_json::Value = serde_json::from_str(&read(&cert_dir.join("index.json"))).unwrap();
    assert!(index["count"].as_u64().unwrap() >= 2);
}
