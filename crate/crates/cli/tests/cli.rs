use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "\
[grid]
nx = 12
ny = 12
bc = wall

[physics]
rho1 = 3
rho2 = 1
nu1 = 0.05
nu2 = 0.05
theta = 1
theta0 = 2
a = 4e-3
b = 0.1

[scheme]
dt = 1e-3
t_end = 0.02
snapshot_every = 10

[experiment]
initial = smooth_noise
amplitude = 0.1
";

fn agg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agg")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn resumed_run_reproduces_the_tail_of_diag_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let full = tmp.path().join("full");
    let out = agg(&["run", "-c", s(&cfg), "--out", s(&full)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let resumed = tmp.path().join("resumed");
    let snap = full.join("snap_00000010.bin");
    let out = agg(&["run", "-c", s(&cfg), "--out", s(&resumed), "--resume", s(&snap)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let a = fs::read_to_string(full.join("diag.csv")).unwrap();
    let b = fs::read_to_string(resumed.join("diag.csv")).unwrap();
    let a: Vec<&str> = a.lines().collect();
    let b: Vec<&str> = b.lines().collect();
    // header, t = 0 and ten steps precede the resumed records
    assert_eq!(a[0], b[0]);
    assert_eq!(&a[12..], &b[1..]);
    assert!(!full.join(".agg.lock").exists());
}

#[test]
fn invalid_configuration_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, CONFIG.replace("theta0 = 2", "theta0 = 0.5")).unwrap();
    let out = agg(&["run", "-c", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("agg-error kind=Validation"), "{err}");

    assert_eq!(agg(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn resume_rejects_a_foreign_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.cfg");
    fs::write(&cfg, CONFIG).unwrap();
    let full = tmp.path().join("full");
    assert!(agg(&["run", "-c", s(&cfg), "--out", s(&full)]).status.success());
    let other = tmp.path().join("other.cfg");
    fs::write(&other, CONFIG.replace("b = 0.1", "b = 0.2")).unwrap();
    let snap = full.join("snap_00000010.bin");
    let out = agg(&["run", "-c", s(&other), "--out", s(&tmp.path().join("r")), "--resume", s(&snap)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn decay_fit_reads_a_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("y.csv");
    let mut text = String::from("t,y\n");
    for k in 0..=100 {
        let t = k as f64 * 0.5;
        text.push_str(&format!("{t:.16e},{:.16e}\n", 2.0 * (1.0 + t).powf(-1.5)));
    }
    fs::write(&csv, text).unwrap();
    let out = agg(&["decay-fit", "--csv", s(&csv), "--window", "5,50"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let alpha: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("alpha_hat"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((alpha - 1.5).abs() < 1e-10, "{stdout}");
}
