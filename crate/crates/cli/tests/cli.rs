use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use demforge::output::parse_snapshot;
use demforge::physics::{contact_coefficients, restitution_alpha};
use demforge::SimConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_demforge"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn demforge(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("sim.cfg");
    std::fs::write(&path, text).unwrap();
    path
}

fn verify_config_with(dir: &Path, extra: &str) -> PathBuf {
    let mut text = std::fs::read_to_string(config("verify.cfg")).unwrap();
    text.push_str(extra);
    write_config(dir, &text)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_snapshots_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = demforge(&[
        "run",
        config("verify.cfg").to_str().unwrap(),
        "--steps",
        "20",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = files(&out).into_iter().map(|f| f.0).collect();
    assert_eq!(
        names,
        ["metrics.csv", "snapshot_000000.csv", "snapshot_000020.csv"]
    );
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 20 * 9);
}

#[test]
fn zero_steps_writes_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = demforge(&[
        "run",
        config("verify.cfg").to_str().unwrap(),
        "--steps",
        "0",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let f = files(&out);
    assert_eq!(f.len(), 2);
    assert_eq!(f[1].0, "snapshot_000000.csv");
    let rows = parse_snapshot(std::str::from_utf8(&f[1].1).unwrap()).unwrap();
    assert_eq!(rows.len(), 512);
    assert_eq!(std::str::from_utf8(&f[0].1).unwrap().lines().count(), 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, variant: &str| {
        let out = dir.path().join(name);
        let o = demforge(&[
            "run",
            config("verify.cfg").to_str().unwrap(),
            "--steps",
            "60",
            "--variant",
            variant,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        files(&out)
    };
    let a = run("a", "two_phase");
    assert_eq!(a, run("b", "two_phase"));
    // snapshots do not depend on the Collide variant
    let c = run("c", "baseline");
    let snapshots = |f: &[(String, Vec<u8>)]| {
        f.iter()
            .filter(|x| x.0 != "metrics.csv")
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(snapshots(&a), snapshots(&c));
}

#[test]
fn seed_changes_the_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = demforge(&[
            "run",
            config("verify.cfg").to_str().unwrap(),
            "--steps",
            "0",
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        std::fs::read(out.join("snapshot_000000.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn invalid_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = verify_config_with(dir.path(), "dt = -1\n");
    let o = demforge(&[
        "run",
        path.to_str().unwrap(),
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dt"));

    let path = verify_config_with(dir.path(), "gravty.x = 1\n");
    let o = demforge(&["verify", path.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gravty.x"));

    let o = demforge(&["run", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn undersized_cells_are_rejected_by_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = verify_config_with(dir.path(), "grid.cell_size = 0.6\n");
    let o = demforge(&[
        "run",
        path.to_str().unwrap(),
        "--out-dir",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = demforge(&[
        "run",
        config("verify.cfg").to_str().unwrap(),
        "--steps",
        "1",
        "--out-dir",
        blocker.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_passes_on_the_shipped_config() {
    let o = demforge(&["verify", config("verify.cfg").to_str().unwrap()]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    for name in [
        "contact_completeness",
        "oracle_forces",
        "variant_equivalence",
        "friction_bound",
        "momentum",
        "dissipation",
    ] {
        assert!(
            text.contains(&format!("PASS {name}")),
            "{name} missing in {text}"
        );
    }
}

#[test]
fn verify_with_undersized_cells_fails_completeness() {
    let dir = tempfile::tempdir().unwrap();
    let path = verify_config_with(dir.path(), "grid.cell_size = 0.6\n");
    let o = demforge(&["verify", path.to_str().unwrap(), "--steps", "200"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 4, "{text}");
    assert!(text.contains("FAIL contact_completeness"), "{text}");
    assert!(text.contains("below 2 r_max"), "{text}");
}

#[test]
fn bench_reports_both_states() {
    let dir = tempfile::tempdir().unwrap();
    let path = verify_config_with(dir.path(), "run.warmup_steps = 300\n");
    let out = dir.path().join("bench");
    let o = demforge(&[
        "bench",
        path.to_str().unwrap(),
        "--steps",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(
        text.contains("[sparse]") && text.contains("[dense]"),
        "{text}"
    );
    assert_eq!(
        std::fs::read_to_string(out.join("bench_report.txt")).unwrap(),
        text
    );
}

/// Restitution of `m ẍ = −k_n x^{3/2} − α sqrt(m k_n sqrt(x)) ẋ` by RK4.
fn fine_step_restitution(k_n: f64, m: f64, alpha: f64, v0: f64) -> f64 {
    let accel = |x: f64, v: f64| {
        (-k_n * x.max(0.0).powf(1.5) - alpha * (m * k_n * x.max(0.0).sqrt()).sqrt() * v) / m
    };
    let h = 1e-7;
    let (mut x, mut v) = (0.0f64, v0);
    loop {
        let (k1x, k1v) = (v, accel(x, v));
        let (k2x, k2v) = (
            v + 0.5 * h * k1v,
            accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v),
        );
        let (k3x, k3v) = (
            v + 0.5 * h * k2v,
            accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v),
        );
        let (k4x, k4v) = (v + h * k3v, accel(x + h * k3x, v + h * k3v));
        let nx = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        let nv = v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if nx <= 0.0 {
            let s = x / (x - nx);
            return -(v + s * (nv - v)) / v0;
        }
        x = nx;
        v = nv;
    }
}

#[test]
fn head_on_snapshots_reproduce_restitution() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = demforge(&[
        "run",
        config("head_on.cfg").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let rel = |name: &str| {
        let rows = parse_snapshot(&std::fs::read_to_string(out.join(name)).unwrap()).unwrap();
        rows[0].velocity[0] - rows[1].velocity[0]
    };
    let eps = -rel("snapshot_002500.csv") / rel("snapshot_000000.csv");
    assert!((0.855..=0.945).contains(&eps), "{eps}");

    let cfg = SimConfig::load(config("head_on.cfg")).unwrap();
    let table = cfg.material_table();
    let c = contact_coefficients(1.0, table.get(0), table.get(0), 0.9, 0.5, 0.5, 1.0, 1.0);
    let oracle = fine_step_restitution(c.k_n, 0.5, restitution_alpha(0.9), 1.0);
    assert!((eps - oracle).abs() < 0.01 * oracle, "{eps} vs {oracle}");
}
