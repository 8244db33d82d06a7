use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_hchain");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn hchain")
}

fn write_config(dir: &TempDir, body: &str) -> String {
    let p = dir.path().join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

/// Rows after the '#' header, split on commas, with the column line first.
fn table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn fig3_writes_header_and_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "groups = 630\nmodes = [30, 65]\nclumps = [1, 2, 10]\n",
    );
    let out = dir.path().join("fig3.csv");
    let o = run(&[
        "fig3",
        "--all-variants",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# hchain"));
    assert!(text.contains("# groups = 630"));
    let t = table(&out);
    assert_eq!(t[0][..3], ["L", "d", "S2_units"]);
    assert!(t[0].contains(&"S2_exact_average".to_string()));
    assert_eq!(t.len(), 1 + 2 * 3);
    let first: f64 = t[1][2].parse().unwrap();
    assert_eq!(first, 0.0, "S² at d = 1");
}

#[test]
fn fig4_reports_ratio_to_noise_strength() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "modes = [30]\nclumps = [1, 4, 100]\n");
    let out = dir.path().join("fig4.csv");
    let o = run(&["fig4", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = table(&out);
    let col = t[0].iter().position(|c| c == "ratio_to_S2").unwrap();
    assert_eq!(t[1][col], "", "ratio undefined at d = 1");
    for row in &t[2..] {
        let r: f64 = row[col].parse().unwrap();
        assert!((r - 1.0).abs() < 0.1, "ratio {r}");
    }
}

#[test]
fn ensemble_is_deterministic_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[ensemble]\nsamples = 400\nlangevin_steps = 20\n");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "4")] {
        let o = run(&[
            "ensemble",
            "--config",
            &cfg,
            "--seed",
            "7",
            "--workers",
            workers,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.csv");
    run(&[
        "ensemble",
        "--config",
        &cfg,
        "--seed",
        "8",
        "--out",
        c.to_str().unwrap(),
    ]);
    assert_ne!(table(&a), table(&c));
}

#[test]
fn wave_writes_convergence_and_dispersion() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[wave]\ngroups = [16, 32]\ndispersion_groups = 8\n");
    let out = dir.path().join("wave.csv");
    let o = run(&["wave", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(table(&out).len(), 3);
    assert_eq!(table(&dir.path().join("wave_dispersion.csv")).len(), 1 + 4);
}

#[test]
fn report_defaults_to_si_units() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("report.csv");
    let o = run(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&out).unwrap().contains("# units: SI"));
}

#[test]
fn verify_passes_and_corruption_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("verify.csv");
    let o = run(&["verify", "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!fs::read_to_string(&out).unwrap().contains(",false,"));
    let o = run(&["verify", "--corrupt", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(&dir, "grups = 4\n");
    assert_eq!(run(&["fig3", "--config", &bad]).status.code(), Some(1));
    assert_eq!(run(&["fig3", "--units", "si"]).status.code(), Some(1));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(&["fig3", "--config", "/nonexistent/run.toml"])
            .status
            .code(),
        Some(1)
    );
    let odd = write_config(&dir, "groups = 7\nclumps = [2]\n");
    assert_eq!(run(&["fig3", "--config", &odd]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
