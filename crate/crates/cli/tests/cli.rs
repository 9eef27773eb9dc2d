use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cunning(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cunning"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let output = cunning(&args);
    assert!(
        output.status.success(),
        "{command} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_err(command: &str, config: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let output = cunning(&args);
    assert!(!output.status.success(), "{command} unexpectedly succeeded");
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Every file in `dir`, sorted by name, with its contents.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

const SMALL: &str =
    "model.lambda = 1\nmodel.n = 8\nmodel.T = 3000\nmodel.seed = 5\nstats.tau = 1, 4\n";

#[test]
fn single_round_writes_one_row() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "c.cfg",
        "model.lambda = 1\nmodel.n = 8\nmodel.T = 1\n",
    );
    let out = tmp.path().join("out");
    run_ok("simulate", &config, &out, &[]);
    let text = read(&out, "magnetization.csv");
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t,m,restarted");
    assert!(lines[1].starts_with("1,"));
    assert!(!out.join("returns_tau1.csv").exists());
    assert!(read(&out, "run_manifest.txt").contains("seed = 0"));
}

#[test]
fn simulate_is_deterministic_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.cfg", SMALL);
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_ok("simulate", &config, &a, &[]);
    run_ok("simulate", &config, &b, &[]);
    run_ok("simulate", &config, &c, &["--seed", "6"]);
    assert_eq!(snapshot(&a), snapshot(&b));
    assert_ne!(read(&a, "magnetization.csv"), read(&c, "magnetization.csv"));
    assert!(read(&c, "run_manifest.txt").contains("seed = 6"));
    let returns = read(&a, "returns_tau4.csv");
    assert!(returns.starts_with("t,r\n"));
    assert!(read(&a, "returns_tau4_excluded.csv").starts_with("t\n"));
}

#[test]
fn invalid_config_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let missing = write_config(tmp.path(), "a.cfg", "model.n = 8\n");
    assert!(run_err("simulate", &missing, &out, &[]).contains("model.lambda"));
    let unknown = write_config(
        tmp.path(),
        "b.cfg",
        "model.lambda = 1\nmodel.colour = red\n",
    );
    assert!(run_err("simulate", &unknown, &out, &[]).contains("model.colour"));
    let bad = write_config(tmp.path(), "c.cfg", "model.lambda = 1\nnoise.K = 0.5\n");
    assert!(run_err("simulate", &bad, &out, &[]).contains("K"));
}

#[test]
fn stats_from_simulation_and_from_file() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.cfg", SMALL);
    let out = tmp.path().join("stats");
    run_ok("stats", &config, &out, &[]);
    for name in ["hist", "hist_log", "ccdf", "acf", "acf_abs"] {
        assert!(out.join(format!("{name}_tau1.csv")).exists(), "{name}");
        assert!(out.join(format!("{name}_tau4.csv")).exists(), "{name}");
    }
    assert!(read(&out, "fit_tau1.txt").contains("acf_lag1 = "));

    let prices = tmp.path().join("prices.csv");
    let mut text = String::from("t,price\n");
    let mut p = 100.0f64;
    for t in 0..400 {
        p *= 1.0 + 0.01 * ((t * 7919 % 13) as f64 - 6.0) / 6.0;
        text.push_str(&format!("{t},{p}\n"));
    }
    fs::write(&prices, text).unwrap();
    let from_file = tmp.path().join("file");
    run_ok(
        "stats",
        &config,
        &from_file,
        &["--returns", prices.to_str().unwrap()],
    );
    assert!(read(&from_file, "fit.txt").contains("returns = 399"));
    assert!(!from_file.join("run_manifest.txt").exists());
}

#[test]
fn empty_or_malformed_returns_file_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.cfg", SMALL);
    let out = tmp.path().join("out");
    let empty = write_config(tmp.path(), "empty.csv", "");
    let msg = run_err(
        "stats",
        &config,
        &out,
        &["--returns", empty.to_str().unwrap()],
    );
    assert!(msg.contains("empty.csv"), "{msg}");
    let bad = write_config(tmp.path(), "bad.csv", "t,r\n1,0.5\n2,abc\n");
    let msg = run_err("iet", &config, &out, &["--returns", bad.to_str().unwrap()]);
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn iet_flags_unreachable_thresholds() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.cfg", &format!("{SMALL}stats.R_Q = 2, 1e6\n"));
    let out = tmp.path().join("out");
    run_ok("iet", &config, &out, &[]);
    let report = read(&out, "iet_report.txt");
    let huge: Vec<_> = report
        .lines()
        .filter(|l| l.starts_with("RQ1000000_"))
        .collect();
    assert_eq!(huge.len(), 2);
    assert!(huge.iter().all(|l| l.ends_with("flag = empty")), "{report}");
    assert_eq!(read(&out, "iet_RQ1000000_tau1.csv"), "dt,density\n");
    assert_eq!(read(&out, "iet_RQ1000000_tau1_fit.csv"), "dt,psi,binned\n");
    assert!(read(&out, "iet_RQ2_tau1.csv").lines().count() > 1);

    let again = tmp.path().join("again");
    run_ok("iet", &config, &again, &[]);
    assert_eq!(snapshot(&out), snapshot(&again));
}

const GRID: &str =
    "sweep.lambda = 0.5:1:0.5\nsweep.K = 5:5:1\nsweep.b = 2:3:1\nsweep.b0 = 0.2:0.4:0.2\n\
sweep.T = 200\nsweep.n = 8\nsweep.replicas = 2\nsweep.seed = 9\nsweep.workers = 2\n";

#[test]
fn sweep_resumes_to_the_same_output() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "g.cfg", GRID);
    let whole = tmp.path().join("whole");
    run_ok("sweep", &config, &whole, &[]);
    let records = read(&whole, "sweep.csv");
    assert_eq!(records.lines().count(), 1 + 16);
    assert!(whole.join("slice_K5_lambda0.5.csv").exists());
    assert!(whole.join("slice_K5_lambda1.csv").exists());

    let parts = tmp.path().join("parts");
    run_ok("sweep", &config, &parts, &["--limit", "5"]);
    assert_eq!(read(&parts, "sweep.csv").lines().count(), 6);
    assert!(!parts.join("slice_K5_lambda1.csv").exists());
    // A row written after the last manifest entry is dropped on resume.
    let mut partial = read(&parts, "sweep.csv");
    partial.push_str("1,5,3,0.4,1,0,0.5,0,0\n");
    fs::write(parts.join("sweep.csv"), partial).unwrap();
    run_ok("sweep", &config, &parts, &["--limit", "4"]);
    run_ok("sweep", &config, &parts, &[]);
    assert_eq!(snapshot(&whole), snapshot(&parts));
}

#[test]
fn sweep_refuses_corrupt_or_mismatched_state() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "g.cfg", GRID);
    let out = tmp.path().join("out");
    run_ok("sweep", &config, &out, &["--limit", "3"]);

    let manifest = out.join("sweep_manifest.txt");
    let good = read(&out, "sweep_manifest.txt");
    fs::write(&manifest, format!("{good}done banana\n")).unwrap();
    assert!(run_err("sweep", &config, &out, &[]).contains("--fresh"));

    fs::write(&manifest, &good).unwrap();
    let other = write_config(
        tmp.path(),
        "h.cfg",
        &GRID.replace("sweep.seed = 9", "sweep.seed = 10"),
    );
    assert!(run_err("sweep", &other, &out, &[]).contains("--fresh"));

    fs::remove_file(&manifest).unwrap();
    assert!(run_err("sweep", &config, &out, &[]).contains("--fresh"));

    run_ok("sweep", &config, &out, &["--fresh"]);
    let reference = tmp.path().join("reference");
    run_ok("sweep", &config, &reference, &[]);
    assert_eq!(snapshot(&out), snapshot(&reference));
}

#[test]
fn missing_output_directory_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "c.cfg", SMALL);
    let output = cunning(&["simulate", "--config", config.to_str().unwrap()]);
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("output.dir"));
}
