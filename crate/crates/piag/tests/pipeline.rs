//! End-to-end tests of the CLI binary: config handling, exit codes, output
//! files, and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn piag_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_piag"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const SWEEP_CONFIG: &str = "\
instance.kind = quadratic
instance.m = 4
instance.n = 6
instance.mu = 1
instance.l = 10
instance.seed = 42
regularizer.kind = l1
regularizer.lambda1 = 0.1
schedule.kind = adversarial-deadline
schedule.k = 0
schedule.seed = 9
policy.kind = certified-exact
stop.max_iters = 40000
stop.epsilon_rel = 1e-8
sweep.k_values = 0,1,2,4,8
sweep.q_values = 10
";

#[test]
fn sweep_run_passes_and_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP_CONFIG);
    let out = dir.path().join("results");
    let status = piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success(), "exit {status:?}");

    let rates = std::fs::read_to_string(out.join("rates.csv")).unwrap();
    let mut lines = rates.lines();
    assert_eq!(
        lines.next(),
        Some("Q,K,eta,measured_rate,eq7_rate,eq8_rate,hit_iter,budget")
    );
    assert_eq!(rates.lines().count(), 6, "expected 5 sweep rows:\n{rates}");

    for k in [0, 1, 2, 4, 8] {
        assert!(out.join(format!("trace_q10_k{k}.csv")).exists());
        let report = std::fs::read_to_string(out.join(format!("report_q10_k{k}.txt"))).unwrap();
        assert!(report.contains("descent\tpass"), "{report}");
        assert!(report.contains("rate_step_size_bound\tpass"), "{report}");
        assert!(
            report.contains("rate_condition_number_bound\tpass"),
            "{report}"
        );
        assert!(!report.contains("\tfail\t"), "{report}");
    }
    let slopes = std::fs::read_to_string(out.join("slopes.csv")).unwrap();
    assert_eq!(
        slopes.lines().count(),
        2,
        "one slope row expected:\n{slopes}"
    );

    let trace = std::fs::read_to_string(out.join("trace_q10_k4.csv")).unwrap();
    assert!(trace.starts_with("k,F_k,d_norm_sq,eta,max_staleness\n"));
}

/// A downstream consumer must be able to re-verify a run from the trace
/// file alone: parse it back and replay the geometric bound.
#[test]
fn trace_csv_supports_external_reverification() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SWEEP_CONFIG);
    let out = dir.path().join("results");
    assert!(piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ])
        .status()
        .unwrap()
        .success());

    let text = std::fs::read_to_string(out.join("trace_q10_k4.csv")).unwrap();
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5, "bad row {line:?}");
        let k: usize = fields[0].parse().unwrap();
        let f_k: f64 = fields[1].parse().unwrap();
        let d_sq: f64 = fields[2].parse().unwrap();
        let eta: f64 = fields[3].parse().unwrap();
        let staleness: usize = fields[4].parse().unwrap();
        assert!(d_sq >= 0.0);
        assert!(staleness <= 4);
        rows.push((k, f_k, eta));
    }
    assert_eq!(rows[0].0, 0);
    let f0 = rows[0].1;
    let eta = rows[0].2;
    let mu = 1.0; // from the config
    let tol = 1e-9 * f0.max(1.0);
    for (k, f_k, _) in &rows {
        let bound = (1.0 + eta * mu / 16.0).powi(-(*k as i32)) * f0;
        assert!(
            *f_k <= bound + tol,
            "re-verified bound fails at k = {k}: {f_k} > {bound}"
        );
    }
}

#[test]
fn invalid_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "instance.mu = 5\ninstance.l = 1\n");
    let out = dir.path().join("results");
    let output = piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists(), "no outputs may be written on invalid input");
    assert!(!output.stderr.is_empty());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "instance.mu = 1\nbogus = 3\n");
    let output = piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("o").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn reruns_reproduce_rates_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "\
instance.kind = logistic
instance.m = 3
instance.n = 4
instance.mu = 1
instance.l = 5
instance.seed = 7
schedule.kind = random-bounded
schedule.k = 2
schedule.seed = 3
stop.max_iters = 20000
stop.epsilon_rel = 1e-8
sweep.k_values = 0,2
",
    );
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = piag_bin()
            .args([
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    // Re-run into the first directory again: the reference cache is warm.
    let status = piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out1.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    for name in [
        "rates.csv",
        "slopes.csv",
        "trace_q5_k0.csv",
        "trace_q5_k2.csv",
    ] {
        let a = std::fs::read_to_string(out1.join(name)).unwrap();
        let b = std::fs::read_to_string(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across runs");
    }
}

#[test]
fn flag_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "\
instance.m = 2
instance.n = 3
instance.mu = 1
instance.l = 4
stop.max_iters = 100000
stop.epsilon_rel = 1e-8
",
    );
    let out = dir.path().join("results");
    let output = piag_bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--max-iters",
            "500",
            "--epsilon",
            "1e-4",
            "--seed",
            "77",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let trace = std::fs::read_to_string(out.join("trace_q4_k0.csv")).unwrap();
    // 500-step cap plus the header and the k = 0 row.
    assert!(trace.lines().count() <= 502, "max-iters override ignored");
}

#[test]
fn missing_config_file_exits_2() {
    let output = piag_bin()
        .args(["--config", "/nonexistent/run.cfg"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn default_config_runs_without_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let output = piag_bin()
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("checks:"), "{stdout}");
    assert!(out.join("rates.csv").exists());
}
