//! Experiment orchestration: build instances across a (Q, K) sweep, solve
//! references, run the iteration, replay every applicable check, and emit
//! traces, reports, and the aggregate rate table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, InstanceKind};
use crate::error::Error;
use crate::problems::{
    eval_objective, make_logistic_instance_with_condition, make_quadratic_instance,
    CompositeProblem,
};
use crate::reference::solve_cached;
use crate::solver::{run_piag, DelaySchedule, RunTrace, StopRule};
use crate::theory::{
    check_descent, check_direction_lower_bound, check_iteration_budget, check_linear_rate,
    iteration_budget, rate_condition_number, CheckEntry, CheckReport, StepSizePolicy, Verdict,
};
use crate::Result;

/// Accuracy requested from the reference solvers.
const REFERENCE_TOL: f64 = 1e-13;

/// Aggregate row for one sweep point.
#[derive(Debug, Clone)]
pub struct SweepPointResult {
    pub label: String,
    /// Condition number of the instance actually built.
    pub q: f64,
    /// The sweep-axis value the point was requested at (groups the
    /// K-sweep for slope fitting even when realized Q differs in the
    /// last bits).
    pub q_requested: f64,
    pub k_delay: usize,
    pub eta: f64,
    /// Geometric mean of F_{k+1}/F_k over the tail half of the run.
    pub measured_rate: f64,
    /// Per-iteration factor of the step-size rate bound.
    pub eq7_rate: f64,
    /// Per-iteration factor of the condition-number rate bound.
    pub eq8_rate: f64,
    pub hit_iter: Option<usize>,
    pub budget: u64,
    pub report: CheckReport,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub points: Vec<SweepPointResult>,
    pub checks_run: usize,
    pub failures: usize,
    pub not_applicable: usize,
}

impl ExperimentOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn format_q(q: f64) -> String {
    if q.fract() == 0.0 && q.abs() < 1e15 {
        format!("{}", q as i64)
    } else {
        format!("{q}")
    }
}

/// Builds the instance for one sweep point. Quadratics target L = Q * mu
/// exactly; logistic instances rescale their data rows to the same Q.
/// Cyclic schedules cap m at K + 1 so the staleness bound stays satisfiable.
fn build_instance(cfg: &ExperimentConfig, q: f64, k_delay: usize) -> Result<CompositeProblem> {
    let m = if cfg.schedule_kind == crate::solver::ScheduleKind::Cyclic {
        cfg.m.min(k_delay + 1)
    } else {
        cfg.m
    };
    let mut problem = match cfg.instance_kind {
        InstanceKind::Quadratic => {
            make_quadratic_instance(m, cfg.n, cfg.mu, q * cfg.mu, cfg.instance_seed)?
        }
        InstanceKind::Logistic => {
            make_logistic_instance_with_condition(m, cfg.n, cfg.mu, q, cfg.instance_seed)?
        }
    };
    problem.regularizer = cfg.regularizer.clone();
    Ok(problem)
}

/// Geometric mean of successive suboptimality ratios over the tail half of
/// the trace; NaN when no valid ratio exists.
pub fn measured_tail_rate(trace: &RunTrace) -> f64 {
    let n = trace.records.len();
    if n < 2 {
        return f64::NAN;
    }
    let start = n / 2;
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for k in start..n - 1 {
        let a = trace.records[k].suboptimality;
        let b = trace.records[k + 1].suboptimality;
        if a > 0.0 && b > 0.0 {
            log_sum += (b / a).ln();
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        (log_sum / count as f64).exp()
    }
}

fn run_point(
    cfg: &ExperimentConfig,
    q: f64,
    k_delay: usize,
    out_dir: &Path,
) -> Result<SweepPointResult> {
    let label = format!("q{}_k{}", format_q(q), k_delay);
    let problem = build_instance(cfg, q, k_delay)?;
    let reference = solve_cached(&problem, REFERENCE_TOL, &out_dir.join("cache"))?;
    let f_star_ref = reference.deflated_f_star();

    let x0 = problem.sample_start_point(cfg.instance_seed.wrapping_add(0x9e37_79b9));
    let f0 = eval_objective(&problem, &x0)? - f_star_ref;
    let epsilon = cfg.epsilon.resolve(f0);
    let eta = cfg
        .policy
        .step_size(problem.mu, problem.mean_lipschitz, k_delay)?;
    let schedule = DelaySchedule::new(cfg.schedule_kind, k_delay, cfg.schedule_seed);
    let trace = run_piag(
        &problem,
        &schedule,
        &x0,
        eta,
        StopRule {
            max_iters: cfg.max_iters,
            epsilon,
        },
        f_star_ref,
    )?;

    let tol = cfg.check_tol * trace.f0().max(1.0);
    let mut report = CheckReport::default();
    report.push(check_descent(&trace, problem.mean_lipschitz, k_delay, tol)?);
    report.push(check_direction_lower_bound(
        &trace,
        problem.mu,
        problem.mean_lipschitz,
        k_delay,
        tol,
    )?);
    for entry in check_linear_rate(
        &trace,
        problem.mu,
        problem.condition_number,
        k_delay,
        eta,
        tol,
    )? {
        report.push(entry);
    }
    if cfg.policy == StepSizePolicy::CertifiedExact {
        report.push(check_iteration_budget(
            &trace,
            problem.condition_number,
            k_delay,
            epsilon,
        ));
    } else {
        report.push(CheckEntry {
            name: "iteration_budget".into(),
            verdict: Verdict::NotApplicable("requires the exact certified step size".into()),
            worst_residual: 0.0,
            worst_iteration: 0,
            tolerance: 0.0,
        });
    }

    write_atomic(&out_dir.join(format!("trace_{label}.csv")), &trace.to_csv())?;
    write_atomic(
        &out_dir.join(format!("report_{label}.txt")),
        &report.to_text(),
    )?;

    Ok(SweepPointResult {
        label,
        q: problem.condition_number,
        q_requested: q,
        k_delay,
        eta,
        measured_rate: measured_tail_rate(&trace),
        eq7_rate: 1.0 / (1.0 + eta * problem.mu / 16.0),
        eq8_rate: rate_condition_number(problem.condition_number, k_delay, 1),
        hit_iter: trace.hitting_iteration(epsilon),
        budget: iteration_budget(problem.condition_number, k_delay, trace.f0(), epsilon),
        report,
    })
}

/// Aggregate table, one row per sweep point. The column set is fixed;
/// consumers parse it by header.
pub fn rates_csv(points: &[SweepPointResult]) -> String {
    let mut out = String::from("Q,K,eta,measured_rate,eq7_rate,eq8_rate,hit_iter,budget\n");
    for p in points {
        let hit = p.hit_iter.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.q, p.k_delay, p.eta, p.measured_rate, p.eq7_rate, p.eq8_rate, hit, p.budget
        );
    }
    out
}

/// Least-squares slope of y against x.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Per-Q slope of log(hit_iter) against log(K+1) across the K sweep: the
/// scaling exponent of the observed iteration complexity in the staleness
/// bound. Requires at least two hitting runs at the same requested Q.
pub fn hit_slopes(points: &[SweepPointResult]) -> Vec<(f64, f64, usize)> {
    let mut qs: Vec<f64> = points.iter().map(|p| p.q_requested).collect();
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    qs.dedup();
    let mut out = Vec::new();
    for q in qs {
        let group: Vec<&SweepPointResult> = points
            .iter()
            .filter(|p| p.q_requested == q && p.hit_iter.is_some())
            .collect();
        if group.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = group
            .iter()
            .map(|p| ((p.k_delay + 1) as f64).ln())
            .collect();
        let ys: Vec<f64> = group
            .iter()
            .map(|p| (p.hit_iter.unwrap().max(1) as f64).ln())
            .collect();
        out.push((q, least_squares_slope(&xs, &ys), group.len()));
    }
    out
}

pub fn slopes_csv(points: &[SweepPointResult]) -> String {
    let mut out = String::from("Q,slope_log_hit_vs_log_k1,points\n");
    for (q, slope, n) in hit_slopes(points) {
        let _ = writeln!(out, "{q},{slope},{n}");
    }
    out
}

/// Writes the aggregate rate table and the companion slope table. With
/// fewer than two hitting runs per requested Q, the slope table carries
/// only its header.
pub fn emit_rate_table(points: &[SweepPointResult], out_dir: &Path) -> Result<()> {
    write_atomic(&out_dir.join("rates.csv"), &rates_csv(points))?;
    write_atomic(&out_dir.join("slopes.csv"), &slopes_csv(points))?;
    Ok(())
}

/// Runs the full sweep (cartesian product of the Q and K axes; empty axes
/// mean the base configuration), writes all outputs under `out_dir`, and
/// returns the aggregated outcome. Validation happens before anything is
/// written.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    // Resolve the axes before touching the filesystem.
    let q_axis: Vec<f64> = if cfg.sweep_q.is_empty() {
        vec![cfg.l / cfg.mu]
    } else {
        cfg.sweep_q.clone()
    };
    let k_axis: Vec<usize> = if cfg.sweep_k.is_empty() {
        vec![cfg.max_delay]
    } else {
        cfg.sweep_k.clone()
    };
    if cfg.instance_kind == InstanceKind::Quadratic && cfg.n == 1 && q_axis.iter().any(|&q| q > 1.0)
    {
        return Err(Error::Config(
            "quadratic instances with n = 1 only support Q = 1 (a single mean eigenvalue \
             cannot equal both mu and a larger L)"
                .into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut outcome = ExperimentOutcome::default();
    for &q in &q_axis {
        for &k in &k_axis {
            let point = run_point(cfg, q, k, out_dir)?;
            for e in &point.report.entries {
                outcome.checks_run += 1;
                match e.verdict {
                    Verdict::Fail => outcome.failures += 1,
                    Verdict::NotApplicable(_) => outcome.not_applicable += 1,
                    Verdict::Pass => {}
                }
            }
            outcome.points.push(point);
        }
    }
    emit_rate_table(&outcome.points, out_dir)?;
    Ok(outcome)
}

/// Output directory resolution for the CLI.
pub fn default_out_dir() -> PathBuf {
    PathBuf::from("piag-out")
}

impl ExperimentOutcome {
    /// One line per check per point, plus a summary tail.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            for e in &p.report.entries {
                let detail = match &e.verdict {
                    Verdict::NotApplicable(r) => format!(" ({r})"),
                    _ => format!(
                        " (worst {:.3e} @ {}, tol {:.1e})",
                        e.worst_residual, e.worst_iteration, e.tolerance
                    ),
                };
                let _ = writeln!(
                    out,
                    "[{}] {}: {}{detail}",
                    p.label,
                    e.name,
                    e.verdict.label()
                );
            }
        }
        let _ = writeln!(
            out,
            "checks: {} run, {} failed, {} not applicable across {} sweep points",
            self.checks_run,
            self.failures,
            self.not_applicable,
            self.points.len()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            m: 4,
            n: 4,
            mu: 1.0,
            l: 10.0,
            max_iters: 20_000,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_point_runs_and_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(outcome.points.len(), 1);
        assert!(outcome.passed(), "{}", outcome.render_summary());
        assert!(dir.path().join("rates.csv").exists());
        assert!(dir.path().join("slopes.csv").exists());
        assert!(dir.path().join("trace_q10_k0.csv").exists());
        assert!(dir.path().join("report_q10_k0.txt").exists());
    }

    #[test]
    fn sweep_produces_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.sweep_k = vec![0, 1, 2, 4, 8];
        cfg.sweep_q = vec![10.0];
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(outcome.points.len(), 5);
        assert!(outcome.passed(), "{}", outcome.render_summary());
        let rates = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
        assert_eq!(rates.lines().count(), 6); // header + 5 rows
        assert!(rates.starts_with("Q,K,eta,measured_rate,eq7_rate,eq8_rate,hit_iter,budget\n"));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.sweep_k = vec![0, 2];
        run_experiment(&cfg, dir1.path()).unwrap();
        run_experiment(&cfg, dir2.path()).unwrap();
        // Second run in the same directory exercises the reference cache.
        run_experiment(&cfg, dir1.path()).unwrap();
        for name in ["rates.csv", "slopes.csv", "trace_q10_k2.csv"] {
            let a = std::fs::read_to_string(dir1.path().join(name)).unwrap();
            let b = std::fs::read_to_string(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn invalid_config_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("results");
        let mut cfg = small_config();
        cfg.mu = 20.0; // mu > l
        assert!(run_experiment(&cfg, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn slope_math_is_exact_on_a_line() {
        assert!((least_squares_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slopes_need_two_points() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        assert!(hit_slopes(&outcome.points).is_empty());
        let slopes = std::fs::read_to_string(dir.path().join("slopes.csv")).unwrap();
        assert_eq!(slopes.lines().count(), 1); // header only
    }

    #[test]
    fn cyclic_sweep_still_groups_slopes_by_requested_q() {
        // Cyclic runs cap m at K + 1, so realized Q differs in the last
        // bits across the K axis; the slope grouping must not fragment.
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.schedule_kind = crate::solver::ScheduleKind::Cyclic;
        cfg.sweep_k = vec![1, 3, 7];
        cfg.sweep_q = vec![10.0];
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        assert!(outcome.passed(), "{}", outcome.render_summary());
        let slopes = hit_slopes(&outcome.points);
        assert_eq!(slopes.len(), 1, "expected one slope group: {slopes:?}");
        assert_eq!(slopes[0].2, 3);
    }

    #[test]
    fn logistic_sweep_targets_condition_number() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.instance_kind = crate::config::InstanceKind::Logistic;
        cfg.sweep_q = vec![1.0, 10.0];
        let outcome = run_experiment(&cfg, dir.path()).unwrap();
        assert!(outcome.passed(), "{}", outcome.render_summary());
        for (p, want) in outcome.points.iter().zip([1.0, 10.0]) {
            assert!((p.q - want).abs() <= 1e-9 * want, "Q = {} vs {want}", p.q);
        }
    }
}
