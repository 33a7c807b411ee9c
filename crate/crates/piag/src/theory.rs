//! Certified step sizes, rate-bound evaluators, and checkers that replay a
//! run trace against every inequality the method is guaranteed to satisfy.
//!
//! Every checker distinguishes three verdicts: pass, fail, and
//! not-applicable. The guarantees carry explicit step-size preconditions;
//! a trace produced outside them tells us nothing, and reporting that as
//! either pass or fail would misstate the theory.

use crate::error::Error;
use crate::solver::RunTrace;
use crate::Result;

/// Relative slack when comparing a step size against its applicability
/// bound, absorbing rounding in independently computed values.
const STEP_EQ_RTOL: f64 = 1e-12;

/// Largest step size certified to yield the linear rate, as a function of
/// the strong convexity modulus mu, the mean Lipschitz constant l, and the
/// staleness bound k_delay:
///
///   (16/mu) * ((1 + 1/(48 Q))^(1/(K+1)) - 1),   Q = l/mu.
///
/// Always at most 1/(3 l (K+1)) (Bernoulli bound); the returned value is
/// clamped to that cap so the comparison is exact in floating point. At
/// K = 0 the two coincide and the K = 0 branch evaluates the closed form
/// without the power round trip.
pub fn certified_step_size(mu: f64, l: f64, k_delay: usize) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite() && l.is_finite() && l >= mu) {
        return Err(Error::invalid(format!(
            "need finite constants with 0 < mu <= l, got mu={mu}, l={l}"
        )));
    }
    let q = l / mu;
    let root = if k_delay == 0 {
        1.0 / (48.0 * q)
    } else {
        let base = 1.0 + 1.0 / (48.0 * q);
        base.powf(1.0 / (k_delay as f64 + 1.0)) - 1.0
    };
    let eta = (16.0 / mu) * root;
    let cap = 1.0 / (3.0 * l * (k_delay as f64 + 1.0));
    assert!(
        eta <= cap * (1.0 + 1e-9),
        "certified step {eta} above its cap {cap}"
    );
    Ok(eta.min(cap))
}

/// Per-run contraction bound (1 + eta*mu/16)^(-k) on the suboptimality
/// ratio F_k / F_0, valid whenever eta is within the certified range.
pub fn rate_step_size(eta: f64, mu: f64, k: usize) -> f64 {
    (1.0 + eta * mu / 16.0).powi(-(k as i32))
}

/// The condition-number form of the bound, (1 - 1/(49 Q (K+1)))^k, valid
/// at exactly the certified step size.
pub fn rate_condition_number(q: f64, k_delay: usize, k: usize) -> f64 {
    (1.0 - 1.0 / (49.0 * q * (k_delay as f64 + 1.0))).powi(k as i32)
}

/// Worst-case iterations to reach suboptimality epsilon from f0 at the
/// certified step size: ceil(49 Q (K+1) ln(f0/epsilon)); 0 when f0 is
/// already at or below epsilon. An epsilon of exactly zero with f0 > 0
/// saturates the budget (no finite allowance reaches it).
pub fn iteration_budget(q: f64, k_delay: usize, f0: f64, epsilon: f64) -> u64 {
    assert!(
        epsilon >= 0.0 && f0.is_finite(),
        "need epsilon >= 0, finite f0"
    );
    if f0 <= epsilon {
        return 0;
    }
    (49.0 * q * (k_delay as f64 + 1.0) * (f0 / epsilon).ln()).ceil() as u64
}

/// How the run's step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizePolicy {
    /// The exact certified value.
    CertifiedExact,
    /// A fraction in (0, 1] of the certified value.
    CertifiedFraction(f64),
    /// The classical smoothness-based choice 1/(L (K+1)).
    ClassicalSmoothness,
}

impl StepSizePolicy {
    pub fn step_size(&self, mu: f64, l: f64, k_delay: usize) -> Result<f64> {
        match self {
            StepSizePolicy::CertifiedExact => certified_step_size(mu, l, k_delay),
            StepSizePolicy::CertifiedFraction(f) => {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(Error::invalid(format!(
                        "step size fraction must lie in (0, 1], got {f}"
                    )));
                }
                Ok(f * certified_step_size(mu, l, k_delay)?)
            }
            StepSizePolicy::ClassicalSmoothness => {
                if !(mu > 0.0 && l >= mu) {
                    return Err(Error::invalid("need 0 < mu <= l"));
                }
                Ok(1.0 / (l * (k_delay as f64 + 1.0)))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepSizePolicy::CertifiedExact => "certified-exact",
            StepSizePolicy::CertifiedFraction(_) => "certified-fraction",
            StepSizePolicy::ClassicalSmoothness => "classical",
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    /// The check's precondition is unmet; the reason says which one.
    NotApplicable(String),
}

impl Verdict {
    pub fn label(&self) -> &str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable(_) => "not-applicable",
        }
    }
}

/// One record of a check report: the worst signed violation observed, the
/// iteration it occurred at, and the tolerance it was compared against.
/// `worst_residual <= tolerance` if and only if the check holds.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    pub verdict: Verdict,
    pub worst_residual: f64,
    pub worst_iteration: usize,
    pub tolerance: f64,
}

impl CheckEntry {
    fn from_worst(name: &str, worst: f64, worst_iter: usize, tol: f64) -> Self {
        CheckEntry {
            name: name.to_string(),
            verdict: if worst <= tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            worst_residual: worst,
            worst_iteration: worst_iter,
            tolerance: tol,
        }
    }

    fn not_applicable(name: &str, reason: &str, tol: f64) -> Self {
        CheckEntry {
            name: name.to_string(),
            verdict: Verdict::NotApplicable(reason.to_string()),
            worst_residual: 0.0,
            worst_iteration: 0,
            tolerance: tol,
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

/// All checks run against one trace.
#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn push(&mut self, entry: CheckEntry) {
        self.entries.push(entry);
    }

    pub fn any_failed(&self) -> bool {
        self.entries.iter().any(|e| e.failed())
    }

    /// Tab-separated structured text, one record per check:
    /// name, verdict, worst_residual, worst_iteration, tolerance, reason.
    pub fn to_text(&self) -> String {
        let mut out =
            String::from("# name\tverdict\tworst_residual\tworst_iteration\ttolerance\treason\n");
        for e in &self.entries {
            let reason = match &e.verdict {
                Verdict::NotApplicable(r) => r.as_str(),
                _ => "-",
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.name,
                e.verdict.label(),
                e.worst_residual,
                e.worst_iteration,
                e.tolerance,
                reason
            ));
        }
        out
    }
}

/// Sum of d_norm_sq over the staleness window [max(k-K, 0), k-1].
fn history_window(d_sq: &[f64], k: usize, k_delay: usize) -> f64 {
    let lo = k.saturating_sub(k_delay);
    d_sq[lo..k].iter().sum()
}

fn applicability(eta: f64, l: f64, k_delay: usize) -> Option<String> {
    let bound = 1.0 / (l * (k_delay as f64 + 1.0));
    if eta <= bound * (1.0 + STEP_EQ_RTOL) {
        None
    } else {
        Some(format!(
            "step size {eta} exceeds the applicability bound {bound}"
        ))
    }
}

/// Per-step descent inequality along a trace:
///
///   F_{k+1} <= F_k - (eta/2) ||d_k||^2 + (eta^2 L / 2) * sum_{j=max(k-K,0)}^{k-1} ||d_j||^2
///
/// Applicable for eta <= 1/(L (K+1)).
pub fn check_descent(trace: &RunTrace, l: f64, k_delay: usize, tol: f64) -> Result<CheckEntry> {
    let name = "descent";
    let eta = require_eta(trace)?;
    if let Some(reason) = applicability(eta, l, k_delay) {
        return Ok(CheckEntry::not_applicable(name, &reason, tol));
    }
    let d_sq: Vec<f64> = trace.records.iter().map(|r| r.direction_norm_sq).collect();
    let f: Vec<f64> = trace.records.iter().map(|r| r.suboptimality).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_iter = 0;
    for k in 0..f.len().saturating_sub(1) {
        let window = history_window(&d_sq, k, k_delay);
        let bound = f[k] - 0.5 * eta * d_sq[k] + 0.5 * eta * eta * l * window;
        let violation = f[k + 1] - bound;
        if violation > worst {
            worst = violation;
            worst_iter = k;
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(CheckEntry::from_worst(name, worst, worst_iter, tol))
}

/// Direction-dominates-the-gap inequality along a trace:
///
///   -||d_k||^2 <= -(mu/4) F_{k+1} + eta L * sum_{j=max(k-K,0)}^{k-1} ||d_j||^2
///
/// Applicable for eta <= 1/(L (K+1)).
pub fn check_direction_lower_bound(
    trace: &RunTrace,
    mu: f64,
    l: f64,
    k_delay: usize,
    tol: f64,
) -> Result<CheckEntry> {
    let name = "direction_lower_bound";
    let eta = require_eta(trace)?;
    if let Some(reason) = applicability(eta, l, k_delay) {
        return Ok(CheckEntry::not_applicable(name, &reason, tol));
    }
    let d_sq: Vec<f64> = trace.records.iter().map(|r| r.direction_norm_sq).collect();
    let f: Vec<f64> = trace.records.iter().map(|r| r.suboptimality).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_iter = 0;
    for k in 0..f.len().saturating_sub(1) {
        let window = history_window(&d_sq, k, k_delay);
        let rhs = -(mu / 4.0) * f[k + 1] + eta * l * window;
        let violation = -d_sq[k] - rhs;
        if violation > worst {
            worst = violation;
            worst_iter = k;
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    Ok(CheckEntry::from_worst(name, worst, worst_iter, tol))
}

fn require_eta(trace: &RunTrace) -> Result<f64> {
    if trace.records.is_empty() {
        return Err(Error::invalid("trace has no records"));
    }
    Ok(trace.records[0].eta)
}

/// Both linear-rate bounds along a trace. The step-size form applies to
/// any eta within the certified range; the condition-number form only at
/// exactly the certified value.
pub fn check_linear_rate(
    trace: &RunTrace,
    mu: f64,
    q: f64,
    k_delay: usize,
    eta: f64,
    tol: f64,
) -> Result<Vec<CheckEntry>> {
    let trace_eta = require_eta(trace)?;
    if (eta - trace_eta).abs() > STEP_EQ_RTOL * trace_eta {
        return Err(Error::invalid(format!(
            "step size {eta} does not match the trace's recorded {trace_eta}"
        )));
    }
    let l = mu * q;
    let certified = certified_step_size(mu, l, k_delay)?;
    let mut entries = Vec::with_capacity(2);
    if eta > certified * (1.0 + STEP_EQ_RTOL) {
        let reason = format!("step size {eta} exceeds the certified bound {certified}");
        entries.push(CheckEntry::not_applicable(
            "rate_step_size_bound",
            &reason,
            tol,
        ));
        entries.push(CheckEntry::not_applicable(
            "rate_condition_number_bound",
            &reason,
            tol,
        ));
        return Ok(entries);
    }
    let f0 = trace.f0();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_iter = 0;
    for r in &trace.records {
        let violation = r.suboptimality - rate_step_size(eta, mu, r.k) * f0;
        if violation > worst {
            worst = violation;
            worst_iter = r.k;
        }
    }
    entries.push(CheckEntry::from_worst(
        "rate_step_size_bound",
        worst,
        worst_iter,
        tol,
    ));

    let exact = (eta - certified).abs() <= STEP_EQ_RTOL * certified;
    if exact {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_iter = 0;
        for r in &trace.records {
            let violation = r.suboptimality - rate_condition_number(q, k_delay, r.k) * f0;
            if violation > worst {
                worst = violation;
                worst_iter = r.k;
            }
        }
        entries.push(CheckEntry::from_worst(
            "rate_condition_number_bound",
            worst,
            worst_iter,
            tol,
        ));
    } else {
        entries.push(CheckEntry::not_applicable(
            "rate_condition_number_bound",
            "requires exactly the certified step size",
            tol,
        ));
    }
    Ok(entries)
}

/// Hitting-time check against the worst-case iteration budget. The trace
/// must have been produced at the exact certified step size (the caller's
/// responsibility). One-sided: early hits are fine, late hits fail, and a
/// run whose iteration allowance never covered the budget is inconclusive.
pub fn check_iteration_budget(
    trace: &RunTrace,
    q: f64,
    k_delay: usize,
    epsilon: f64,
) -> CheckEntry {
    let name = "iteration_budget";
    let budget = iteration_budget(q, k_delay, trace.f0(), epsilon);
    match trace.hitting_iteration(epsilon) {
        Some(hit) => CheckEntry {
            name: name.to_string(),
            verdict: if (hit as u64) <= budget {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            worst_residual: hit as f64 - budget as f64,
            worst_iteration: hit,
            tolerance: 0.0,
        },
        None => {
            if (trace.iterations as u64) < budget {
                CheckEntry::not_applicable(
                    name,
                    "inconclusive (budget not exhausted within the iteration allowance)",
                    0.0,
                )
            } else {
                CheckEntry {
                    name: name.to_string(),
                    verdict: Verdict::Fail,
                    worst_residual: trace.iterations as f64 - budget as f64,
                    worst_iteration: trace.iterations,
                    tolerance: 0.0,
                }
            }
        }
    }
}

/// All the symbols of the perturbed-contraction lemma: sequences Z, Y and
/// constants alpha > 1, beta >= 0, gamma >= 0 with a history window of
/// length `window` + 1.
#[derive(Debug, Clone)]
pub struct ContractionSequence {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub window: usize,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl ContractionSequence {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!(
                "contraction factor must exceed 1, got {}",
                self.alpha
            )));
        }
        if self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::invalid("beta and gamma must be nonnegative"));
        }
        if self.z.is_empty() {
            return Err(Error::invalid("Z sequence is empty"));
        }
        if self.y.len() + 1 < self.z.len() {
            return Err(Error::invalid(format!(
                "need at least {} Y values for {} Z values",
                self.z.len() - 1,
                self.z.len()
            )));
        }
        if self.z.iter().chain(self.y.iter()).any(|v| *v < 0.0) {
            return Err(Error::invalid("Z and Y must be nonnegative"));
        }
        Ok(())
    }

    /// Whether the constants satisfy gamma (alpha^(A+1) - 1) <= beta (alpha - 1).
    pub fn decay_condition_holds(&self) -> bool {
        self.gamma * (self.alpha.powi(self.window as i32 + 1) - 1.0)
            <= self.beta * (self.alpha - 1.0)
    }
}

/// Checks the perturbed-contraction lemma on concrete sequences:
/// first verifies the recursion
///
///   alpha Z_{k+1} <= Z_k - beta Y_k + gamma * sum_{j=k-A}^{k} Y_j
///
/// (Y_j = 0 for j < 0) as a precondition, then — when the decay condition
/// gamma (alpha^(A+1) - 1) <= beta (alpha - 1) holds — asserts the
/// geometric conclusion Z_k <= alpha^(-k) Z_0. As everywhere else, `tol`
/// is scaled by the magnitude of the terms it guards: max(1, Z_k) per
/// recursion step and max(1, Z_0) for the conclusion.
pub fn check_perturbed_contraction(seq: &ContractionSequence, tol: f64) -> Result<CheckEntry> {
    let name = "perturbed_contraction";
    seq.validate()?;
    // Precondition: the recursion itself.
    for k in 0..seq.z.len() - 1 {
        let lo = k.saturating_sub(seq.window);
        let perturbation: f64 = seq.y[lo..=k].iter().sum();
        let rhs = seq.z[k] - seq.beta * seq.y[k] + seq.gamma * perturbation;
        if seq.alpha * seq.z[k + 1] > rhs + tol * seq.z[k].max(1.0) {
            return Ok(CheckEntry::not_applicable(
                name,
                &format!(
                    "precondition violated: recursion fails at k = {k} by {}",
                    seq.alpha * seq.z[k + 1] - rhs
                ),
                tol,
            ));
        }
    }
    if !seq.decay_condition_holds() {
        return Ok(CheckEntry::not_applicable(name, "condition not met", tol));
    }
    let scaled_tol = tol * seq.z[0].max(1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_iter = 0;
    for (k, &zk) in seq.z.iter().enumerate() {
        let violation = zk - seq.alpha.powi(-(k as i32)) * seq.z[0];
        if violation > worst {
            worst = violation;
            worst_iter = k;
        }
    }
    Ok(CheckEntry::from_worst(name, worst, worst_iter, scaled_tol))
}
