//! Experiment configuration: a flat `key = value` text schema plus
//! validation. Unknown keys are rejected so typos fail loudly.

use crate::error::Error;
use crate::problems::Regularizer;
use crate::solver::ScheduleKind;
use crate::theory::StepSizePolicy;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Quadratic,
    Logistic,
}

impl InstanceKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(InstanceKind::Quadratic),
            "logistic" => Ok(InstanceKind::Logistic),
            other => Err(Error::Config(format!("unknown instance.kind {other:?}"))),
        }
    }
}

/// Suboptimality target for stopping: absolute, or a fraction of the
/// run's own F_0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Absolute(f64),
    RelativeToStart(f64),
}

impl EpsilonSpec {
    pub fn resolve(&self, f0: f64) -> f64 {
        match self {
            EpsilonSpec::Absolute(e) => *e,
            EpsilonSpec::RelativeToStart(r) => r * f0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub instance_kind: InstanceKind,
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    pub l: f64,
    pub instance_seed: u64,
    pub regularizer: Regularizer,
    pub schedule_kind: ScheduleKind,
    pub max_delay: usize,
    pub schedule_seed: u64,
    pub policy: StepSizePolicy,
    pub max_iters: usize,
    pub epsilon: EpsilonSpec,
    /// Sweep axes; empty means a single run at the base configuration.
    pub sweep_k: Vec<usize>,
    pub sweep_q: Vec<f64>,
    /// Check tolerance scale; the effective tolerance is this times
    /// max(1, F_0).
    pub check_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instance_kind: InstanceKind::Quadratic,
            m: 4,
            n: 8,
            mu: 1.0,
            l: 10.0,
            instance_seed: 1,
            regularizer: Regularizer::Zero,
            schedule_kind: ScheduleKind::FullRefresh,
            max_delay: 0,
            schedule_seed: 2,
            policy: StepSizePolicy::CertifiedExact,
            max_iters: 200_000,
            epsilon: EpsilonSpec::RelativeToStart(1e-8),
            sweep_k: Vec::new(),
            sweep_q: Vec::new(),
            check_tol: 1e-9,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut reg_kind = String::from("zero");
        let mut lambda1 = 0.0f64;
        let mut lambda2 = 0.0f64;
        let mut box_lower = -1.0f64;
        let mut box_upper = 1.0f64;
        let mut policy_kind = String::from("certified-exact");
        let mut policy_fraction = 0.5f64;
        let mut epsilon_abs: Option<f64> = None;
        let mut epsilon_rel: Option<f64> = None;
        let mut seen = std::collections::BTreeSet::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key {key:?}")));
            }
            match key {
                "instance.kind" => cfg.instance_kind = InstanceKind::parse(value)?,
                "instance.m" => cfg.m = parse_num(key, value)?,
                "instance.n" => cfg.n = parse_num(key, value)?,
                "instance.mu" => cfg.mu = parse_num(key, value)?,
                "instance.l" => cfg.l = parse_num(key, value)?,
                "instance.seed" => cfg.instance_seed = parse_num(key, value)?,
                "regularizer.kind" => reg_kind = value.to_string(),
                "regularizer.lambda1" => lambda1 = parse_num(key, value)?,
                "regularizer.lambda2" => lambda2 = parse_num(key, value)?,
                "regularizer.lower" => box_lower = parse_num(key, value)?,
                "regularizer.upper" => box_upper = parse_num(key, value)?,
                "schedule.kind" => cfg.schedule_kind = ScheduleKind::parse(value)?,
                "schedule.k" => cfg.max_delay = parse_num(key, value)?,
                "schedule.seed" => cfg.schedule_seed = parse_num(key, value)?,
                "policy.kind" => policy_kind = value.to_string(),
                "policy.fraction" => policy_fraction = parse_num(key, value)?,
                "stop.max_iters" => cfg.max_iters = parse_num(key, value)?,
                "stop.epsilon" => epsilon_abs = Some(parse_num(key, value)?),
                "stop.epsilon_rel" => epsilon_rel = Some(parse_num(key, value)?),
                "sweep.k_values" => {
                    cfg.sweep_k = value
                        .split(',')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| parse_num("sweep.k_values", p.trim()))
                        .collect::<Result<_>>()?;
                }
                "sweep.q_values" => {
                    cfg.sweep_q = value
                        .split(',')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| parse_num("sweep.q_values", p.trim()))
                        .collect::<Result<_>>()?;
                }
                "tol.check" => cfg.check_tol = parse_num(key, value)?,
                other => return Err(Error::Config(format!("unknown config key {other:?}"))),
            }
        }

        cfg.regularizer = match reg_kind.as_str() {
            "zero" => Regularizer::Zero,
            "l1" => Regularizer::L1 { lambda: lambda1 },
            "squared-l2" => Regularizer::SquaredL2 { lambda: lambda2 },
            "box" => Regularizer::BoxIndicator {
                lower: box_lower,
                upper: box_upper,
            },
            "elastic-net" => Regularizer::ElasticNet { lambda1, lambda2 },
            other => return Err(Error::Config(format!("unknown regularizer.kind {other:?}"))),
        };
        cfg.policy = match policy_kind.as_str() {
            "certified-exact" => StepSizePolicy::CertifiedExact,
            "certified-fraction" => StepSizePolicy::CertifiedFraction(policy_fraction),
            "classical" => StepSizePolicy::ClassicalSmoothness,
            other => return Err(Error::Config(format!("unknown policy.kind {other:?}"))),
        };
        match (epsilon_abs, epsilon_rel) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set stop.epsilon or stop.epsilon_rel, not both".into(),
                ))
            }
            (Some(e), None) => cfg.epsilon = EpsilonSpec::Absolute(e),
            (None, Some(r)) => cfg.epsilon = EpsilonSpec::RelativeToStart(r),
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config(
                "instance.m and instance.n must be positive".into(),
            ));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!(
                "instance.mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.l.is_finite() && self.l >= self.mu) {
            return Err(Error::Config(format!(
                "instance.l must be at least instance.mu, got l = {}, mu = {}",
                self.l, self.mu
            )));
        }
        self.regularizer
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.max_iters == 0 {
            return Err(Error::Config("stop.max_iters must be positive".into()));
        }
        let eps_value = match self.epsilon {
            EpsilonSpec::Absolute(e) => e,
            EpsilonSpec::RelativeToStart(r) => r,
        };
        if !(eps_value > 0.0 && eps_value.is_finite()) {
            return Err(Error::Config("stopping epsilon must be positive".into()));
        }
        if !(self.check_tol > 0.0 && self.check_tol.is_finite()) {
            return Err(Error::Config("tol.check must be positive".into()));
        }
        for &q in &self.sweep_q {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(Error::Config(format!(
                    "sweep Q values must be >= 1, got {q}"
                )));
            }
        }
        if let StepSizePolicy::CertifiedFraction(f) = self.policy {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "policy.fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }
}
