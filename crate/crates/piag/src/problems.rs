//! Problem definitions: smooth component functions, regularizers, and
//! generators for strongly convex test instances whose constants (per
//! component Lipschitz bounds L_i, mean bound L, strong convexity mu, and
//! condition number Q = L/mu) are known exactly by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::vecmath::{all_finite, norm_sq};
use crate::Result;

/// One smooth component f_i of the finite sum f = (1/m) sum_i f_i.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentFunction {
    /// f_i(x) = 1/2 sum_j diag_j (x_j - center_j)^2
    DiagonalQuadratic { diag: Vec<f64>, center: Vec<f64> },
    /// f_i(x) = ln(1 + exp(-label * <row, x>)) + (ridge/2) ||x||^2
    RegularizedLogistic {
        row: Vec<f64>,
        label: f64,
        ridge: f64,
    },
}

impl ComponentFunction {
    pub fn dimension(&self) -> usize {
        match self {
            ComponentFunction::DiagonalQuadratic { diag, .. } => diag.len(),
            ComponentFunction::RegularizedLogistic { row, .. } => row.len(),
        }
    }

    /// Gradient Lipschitz constant of this component. Tight for the
    /// quadratic (max curvature); for the logistic loss the sigmoid slope
    /// is at most 1/4, giving ridge + ||row||^2 / 4.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ComponentFunction::DiagonalQuadratic { diag, .. } => {
                diag.iter().cloned().fold(0.0, f64::max)
            }
            ComponentFunction::RegularizedLogistic { row, ridge, .. } => ridge + norm_sq(row) / 4.0,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ComponentFunction::DiagonalQuadratic { diag, center } => {
                let mut acc = 0.0;
                for j in 0..diag.len() {
                    let d = x[j] - center[j];
                    acc += 0.5 * diag[j] * d * d;
                }
                acc
            }
            ComponentFunction::RegularizedLogistic { row, label, ridge } => {
                let margin: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                softplus(-label * margin) + 0.5 * ridge * norm_sq(x)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ComponentFunction::DiagonalQuadratic { diag, center } => (0..diag.len())
                .map(|j| diag[j] * (x[j] - center[j]))
                .collect(),
            ComponentFunction::RegularizedLogistic { row, label, ridge } => {
                let margin: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                let w = -label * sigmoid(-label * margin);
                (0..row.len()).map(|j| w * row[j] + ridge * x[j]).collect()
            }
        }
    }
}

/// ln(1 + e^t), evaluated without overflow for large |t|.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// 1 / (1 + e^{-t}), evaluated without overflow for large |t|.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// The non-smooth term r in F = f + r. Every kind is proper, closed,
/// convex, and subdifferentiable on its effective domain.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// lambda * ||x||_1
    L1 {
        lambda: f64,
    },
    /// (lambda/2) * ||x||^2
    SquaredL2 {
        lambda: f64,
    },
    /// Indicator of the box [lower, upper]^n (0 inside, +inf outside).
    BoxIndicator {
        lower: f64,
        upper: f64,
    },
    /// lambda1 * ||x||_1 + (lambda2/2) * ||x||^2
    ElasticNet {
        lambda1: f64,
        lambda2: f64,
    },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match self {
            Regularizer::Zero => Ok(()),
            Regularizer::L1 { lambda } | Regularizer::SquaredL2 { lambda } => {
                if *lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "regularizer weight must be a finite nonnegative number, got {lambda}"
                    )))
                }
            }
            Regularizer::BoxIndicator { lower, upper } => {
                if lower.is_finite() && upper.is_finite() && lower <= upper {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "box bounds must be finite with lower <= upper, got [{lower}, {upper}]"
                    )))
                }
            }
            Regularizer::ElasticNet { lambda1, lambda2 } => {
                if *lambda1 >= 0.0 && *lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()
                {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "elastic-net weights must be finite and nonnegative, got ({lambda1}, {lambda2})"
                    )))
                }
            }
        }
    }
}

/// F(x) = f(x) + r(x) with f = (1/m) sum f_i, together with the constants
/// the convergence theory needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeProblem {
    pub components: Vec<ComponentFunction>,
    pub regularizer: Regularizer,
    pub dimension: usize,
    /// Strong convexity modulus of f.
    pub mu: f64,
    /// Mean of the component Lipschitz constants, (1/m) sum L_i.
    pub mean_lipschitz: f64,
    /// Condition number Q = L / mu (>= 1).
    pub condition_number: f64,
    /// Seed the instance was generated from (kept for serialization).
    pub seed: u64,
}

impl CompositeProblem {
    /// Assembles a problem, computing L and Q from the components and
    /// validating the basic shape constraints.
    pub fn new(
        components: Vec<ComponentFunction>,
        regularizer: Regularizer,
        mu: f64,
        seed: u64,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a problem needs at least one component"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "strong convexity modulus must be positive and finite, got {mu}"
            )));
        }
        regularizer.validate()?;
        let dimension = components[0].dimension();
        if dimension == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        for c in &components {
            if c.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    got: c.dimension(),
                });
            }
        }
        let m = components.len() as f64;
        let mean_lipschitz = components.iter().map(|c| c.lipschitz()).sum::<f64>() / m;
        // Allow a hair of rounding slack in the mean before declaring Q < 1.
        if mean_lipschitz < mu * (1.0 - 1e-12) {
            return Err(Error::invalid(format!(
                "mean Lipschitz constant {mean_lipschitz} is below mu = {mu} (Q < 1)"
            )));
        }
        let condition_number = mean_lipschitz / mu;
        Ok(CompositeProblem {
            components,
            regularizer,
            dimension,
            mu,
            mean_lipschitz,
            condition_number,
            seed,
        })
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dimension {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            })
        }
    }
}

/// f(x) = (1/m) sum_i f_i(x).
pub fn eval_f(problem: &CompositeProblem, x: &[f64]) -> Result<f64> {
    problem.check_dimension(x)?;
    let m = problem.num_components() as f64;
    Ok(problem.components.iter().map(|c| c.value(x)).sum::<f64>() / m)
}

/// Gradient of the i-th component (0-based index).
pub fn eval_grad_component(problem: &CompositeProblem, i: usize, x: &[f64]) -> Result<Vec<f64>> {
    problem.check_dimension(x)?;
    let c = problem
        .components
        .get(i)
        .ok_or_else(|| Error::invalid(format!("component index {i} out of range")))?;
    Ok(c.gradient(x))
}

/// Full gradient of the mean, (1/m) sum_i grad f_i(x).
pub fn eval_grad_mean(problem: &CompositeProblem, x: &[f64]) -> Result<Vec<f64>> {
    problem.check_dimension(x)?;
    let mut acc = vec![0.0; problem.dimension];
    for c in &problem.components {
        let g = c.gradient(x);
        for j in 0..acc.len() {
            acc[j] += g[j];
        }
    }
    let m = problem.num_components() as f64;
    for v in &mut acc {
        *v /= m;
    }
    Ok(acc)
}

/// F(x) = f(x) + r(x); +inf outside a box indicator's box.
pub fn eval_objective(problem: &CompositeProblem, x: &[f64]) -> Result<f64> {
    Ok(eval_f(problem, x)? + crate::prox::eval_reg(&problem.regularizer, x))
}

/// Draws m values with mean exactly zero and entries in [-2, 2].
fn zero_mean_spread(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.0];
    }
    let mut raw: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = raw.iter().sum::<f64>() / m as f64;
    for v in &mut raw {
        *v -= mean;
    }
    raw
}

/// One final correction so the sample mean lands on the target exactly
/// (up to one rounding).
fn recentre(values: &mut [f64], target_mean: f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let shift = target_mean - mean;
    for v in values {
        *v += shift;
    }
}

/// Diagonal-quadratic instance with mean Lipschitz constant l_target and
/// smallest mean-Hessian eigenvalue exactly mu. Coordinate 0 carries the
/// minimum curvature, coordinate n-1 the maximum; per-component L_i are
/// computed from the stored diagonals. Deterministic in the seed.
pub fn make_quadratic_instance(
    m: usize,
    n: usize,
    mu: f64,
    l_target: f64,
    seed: u64,
) -> Result<CompositeProblem> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and n must be positive"));
    }
    if !(mu > 0.0 && mu.is_finite() && l_target.is_finite()) {
        return Err(Error::invalid(format!(
            "need finite constants with mu > 0, got mu={mu}, L={l_target}"
        )));
    }
    if mu > l_target {
        return Err(Error::invalid(format!(
            "mu = {mu} exceeds the target mean Lipschitz constant {l_target}"
        )));
    }
    if n == 1 && mu < l_target {
        return Err(Error::invalid(
            "n = 1 forces L = mu: the single mean eigenvalue cannot equal mu while the mean of \
             component maxima equals a larger L",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Coordinate 0: per-component curvatures with mean exactly mu.
    let spread_min = 0.25 * (l_target - mu).min(mu);
    let mut lows: Vec<f64> = zero_mean_spread(&mut rng, m)
        .into_iter()
        .map(|v| mu + spread_min * v)
        .collect();
    recentre(&mut lows, mu);

    // Middle coordinates: anything in [mu, (mu + L)/2].
    let mid_hi = 0.5 * (mu + l_target);
    let mut mids: Vec<Vec<f64>> = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n.saturating_sub(2))
            .map(|_| rng.gen_range(mu..=mid_hi))
            .collect();
        mids.push(row);
    }

    // Coordinate n-1: per-component maxima with mean exactly l_target and
    // every value at least (mu + L)/2, so it dominates the other entries.
    let spread_max = 0.25 * (l_target - mu);
    let mut highs: Vec<f64> = zero_mean_spread(&mut rng, m)
        .into_iter()
        .map(|v| l_target + spread_max * v)
        .collect();
    recentre(&mut highs, l_target);

    let mut components = Vec::with_capacity(m);
    for i in 0..m {
        let mut diag = Vec::with_capacity(n);
        diag.push(lows[i]);
        if n >= 2 {
            diag.extend_from_slice(&mids[i]);
            diag.push(highs[i]);
        }
        let center: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        components.push(ComponentFunction::DiagonalQuadratic { diag, center });
    }
    CompositeProblem::new(components, Regularizer::Zero, mu, seed)
}

/// Logistic instance: each component is a single-row logistic loss plus a
/// (mu/2)||x||^2 ridge, so f is exactly mu-strongly convex and
/// L_i = mu + ||row_i||^2 / 4.
pub fn make_logistic_instance(m: usize, n: usize, mu: f64, seed: u64) -> Result<CompositeProblem> {
    let rows = draw_logistic_rows(m, n, mu, seed)?;
    build_logistic(rows, mu, seed)
}

/// Logistic instance rescaled so the condition number L/mu lands on
/// q_target exactly (q_target = 1 zeroes the data rows, leaving only the
/// ridge). Useful for condition-number sweeps.
pub fn make_logistic_instance_with_condition(
    m: usize,
    n: usize,
    mu: f64,
    q_target: f64,
    seed: u64,
) -> Result<CompositeProblem> {
    if !(q_target >= 1.0 && q_target.is_finite()) {
        return Err(Error::invalid(format!(
            "condition number target must be >= 1, got {q_target}"
        )));
    }
    let mut rows = draw_logistic_rows(m, n, mu, seed)?;
    let mean_row_norm_sq = rows.iter().map(|(row, _)| norm_sq(row)).sum::<f64>() / m as f64;
    let scale = if q_target == 1.0 {
        0.0
    } else {
        if mean_row_norm_sq == 0.0 {
            return Err(Error::invalid(
                "cannot rescale all-zero data rows to a condition number above 1",
            ));
        }
        (4.0 * mu * (q_target - 1.0) / mean_row_norm_sq).sqrt()
    };
    for (row, _) in &mut rows {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    build_logistic(rows, mu, seed)
}

fn draw_logistic_rows(m: usize, n: usize, mu: f64, seed: u64) -> Result<Vec<(Vec<f64>, f64)>> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("m and n must be positive"));
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::invalid(format!("mu must be positive, got {mu}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        rows.push((row, label));
    }
    Ok(rows)
}

fn build_logistic(rows: Vec<(Vec<f64>, f64)>, mu: f64, seed: u64) -> Result<CompositeProblem> {
    let components = rows
        .into_iter()
        .map(|(row, label)| ComponentFunction::RegularizedLogistic {
            row,
            label,
            ridge: mu,
        })
        .collect();
    CompositeProblem::new(components, Regularizer::Zero, mu, seed)
}

// ---------------------------------------------------------------------------
// Flat text serialization (key = value lines), round-trips bit for bit.
// ---------------------------------------------------------------------------

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad float list entry: {p:?}")))
        })
        .collect()
}

impl CompositeProblem {
    /// Serializes the instance to the documented flat `key = value` text
    /// format. Floats use the shortest round-trip representation, so
    /// `from_text(to_text(p)) == p` bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kind = match self.components[0] {
            ComponentFunction::DiagonalQuadratic { .. } => "quadratic",
            ComponentFunction::RegularizedLogistic { .. } => "logistic",
        };
        out.push_str(&format!("kind = {kind}\n"));
        out.push_str(&format!("m = {}\n", self.num_components()));
        out.push_str(&format!("n = {}\n", self.dimension));
        out.push_str(&format!("mu = {}\n", self.mu));
        out.push_str(&format!("l = {}\n", self.mean_lipschitz));
        out.push_str(&format!("seed = {}\n", self.seed));
        match &self.regularizer {
            Regularizer::Zero => out.push_str("reg.kind = zero\n"),
            Regularizer::L1 { lambda } => {
                out.push_str("reg.kind = l1\n");
                out.push_str(&format!("reg.lambda1 = {lambda}\n"));
            }
            Regularizer::SquaredL2 { lambda } => {
                out.push_str("reg.kind = squared-l2\n");
                out.push_str(&format!("reg.lambda2 = {lambda}\n"));
            }
            Regularizer::BoxIndicator { lower, upper } => {
                out.push_str("reg.kind = box\n");
                out.push_str(&format!("reg.lower = {lower}\n"));
                out.push_str(&format!("reg.upper = {upper}\n"));
            }
            Regularizer::ElasticNet { lambda1, lambda2 } => {
                out.push_str("reg.kind = elastic-net\n");
                out.push_str(&format!("reg.lambda1 = {lambda1}\n"));
                out.push_str(&format!("reg.lambda2 = {lambda2}\n"));
            }
        }
        for (i, c) in self.components.iter().enumerate() {
            match c {
                ComponentFunction::DiagonalQuadratic { diag, center } => {
                    out.push_str(&format!("comp.{i}.diag = {}\n", join_floats(diag)));
                    out.push_str(&format!("comp.{i}.center = {}\n", join_floats(center)));
                }
                ComponentFunction::RegularizedLogistic { row, label, ridge } => {
                    out.push_str(&format!("comp.{i}.row = {}\n", join_floats(row)));
                    out.push_str(&format!("comp.{i}.label = {label}\n"));
                    out.push_str(&format!("comp.{i}.ridge = {ridge}\n"));
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::invalid(format!("duplicate key {key:?}")));
            }
        }
        let get = |k: &str| -> Result<&String> {
            map.get(k)
                .ok_or_else(|| Error::invalid(format!("missing key {k:?}")))
        };
        let kind = get("kind")?.clone();
        let m: usize = get("m")?
            .parse()
            .map_err(|_| Error::invalid("bad value for m"))?;
        let mu: f64 = get("mu")?
            .parse()
            .map_err(|_| Error::invalid("bad value for mu"))?;
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| Error::invalid("bad value for seed"))?;
        let reg = match get("reg.kind")?.as_str() {
            "zero" => Regularizer::Zero,
            "l1" => Regularizer::L1 {
                lambda: get("reg.lambda1")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.lambda1"))?,
            },
            "squared-l2" => Regularizer::SquaredL2 {
                lambda: get("reg.lambda2")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.lambda2"))?,
            },
            "box" => Regularizer::BoxIndicator {
                lower: get("reg.lower")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.lower"))?,
                upper: get("reg.upper")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.upper"))?,
            },
            "elastic-net" => Regularizer::ElasticNet {
                lambda1: get("reg.lambda1")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.lambda1"))?,
                lambda2: get("reg.lambda2")?
                    .parse()
                    .map_err(|_| Error::invalid("bad reg.lambda2"))?,
            },
            other => return Err(Error::invalid(format!("unknown reg.kind {other:?}"))),
        };
        let mut components = Vec::with_capacity(m);
        for i in 0..m {
            match kind.as_str() {
                "quadratic" => {
                    let diag = parse_floats(get(&format!("comp.{i}.diag"))?)?;
                    let center = parse_floats(get(&format!("comp.{i}.center"))?)?;
                    if diag.len() != center.len() {
                        return Err(Error::invalid(format!(
                            "component {i}: diag and center lengths differ"
                        )));
                    }
                    components.push(ComponentFunction::DiagonalQuadratic { diag, center });
                }
                "logistic" => {
                    let row = parse_floats(get(&format!("comp.{i}.row"))?)?;
                    let label: f64 = get(&format!("comp.{i}.label"))?
                        .parse()
                        .map_err(|_| Error::invalid("bad component label"))?;
                    let ridge: f64 = get(&format!("comp.{i}.ridge"))?
                        .parse()
                        .map_err(|_| Error::invalid("bad component ridge"))?;
                    components.push(ComponentFunction::RegularizedLogistic { row, label, ridge });
                }
                other => return Err(Error::invalid(format!("unknown kind {other:?}"))),
            }
        }
        let problem = CompositeProblem::new(components, reg, mu, seed)?;
        let n: usize = get("n")?
            .parse()
            .map_err(|_| Error::invalid("bad value for n"))?;
        if problem.dimension != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: problem.dimension,
            });
        }
        Ok(problem)
    }

    /// Start point for experiments: seeded draw in [-1, 1]^n, clamped into
    /// the box when the regularizer is a box indicator (F must be finite
    /// at the start point).
    pub fn sample_start_point(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x0: Vec<f64> = (0..self.dimension)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        if let Regularizer::BoxIndicator { lower, upper } = self.regularizer {
            for v in &mut x0 {
                *v = v.clamp(lower, upper);
            }
        }
        x0
    }
}

/// Sample a random point in [-scale, scale]^n.
pub fn random_point(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn validate_finite(x: &[f64], what: &str) -> Result<()> {
    if all_finite(x) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} contains non-finite values")))
    }
}
