//! The PIAG iteration engine: a gradient table with bounded staleness,
//! refresh schedules, the proximal update, and per-iteration trace
//! recording.
//!
//! Each iteration k refreshes the scheduled components' gradients at the
//! current point BEFORE forming the aggregated gradient, then takes
//! x_{k+1} = prox(r, eta, x_k - eta * g_k). The recovered direction
//! d_k = (x_{k+1} - x_k)/eta equals -g_k - h_{k+1} through the prox
//! optimality identity.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::problems::{eval_objective, validate_finite, CompositeProblem};
use crate::prox::prox;
use crate::vecmath::norm_sq;
use crate::Result;

/// Rebuild the running sum from scratch after this many component
/// refreshes, bounding floating-point drift.
const REBUILD_PERIOD: usize = 1000;

/// The m stored component gradients, the iteration each was sampled at,
/// and their running sum (maintained incrementally).
#[derive(Debug, Clone)]
pub struct GradientTable {
    stored: Vec<Vec<f64>>,
    sampled_at: Vec<usize>,
    running_sum: Vec<f64>,
    updates_since_rebuild: usize,
}

impl GradientTable {
    /// Evaluates all m gradients at the start point; every sample
    /// iteration starts at 0.
    pub fn init(problem: &CompositeProblem, x0: &[f64]) -> Result<Self> {
        if x0.len() != problem.dimension {
            return Err(Error::DimensionMismatch {
                expected: problem.dimension,
                got: x0.len(),
            });
        }
        let stored: Vec<Vec<f64>> = problem.components.iter().map(|c| c.gradient(x0)).collect();
        let mut running_sum = vec![0.0; problem.dimension];
        for g in &stored {
            for j in 0..running_sum.len() {
                running_sum[j] += g[j];
            }
        }
        Ok(GradientTable {
            sampled_at: vec![0; stored.len()],
            stored,
            running_sum,
            updates_since_rebuild: 0,
        })
    }

    pub fn num_components(&self) -> usize {
        self.stored.len()
    }

    pub fn sampled_at(&self) -> &[usize] {
        &self.sampled_at
    }

    pub fn stored_gradients(&self) -> &[Vec<f64>] {
        &self.stored
    }

    /// The aggregated gradient g = running_sum / m.
    pub fn aggregated(&self) -> Vec<f64> {
        let m = self.stored.len() as f64;
        self.running_sum.iter().map(|v| v / m).collect()
    }

    /// Re-evaluates the given components at x, stamping them with
    /// iteration k. A full set rebuilds the sum exactly.
    pub fn refresh(
        &mut self,
        problem: &CompositeProblem,
        set: &[usize],
        x: &[f64],
        k: usize,
    ) -> Result<()> {
        for &i in set {
            if i >= self.stored.len() {
                return Err(Error::invalid(format!(
                    "refresh index {i} out of range for {} components",
                    self.stored.len()
                )));
            }
            let fresh = problem.components[i].gradient(x);
            for j in 0..fresh.len() {
                self.running_sum[j] += fresh[j] - self.stored[i][j];
            }
            self.stored[i] = fresh;
            self.sampled_at[i] = k;
            self.updates_since_rebuild += 1;
        }
        if set.len() == self.stored.len() || self.updates_since_rebuild >= REBUILD_PERIOD {
            let drift = self.drift();
            let scale = self
                .running_sum
                .iter()
                .fold(1.0f64, |acc, v| acc.max(v.abs()));
            assert!(
                drift <= 1e-10 * scale,
                "running gradient sum drifted by {drift} (scale {scale})"
            );
            self.rebuild();
        }
        Ok(())
    }

    /// Max abs deviation between the running sum and a fresh recomputation.
    pub fn drift(&self) -> f64 {
        let mut fresh = vec![0.0; self.running_sum.len()];
        for g in &self.stored {
            for j in 0..fresh.len() {
                fresh[j] += g[j];
            }
        }
        fresh
            .iter()
            .zip(&self.running_sum)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn rebuild(&mut self) {
        let mut fresh = vec![0.0; self.running_sum.len()];
        for g in &self.stored {
            for j in 0..fresh.len() {
                fresh[j] += g[j];
            }
        }
        self.running_sum = fresh;
        self.updates_since_rebuild = 0;
    }

    /// Staleness k - tau_i of every component as used at iteration k.
    pub fn staleness(&self, k: usize) -> Vec<usize> {
        self.sampled_at.iter().map(|&t| k - t).collect()
    }

    pub fn max_staleness(&self, k: usize) -> usize {
        self.sampled_at.iter().map(|&t| k - t).max().unwrap_or(0)
    }
}

/// The table initializer named for what it does in the iteration.
pub fn init_table(problem: &CompositeProblem, x0: &[f64]) -> Result<GradientTable> {
    GradientTable::init(problem, x0)
}

/// g_k = (1/m) sum of stored gradients.
pub fn aggregated_gradient(table: &GradientTable) -> Vec<f64> {
    table.aggregated()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// Refreshes component k mod m at iteration k.
    Cyclic,
    /// One uniformly random component, plus every component whose
    /// staleness would otherwise exceed the bound.
    RandomBounded,
    /// Exactly the components at the staleness deadline: the maximally
    /// stale schedule the bound permits. The set can be empty early on.
    AdversarialDeadline,
    /// Every component, every iteration.
    FullRefresh,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cyclic" => Ok(ScheduleKind::Cyclic),
            "random-bounded" => Ok(ScheduleKind::RandomBounded),
            "adversarial-deadline" => Ok(ScheduleKind::AdversarialDeadline),
            "full-refresh" => Ok(ScheduleKind::FullRefresh),
            other => Err(Error::invalid(format!("unknown schedule kind {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Cyclic => "cyclic",
            ScheduleKind::RandomBounded => "random-bounded",
            ScheduleKind::AdversarialDeadline => "adversarial-deadline",
            ScheduleKind::FullRefresh => "full-refresh",
        }
    }
}

/// Decides which components to refresh each iteration, never letting any
/// component's staleness exceed `max_delay` (the bound K).
#[derive(Debug, Clone)]
pub struct DelaySchedule {
    pub kind: ScheduleKind,
    pub max_delay: usize,
    pub seed: u64,
}

impl DelaySchedule {
    pub fn new(kind: ScheduleKind, max_delay: usize, seed: u64) -> Self {
        DelaySchedule {
            kind,
            max_delay,
            seed,
        }
    }

    /// A cyclic schedule revisits each component every m iterations, so it
    /// only respects the bound when K >= m - 1.
    pub fn validate_for(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::invalid("schedule needs at least one component"));
        }
        if self.kind == ScheduleKind::Cyclic && self.max_delay + 1 < m {
            return Err(Error::invalid(format!(
                "cyclic refresh over {m} components needs K >= {}, got K = {}",
                m - 1,
                self.max_delay
            )));
        }
        Ok(())
    }

    /// The refresh set for iteration k. `staleness` is each component's
    /// staleness as used at the previous iteration (all zero at k = 0); a
    /// component at the bound must be refreshed now or it would exceed it.
    pub fn refresh_set(&self, k: usize, staleness: &[usize]) -> Vec<usize> {
        let m = staleness.len();
        match self.kind {
            ScheduleKind::Cyclic => vec![k % m],
            ScheduleKind::FullRefresh => (0..m).collect(),
            ScheduleKind::AdversarialDeadline => {
                (0..m).filter(|&i| staleness[i] >= self.max_delay).collect()
            }
            ScheduleKind::RandomBounded => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k as u64);
                let pick = rng.gen_range(0..m);
                let mut set: Vec<usize> =
                    (0..m).filter(|&i| staleness[i] >= self.max_delay).collect();
                if !set.contains(&pick) {
                    set.push(pick);
                    set.sort_unstable();
                }
                set
            }
        }
    }
}

/// Spec-shaped free function over the schedule's method.
pub fn schedule_refresh_set(schedule: &DelaySchedule, k: usize, staleness: &[usize]) -> Vec<usize> {
    schedule.refresh_set(k, staleness)
}

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// F(x_k) - F_star_ref, the suboptimality at this iterate.
    pub suboptimality: f64,
    /// ||d_k||^2 for the direction computed at this iterate.
    pub direction_norm_sq: f64,
    pub eta: f64,
    /// Max staleness of the gradients aggregated at this iterate.
    pub max_staleness: usize,
}

/// Full record of a run: one row per iterate (the final row's direction is
/// the step that would have been taken next) plus terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub x_final: Vec<f64>,
    /// Number of steps actually applied (records.len() - 1).
    pub iterations: usize,
    pub f_star_ref: f64,
}

impl RunTrace {
    pub fn f0(&self) -> f64 {
        self.records[0].suboptimality
    }

    pub fn eta(&self) -> f64 {
        self.records[0].eta
    }

    /// First iteration index whose suboptimality is at or below epsilon.
    pub fn hitting_iteration(&self, epsilon: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.suboptimality <= epsilon)
            .map(|r| r.k)
    }

    /// CSV with header `k,F_k,d_norm_sq,eta,max_staleness`, full float
    /// precision, one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,F_k,d_norm_sq,eta,max_staleness\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.k, r.suboptimality, r.direction_norm_sq, r.eta, r.max_staleness
            ));
        }
        out
    }
}

/// Outcome of a single PIAG step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub next_point: Vec<f64>,
    pub direction: Vec<f64>,
    pub refreshed: Vec<usize>,
    pub max_staleness: usize,
}

/// One PIAG iteration at x_k: refresh the scheduled components at x_k,
/// aggregate, take the proximal step, and recover the direction.
pub fn piag_step(
    problem: &CompositeProblem,
    table: &mut GradientTable,
    schedule: &DelaySchedule,
    x_k: &[f64],
    eta: f64,
    k: usize,
) -> Result<StepResult> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!(
            "step size must be positive and finite, got {eta}"
        )));
    }
    let entry_staleness = if k == 0 {
        vec![0; table.num_components()]
    } else {
        table.staleness(k - 1)
    };
    let refreshed = schedule.refresh_set(k, &entry_staleness);
    table.refresh(problem, &refreshed, x_k, k)?;
    let max_staleness = table.max_staleness(k);
    assert!(
        max_staleness <= schedule.max_delay,
        "staleness bound violated at iteration {k}: {max_staleness} > {}",
        schedule.max_delay
    );
    let g = table.aggregated();
    let prox_arg: Vec<f64> = (0..x_k.len()).map(|j| x_k[j] - eta * g[j]).collect();
    let pr = prox(&problem.regularizer, eta, &prox_arg)?;
    let direction: Vec<f64> = (0..x_k.len())
        .map(|j| (pr.point[j] - x_k[j]) / eta)
        .collect();
    Ok(StepResult {
        next_point: pr.point,
        direction,
        refreshed,
        max_staleness,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_iters: usize,
    /// Absolute suboptimality target.
    pub epsilon: f64,
}

/// Runs PIAG from x0 until the suboptimality drops to epsilon or max_iters
/// steps have been applied. `f_star_ref` should come from the reference
/// module (already deflated by its accuracy bound, so suboptimalities stay
/// nonnegative).
pub fn run_piag(
    problem: &CompositeProblem,
    schedule: &DelaySchedule,
    x0: &[f64],
    eta: f64,
    stop: StopRule,
    f_star_ref: f64,
) -> Result<RunTrace> {
    validate_finite(x0, "start point")?;
    schedule.validate_for(problem.num_components())?;
    let f0 = eval_objective(problem, x0)? - f_star_ref;
    if !f0.is_finite() {
        return Err(Error::invalid(
            "objective at the start point is not finite (outside the regularizer's domain?)",
        ));
    }
    // Generous divergence guard; the floor keeps starts at the optimum from
    // tripping it on rounding noise.
    let guard = 1e6 * f0.max(1e-9);

    let mut table = GradientTable::init(problem, x0)?;
    let mut x = x0.to_vec();
    let mut records = Vec::new();
    let mut k = 0usize;
    loop {
        let f_gap = if k == 0 {
            f0
        } else {
            eval_objective(problem, &x)? - f_star_ref
        };
        if f_gap > guard {
            return Err(Error::UnstableStepSize {
                eta,
                k,
                f_k: f_gap,
                guard,
            });
        }
        let step = piag_step(problem, &mut table, schedule, &x, eta, k)?;
        records.push(IterationRecord {
            k,
            suboptimality: f_gap,
            direction_norm_sq: norm_sq(&step.direction),
            eta,
            max_staleness: step.max_staleness,
        });
        if f_gap <= stop.epsilon || k >= stop.max_iters {
            return Ok(RunTrace {
                records,
                x_final: x,
                iterations: k,
                f_star_ref,
            });
        }
        x = step.next_point;
        k += 1;
    }
}
