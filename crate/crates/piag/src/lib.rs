//! Proximal incremental aggregated gradient (PIAG) solver for strongly
//! convex composite problems, together with a runtime verifier that checks
//! the descent inequalities, step-size rules, and linear-rate bounds the
//! method is certified to satisfy.
//!
//! The crate is organised around the pipeline an experiment follows:
//!
//! * [`problems`] — component functions, regularizers, and generators for
//!   test instances with analytically known constants (L, mu, Q).
//! * [`prox`] — closed-form proximal operators and the subgradient each
//!   prox step implies.
//! * [`solver`] — the PIAG iteration itself: a gradient table with bounded
//!   staleness, refresh schedules, and per-iteration trace recording.
//! * [`theory`] — step-size policies, rate-bound evaluators, and checkers
//!   that replay a trace against every inequality it should satisfy.
//! * [`mod@reference`] — independent high-accuracy solvers producing the
//!   optimal value each suboptimality measurement is taken against.
//! * [`config`] / [`experiment`] — experiment configuration, sweeps over
//!   (Q, K, schedule, policy), and CSV/report emission for the CLI.

pub mod config;
pub mod error;
pub mod experiment;
pub mod problems;
pub mod prox;
pub mod reference;
pub mod solver;
pub mod theory;
pub mod vecmath;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
