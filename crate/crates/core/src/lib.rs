//! Heavy-traffic analysis of discrete-time queues fed by Markov-modulated arrivals.
//!
//! The crate covers two models. A single-server queue, where the scaled mean
//! queue length `εE[Q]` converges to `(σ_a² + σ_s²)/2` and `εQ` becomes
//! exponential, and an `N × N` input-queued switch under MaxWeight, where
//! `εE[Σ Q_ij]` converges to `(1 − 1/2N)‖σ‖²` after the queue vector
//! collapses onto a cone. Here `σ_a²` is the asymptotic variance of the
//! arrival process, which for Markov-modulated arrivals includes every lag of
//! the autocovariance, not just `γ(0)`.
//!
//! Modules:
//! - [`markov`]: chains, stationary laws, mixing envelopes, autocovariances.
//! - [`arrival`]: ε-indexed arrival families and saturated rate matrices.
//! - [`ssq`]: single-server dynamics, simulation, limits and finite-ε bounds.
//! - [`switch`]: geometry of the capacity region, MaxWeight, switch simulation.
//! - [`harness`]: config-driven sweeps, CSV output and the verification suite.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrival;
pub mod harness;
pub mod linalg;
pub mod markov;
pub mod ssq;
pub mod stats;
pub mod switch;
