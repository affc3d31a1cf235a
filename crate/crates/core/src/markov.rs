//! Finite-state Markov chains with integer emissions.
//!
//! A [`FiniteMarkovChain`] is the arrival engine of every model in the crate:
//! in slot `t` the chain sits in state `X^t` and emits `f(X^t)` arrivals.
//! Construction validates the transition matrix (stochastic rows, a single
//! communicating class, period one) and solves for the stationary law once.
//!
//! Analysis works on the deviation matrix `P - Π`, where every row of `Π` is
//! the stationary distribution. Because `PΠ = ΠP = Π²= Π`, its powers are
//! exactly `P^m - Π`, so total-variation distances and autocovariances at
//! large lags are computed without subtracting two nearly equal numbers.

use crate::linalg::{dot, neumaier_sum, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Row sums must equal one within this absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Maximum-norm residual allowed for `πP = π`.
pub const STATIONARITY_TOL: f64 = 1e-10;
/// Profile values at or below this are treated as numerically mixed.
pub const PROFILE_FLOOR: f64 = 1e-12;
/// Smallest decay rate the envelope fit reports (used for exactly mixing chains).
pub const ALPHA_FLOOR: f64 = 1e-9;
/// Default certified truncation error for the asymptotic variance.
pub const DEFAULT_TAIL_TOL: f64 = 1e-9;

const MAX_PROFILE_LEN: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("chain has no states")]
    Empty,
    #[error("dimension mismatch: {states} states but {what} has length {found}")]
    DimensionMismatch { states: usize, what: &'static str, found: usize },
    #[error("row {row} ({state}) is not stochastic: {detail}")]
    NonStochasticRow { row: usize, state: String, detail: String },
    #[error("chain is reducible: state {state} does not communicate with state {from}")]
    Reducible { state: String, from: String },
    #[error("chain is periodic with period {period} (through state {state})")]
    Periodic { period: usize, state: String },
    #[error("stationary solve failed: {0}")]
    SolverFailure(String),
    #[error("mixing envelope infeasible: d({m}) = {tv} shows no decay")]
    EnvelopeInfeasible { m: usize, tv: f64 },
    #[error("mixing profile is empty")]
    EmptyProfile,
    #[error("unknown state: {0}")]
    UnknownState(String),
    #[error("invalid initial distribution: {0}")]
    InvalidDistribution(String),
    #[error("path length must be at least 1")]
    EmptyPath,
    #[error("io error: {0}")]
    Io(String),
    #[error("malformed chain file: {0}")]
    Parse(String),
}

pub type Result<T, E = MarkovError> = std::result::Result<T, E>;

/// Stationary law `π` of a chain together with the stationary mean emission `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub probabilities: Vec<f64>,
    pub mean_emission: f64,
}

/// Validated, immutable finite-state chain with an emission map.
#[derive(Debug, Clone)]
pub struct FiniteMarkovChain {
    states: Vec<String>,
    transition: SquareMatrix,
    emission: Vec<u32>,
    a_max: u32,
    cumulative: Vec<Vec<f64>>,
    stationary: StationaryDistribution,
}

/// On-disk chain description: `{ "states": [...], "transition": [[...]], "emission": [...] }`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainFile {
    pub states: Vec<serde_json::Value>,
    pub transition: Vec<Vec<f64>>,
    pub emission: Vec<u32>,
}

impl ChainFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| MarkovError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| MarkovError::Parse(e.to_string()))
    }

    pub fn into_chain(self) -> Result<FiniteMarkovChain> {
        let labels = self
            .states
            .into_iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            })
            .collect();
        build_chain(labels, &self.transition, self.emission)
    }
}

/// Validates and builds a chain.
pub fn build_chain(states: Vec<String>, transition: &[Vec<f64>], emission: Vec<u32>) -> Result<FiniteMarkovChain> {
    let n = states.len();
    if n == 0 {
        return Err(MarkovError::Empty);
    }
    if transition.len() != n {
        return Err(MarkovError::DimensionMismatch { states: n, what: "transition", found: transition.len() });
    }
    if let Some(bad) = transition.iter().find(|r| r.len() != n) {
        return Err(MarkovError::DimensionMismatch { states: n, what: "transition row", found: bad.len() });
    }
    if emission.len() != n {
        return Err(MarkovError::DimensionMismatch { states: n, what: "emission", found: emission.len() });
    }
    for (i, row) in transition.iter().enumerate() {
        if let Some(j) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(MarkovError::NonStochasticRow {
                row: i,
                state: states[i].clone(),
                detail: format!("entry {j} = {}", row[j]),
            });
        }
        let s = neumaier_sum(row.iter().copied());
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(MarkovError::NonStochasticRow {
                row: i,
                state: states[i].clone(),
                detail: format!("sums to {s}"),
            });
        }
    }
    let matrix = SquareMatrix::from_rows(transition).expect("shape checked above");
    check_irreducible(&matrix, &states)?;
    check_aperiodic(&matrix, &states)?;
    let stationary = solve_stationary(&matrix, &emission)?;
    let cumulative = transition
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let a_max = emission.iter().copied().max().unwrap_or(0);
    Ok(FiniteMarkovChain { states, transition: matrix, emission, a_max, cumulative, stationary })
}

fn successors(p: &SquareMatrix, x: usize) -> impl Iterator<Item = usize> + '_ {
    p.row(x).iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(y, _)| y)
}

fn check_irreducible(p: &SquareMatrix, states: &[String]) -> Result<()> {
    let n = p.dim();
    // One strongly connected component <=> everything reaches 0 and 0 reaches everything.
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let edge = if forward { p[(x, y)] > 0.0 } else { p[(y, x)] > 0.0 };
                if edge && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    };
    for forward in [true, false] {
        if let Some(bad) = reach(forward).iter().position(|s| !s) {
            return Err(MarkovError::Reducible { state: states[bad].clone(), from: states[0].clone() });
        }
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_aperiodic(p: &SquareMatrix, states: &[String]) -> Result<()> {
    let n = p.dim();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(x) = queue.pop_front() {
        for y in successors(p, x) {
            if level[y] == usize::MAX {
                level[y] = level[x] + 1;
                queue.push_back(y);
            }
        }
    }
    // The period is the gcd of level[x] + 1 - level[y] over all edges x -> y.
    let mut period = 0;
    for x in 0..n {
        for y in successors(p, x) {
            let diff = (level[x] + 1).abs_diff(level[y]);
            period = gcd(period, diff);
        }
    }
    if period > 1 {
        return Err(MarkovError::Periodic { period, state: states[0].clone() });
    }
    Ok(())
}

/// Solves `πP = π`, `Σπ = 1` by LU on the bordered system.
pub fn solve_stationary(p: &SquareMatrix, emission: &[u32]) -> Result<StationaryDistribution> {
    let n = p.dim();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = p[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let mut pi: Vec<f64> = lu
        .solve(&b)
        .ok_or_else(|| MarkovError::SolverFailure("singular stationary system".into()))?
        .iter()
        .copied()
        .collect();
    for v in pi.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(MarkovError::SolverFailure(format!("negative stationary mass {v}")));
            }
            *v = 0.0;
        }
    }
    let total = neumaier_sum(pi.iter().copied());
    pi.iter_mut().for_each(|v| *v /= total);
    let residual = p.vec_mul(&pi).iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !(residual < STATIONARITY_TOL) {
        return Err(MarkovError::SolverFailure(format!("residual {residual:e}")));
    }
    let mean_emission = neumaier_sum(pi.iter().zip(emission).map(|(p, &f)| p * f as f64));
    Ok(StationaryDistribution { probabilities: pi, mean_emission })
}

impl FiniteMarkovChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transition(&self) -> &SquareMatrix {
        &self.transition
    }

    pub fn emission(&self) -> &[u32] {
        &self.emission
    }

    /// Largest per-slot emission, `A_max`.
    pub fn a_max(&self) -> u32 {
        self.a_max
    }

    pub fn stationary(&self) -> &StationaryDistribution {
        &self.stationary
    }

    /// Stationary mean emission `λ`.
    pub fn lambda(&self) -> f64 {
        self.stationary.mean_emission
    }

    pub fn state_index(&self, label: &str) -> Result<usize> {
        self.states.iter().position(|s| s == label).ok_or_else(|| MarkovError::UnknownState(label.to_string()))
    }

    pub fn to_file(&self) -> ChainFile {
        ChainFile {
            states: self.states.iter().cloned().map(serde_json::Value::String).collect(),
            transition: self.transition.to_rows(),
            emission: self.emission.clone(),
        }
    }

    /// `max_x |πP - π|`.
    pub fn stationarity_residual(&self) -> f64 {
        let pi = &self.stationary.probabilities;
        self.transition.vec_mul(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// The deviation matrix `P - Π`.
    pub fn deviation(&self) -> SquareMatrix {
        let n = self.len();
        let pi = &self.stationary.probabilities;
        let mut d = self.transition.clone();
        for i in 0..n {
            for j in 0..n {
                d[(i, j)] -= pi[j];
            }
        }
        d
    }

    /// Exact `P^m` by repeated compensated multiplication.
    pub fn transition_power(&self, m: usize) -> SquareMatrix {
        let mut acc = SquareMatrix::identity(self.len());
        for _ in 0..m {
            acc = acc.matmul(&self.transition);
        }
        acc
    }

    /// Draws the next state from `x`, given a uniform variate in `[0, 1)`.
    #[inline]
    pub fn next_state(&self, x: usize, u: f64) -> usize {
        let row = &self.cumulative[x];
        let last = row.len() - 1;
        row[..last].iter().position(|&c| u < c).unwrap_or(last)
    }

    /// Inverse-CDF draw from an arbitrary distribution over the states.
    pub fn draw_from(dist: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Round-off: fall back to the last state carrying mass.
        dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Draws a state from `π`.
    pub fn draw_stationary(&self, u: f64) -> usize {
        Self::draw_from(&self.stationary.probabilities, u)
    }
}

/// Convenience free function mirroring the chain accessor.
pub fn stationary_distribution(chain: &FiniteMarkovChain) -> &StationaryDistribution {
    chain.stationary()
}

/// `TV(µ, ν) = ½ Σ |µ − ν|`.
pub fn total_variation(mu: &[f64], nu: &[f64]) -> f64 {
    0.5 * neumaier_sum(mu.iter().zip(nu).map(|(a, b)| (a - b).abs()))
}

/// Worst-start total-variation distance `d(m) = max_x TV(P^m(x,·), π)` for `m = 1..=m_max`.
///
/// `d[0]` is `d(1)`.
pub fn mixing_profile(chain: &FiniteMarkovChain, m_max: usize) -> Vec<f64> {
    let dev = chain.deviation();
    let mut power = dev.clone();
    let mut out = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        if m > 1 {
            power = power.matmul(&dev);
        }
        let worst = power.rows().map(|r| 0.5 * neumaier_sum(r.iter().map(|v| v.abs()))).fold(0.0, f64::max);
        out.push(worst);
    }
    out
}

/// Mixing profile long enough to fall below [`PROFILE_FLOOR`] (or hit `cap`).
pub fn mixing_profile_until_floor(chain: &FiniteMarkovChain, cap: usize) -> Vec<f64> {
    let dev = chain.deviation();
    let mut power = dev.clone();
    let mut out = Vec::new();
    loop {
        let worst = power.rows().map(|r| 0.5 * neumaier_sum(r.iter().map(|v| v.abs()))).fold(0.0, f64::max);
        out.push(worst);
        if worst <= PROFILE_FLOOR || out.len() >= cap {
            return out;
        }
        power = power.matmul(&dev);
    }
}

/// Geometric mixing envelope `d(m) ≤ C α^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingEnvelope {
    pub c_const: f64,
    pub alpha: f64,
    /// Largest `m` whose profile value entered the fit; beyond it `d(m) ≤ PROFILE_FLOOR`.
    pub horizon: usize,
    /// Set when `d(m)` vanishes from the first step (e.g. i.i.d. chains).
    pub exact_mixing: bool,
}

impl MixingEnvelope {
    /// `C α^m`, or zero for an exactly mixing chain.
    pub fn tv_bound(&self, m: usize) -> f64 {
        if self.exact_mixing {
            0.0
        } else {
            self.c_const * self.alpha.powi(m as i32)
        }
    }

    /// `C (1 − α^m) / (1 − α)`, i.e. `Σ_{l<m} C α^l`.
    pub fn partial_geometric(&self, m: usize) -> f64 {
        if self.exact_mixing {
            0.0
        } else {
            self.c_const * (1.0 - self.alpha.powi(m as i32)) / (1.0 - self.alpha)
        }
    }
}

/// Fits `(C, α)` to a worst-start TV profile (`profile[0] = d(1)`).
///
/// The decay rate is the smallest `α` for which the second half of the
/// informative profile stays under a geometric curve anchored at its first
/// point; `C` is then the smallest constant that makes `Cα^m` dominate every
/// informative point. Points at or below [`PROFILE_FLOOR`] carry no usable
/// digits and are excluded.
pub fn fit_mixing_envelope(profile: &[f64]) -> Result<MixingEnvelope> {
    let Some(&last) = profile.last() else {
        return Err(MarkovError::EmptyProfile);
    };
    if last >= 1.0 - 1e-12 {
        return Err(MarkovError::EnvelopeInfeasible { m: profile.len(), tv: last });
    }
    let horizon = match profile.iter().rposition(|&d| d > PROFILE_FLOOR) {
        Some(i) => i + 1,
        None => {
            return Ok(MixingEnvelope { c_const: 1.0, alpha: ALPHA_FLOOR, horizon: profile.len(), exact_mixing: true })
        }
    };
    let d = |m: usize| profile[m - 1];
    let alpha = if horizon < 3 {
        // Too short for a rate: take the envelope with C = 1.
        (1..=horizon).map(|m| d(m).powf(1.0 / m as f64)).fold(ALPHA_FLOOR, f64::max)
    } else {
        let mid = horizon.div_ceil(2);
        let anchor = d(mid);
        (mid + 1..=horizon).map(|m| (d(m) / anchor).powf(1.0 / (m - mid) as f64)).fold(ALPHA_FLOOR, f64::max)
    };
    if alpha >= 1.0 {
        return Err(MarkovError::EnvelopeInfeasible { m: horizon, tv: d(horizon) });
    }
    let c_const = (1..=horizon).map(|m| d(m) / alpha.powi(m as i32)).fold(0.0, f64::max);
    Ok(MixingEnvelope { c_const, alpha, horizon, exact_mixing: false })
}

/// Profiles the chain until it is numerically mixed and fits an envelope.
pub fn chain_envelope(chain: &FiniteMarkovChain) -> Result<MixingEnvelope> {
    fit_mixing_envelope(&mixing_profile_until_floor(chain, MAX_PROFILE_LEN))
}

/// Exact stationary autocovariances and the asymptotic variance of `f(X^t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocovarianceSummary {
    /// `γ(0), γ(1), …, γ(t_max)`.
    pub gamma: Vec<f64>,
    /// `σ² = γ(0) + 2 Σ_{t≥1} γ(t)`, truncated at `truncation_lag`.
    pub sigma_sq: f64,
    /// Certified bound on the discarded tail of the σ² sum.
    pub truncation_tail: f64,
    /// Last lag included in `sigma_sq`.
    pub truncation_lag: usize,
    pub envelope: MixingEnvelope,
}

impl AutocovarianceSummary {
    /// `|γ(t)|` bound `2(A_max + λ) A_max C α^t`.
    pub fn gamma_bound(chain: &FiniteMarkovChain, env: &MixingEnvelope, t: usize) -> f64 {
        let a = chain.a_max() as f64;
        2.0 * (a + chain.lambda()) * a * env.tv_bound(t)
    }

    /// `γ(0) + 2 Σ_{i=1..m} γ(i)`, the windowed sum used by the finite-ε bounds.
    pub fn windowed_sum(&self, m: usize) -> f64 {
        assert!(m < self.gamma.len(), "window {m} exceeds computed lags");
        self.gamma[0] + 2.0 * neumaier_sum(self.gamma[1..=m].iter().copied())
    }
}

/// Computes `γ(t) = Σ_x π(x)(f(x) − λ) Σ_y (P^t − Π)(x, y) f(y)` for `t ≤ t_max`
/// and the truncated asymptotic variance.
pub fn autocovariance(chain: &FiniteMarkovChain, t_max: usize, tail_tol: f64) -> Result<AutocovarianceSummary> {
    let env = chain_envelope(chain)?;
    Ok(autocovariance_with_envelope(chain, &env, t_max, tail_tol))
}

pub fn autocovariance_with_envelope(
    chain: &FiniteMarkovChain,
    env: &MixingEnvelope,
    t_max: usize,
    tail_tol: f64,
) -> AutocovarianceSummary {
    assert!(tail_tol > 0.0, "tail_tol must be positive");
    let n = chain.len();
    let pi = &chain.stationary().probabilities;
    let lambda = chain.lambda();
    let f: Vec<f64> = chain.emission().iter().map(|&v| v as f64).collect();
    let weights: Vec<f64> = (0..n).map(|x| pi[x] * (f[x] - lambda)).collect();
    let a = chain.a_max() as f64;
    let tail_after = |t: usize| {
        if env.exact_mixing {
            0.0
        } else {
            2.0 * (a + lambda) * a * env.c_const * env.alpha.powi(t as i32 + 1) / (1.0 - env.alpha)
        }
    };

    let gamma0 = neumaier_sum((0..n).map(|x| weights[x] * (f[x] - lambda)));
    let mut gamma = vec![gamma0];
    let dev = chain.deviation();
    let mut power = dev.clone();
    let mut t = 1usize;
    let mut lag_sum_terms = Vec::new();
    let mut truncation_lag = 0;
    loop {
        let need_gamma = t <= t_max;
        let need_sigma = tail_after(truncation_lag) >= tail_tol && t < MAX_PROFILE_LEN;
        if !need_gamma && !need_sigma {
            break;
        }
        if t > 1 {
            power = power.matmul(&dev);
        }
        let g = dot(&weights, &power.mul_vec(&f));
        if need_gamma {
            gamma.push(g);
        }
        if need_sigma {
            lag_sum_terms.push(g);
            truncation_lag = t;
        }
        t += 1;
    }
    let sigma_sq = gamma0 + 2.0 * neumaier_sum(lag_sum_terms);
    AutocovarianceSummary {
        gamma,
        sigma_sq,
        truncation_tail: tail_after(truncation_lag),
        truncation_lag,
        envelope: *env,
    }
}

/// Where a sample path starts.
#[derive(Debug, Clone)]
pub enum Start {
    State(String),
    Index(usize),
    Distribution(Vec<f64>),
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub states: Vec<usize>,
    pub emissions: Vec<u32>,
}

/// Streams states of a chain, one slot at a time.
#[derive(Debug, Clone)]
pub struct ChainWalker<'a> {
    chain: &'a FiniteMarkovChain,
    state: usize,
}

impl<'a> ChainWalker<'a> {
    pub fn new(chain: &'a FiniteMarkovChain, state: usize) -> Self {
        ChainWalker { chain, state }
    }

    pub fn stationary<R: Rng>(chain: &'a FiniteMarkovChain, rng: &mut R) -> Self {
        let state = chain.draw_stationary(rng.random());
        ChainWalker { chain, state }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    /// Emission of the current state.
    #[inline]
    pub fn emission(&self) -> u32 {
        self.chain.emission[self.state]
    }

    #[inline]
    pub fn advance<R: Rng>(&mut self, rng: &mut R) {
        self.state = self.chain.next_state(self.state, rng.random());
    }
}

/// Simulates `length` slots of the chain: `X^0` from `start`, then transitions by `P`.
/// Deterministic in `seed`.
pub fn sample_path(chain: &FiniteMarkovChain, start: Start, length: usize, seed: u64) -> Result<SamplePath> {
    if length == 0 {
        return Err(MarkovError::EmptyPath);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = match start {
        Start::State(label) => chain.state_index(&label)?,
        Start::Index(i) if i < chain.len() => i,
        Start::Index(i) => return Err(MarkovError::UnknownState(i.to_string())),
        Start::Distribution(dist) => {
            if dist.len() != chain.len() || dist.iter().any(|p| !(*p >= 0.0)) {
                return Err(MarkovError::InvalidDistribution(format!("{dist:?}")));
            }
            let total: f64 = dist.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(MarkovError::InvalidDistribution(format!("sums to {total}")));
            }
            FiniteMarkovChain::draw_from(&dist, rng.random())
        }
        Start::Stationary => chain.draw_stationary(rng.random()),
    };
    let mut walker = ChainWalker::new(chain, first);
    let mut states = Vec::with_capacity(length);
    let mut emissions = Vec::with_capacity(length);
    for t in 0..length {
        if t > 0 {
            walker.advance(&mut rng);
        }
        states.push(walker.state());
        emissions.push(walker.emission());
    }
    Ok(SamplePath { states, emissions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    fn reference() -> FiniteMarkovChain {
        build_chain(labels(2), &[vec![0.9, 0.1], vec![0.5, 0.5]], vec![0, 2]).unwrap()
    }

    fn iid(row: Vec<f64>, f: Vec<u32>) -> FiniteMarkovChain {
        let n = row.len();
        build_chain(labels(n), &vec![row; n], f).unwrap()
    }

    // Independent oracle: stationary law by brute-force power iteration.
    fn power_iteration(p: &[Vec<f64>]) -> Vec<f64> {
        let n = p.len();
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..20_000 {
            v = (0..n).map(|j| (0..n).map(|i| v[i] * p[i][j]).sum()).collect();
        }
        v
    }

    #[test]
    fn builds_reference_chain() {
        let c = reference();
        assert_eq!(c.a_max(), 2);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn rejects_identity_as_reducible() {
        let err = build_chain(labels(2), &[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]).unwrap_err();
        assert!(matches!(err, MarkovError::Reducible { ref state, .. } if state == "1"), "{err}");
    }

    #[test]
    fn rejects_two_cycle_as_periodic() {
        let err = build_chain(labels(2), &[vec![0.0, 1.0], vec![1.0, 0.0]], vec![0, 1]).unwrap_err();
        assert_eq!(err, MarkovError::Periodic { period: 2, state: "0".into() });
    }

    #[test]
    fn rejects_three_cycle_and_accepts_cycle_with_shortcut() {
        let cyc = [vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        assert!(matches!(build_chain(labels(3), &cyc, vec![0; 3]), Err(MarkovError::Periodic { period: 3, .. })));
        // A 2-cycle and a 3-cycle through the same state: gcd 1.
        let mixed = [vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        assert!(build_chain(labels(3), &mixed, vec![0; 3]).is_ok());
    }

    #[test]
    fn rejects_bad_rows() {
        let err = build_chain(labels(2), &[vec![0.9, 0.2], vec![0.5, 0.5]], vec![0, 1]).unwrap_err();
        assert!(matches!(err, MarkovError::NonStochasticRow { row: 0, .. }));
        let err = build_chain(labels(2), &[vec![1.1, -0.1], vec![0.5, 0.5]], vec![0, 1]).unwrap_err();
        assert!(matches!(err, MarkovError::NonStochasticRow { row: 0, .. }));
        let err = build_chain(labels(2), &[vec![1.0], vec![0.5, 0.5]], vec![0, 1]).unwrap_err();
        assert!(matches!(err, MarkovError::DimensionMismatch { .. }));
    }

    #[test]
    fn stationary_matches_hand_solution() {
        let c = reference();
        let pi = &c.stationary().probabilities;
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-14);
        assert!((c.lambda() - 1.0 / 3.0).abs() < 1e-14);
        assert!(c.stationarity_residual() < STATIONARITY_TOL);
    }

    #[test]
    fn stationary_of_iid_chain_is_the_row() {
        let row = vec![0.2, 0.3, 0.5];
        let c = iid(row.clone(), vec![0, 1, 2]);
        for (a, b) in c.stationary().probabilities.iter().zip(&row) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn profile_of_reference_chain() {
        let c = reference();
        let prof = mixing_profile(&c, 40);
        // Worst start is ON: TV(P(ON,·), π) = |0.5 − 1/6| = 1/3; from OFF it is 1/15.
        assert!((prof[0] - 1.0 / 3.0).abs() < 1e-15);
        let from_off = total_variation(c.transition().row(0), &c.stationary().probabilities);
        assert!((from_off - 1.0 / 15.0).abs() < 1e-15);
        for (i, d) in prof.iter().enumerate() {
            let m = (i + 1) as i32;
            assert!((d - (5.0 / 6.0) * 0.4f64.powi(m)).abs() <= 1e-15 * (5.0 / 6.0) * 0.4f64.powi(m) * 50.0);
        }
    }

    #[test]
    fn profile_of_iid_chain_vanishes() {
        let c = iid(vec![0.25, 0.75], vec![0, 3]);
        assert!(mixing_profile(&c, 10).iter().all(|&d| d < 1e-16));
        let env = chain_envelope(&c).unwrap();
        assert!(env.exact_mixing);
        assert_eq!(env.tv_bound(1), 0.0);
    }

    #[test]
    fn envelope_recovers_geometric_profile() {
        let prof: Vec<f64> = (1..=60).map(|m| 0.5 * 0.9f64.powi(m)).collect();
        let env = fit_mixing_envelope(&prof).unwrap();
        assert!((env.alpha - 0.9).abs() < 1e-6);
        assert!((env.c_const - 0.5).abs() < 1e-6);
    }

    #[test]
    fn envelope_of_two_state_chain_has_eigenvalue_rate() {
        // p + q = 0.6 gives second eigenvalue 0.4.
        let c = build_chain(labels(2), &[vec![0.7, 0.3], vec![0.3, 0.7]], vec![0, 1]).unwrap();
        let env = chain_envelope(&c).unwrap();
        assert!((env.alpha - 0.4).abs() < 1e-6, "{env:?}");
        assert!((env.c_const - 0.5).abs() < 1e-6);
    }

    #[test]
    fn envelope_errors() {
        assert_eq!(fit_mixing_envelope(&[]), Err(MarkovError::EmptyProfile));
        assert!(matches!(fit_mixing_envelope(&[1.0, 1.0, 1.0]), Err(MarkovError::EnvelopeInfeasible { .. })));
        assert!(matches!(fit_mixing_envelope(&[0.5, 0.5, 0.5, 0.5]), Err(MarkovError::EnvelopeInfeasible { .. })));
        let all_zero = fit_mixing_envelope(&[0.0; 5]).unwrap();
        assert!(all_zero.exact_mixing && all_zero.c_const == 1.0);
    }

    #[test]
    fn short_informative_profile_uses_unit_constant() {
        let env = fit_mixing_envelope(&[0.25, 0.0, 0.0]).unwrap();
        assert!((env.alpha - 0.25).abs() < 1e-15);
        assert!(env.c_const <= 1.0 + 1e-15);
        assert!(env.tv_bound(1) >= 0.25 - 1e-15);
    }

    #[test]
    fn autocovariance_reference_closed_form() {
        let s = autocovariance(&reference(), 30, DEFAULT_TAIL_TOL).unwrap();
        for (t, g) in s.gamma.iter().enumerate() {
            let exact = 5.0 / 9.0 * 0.4f64.powi(t as i32);
            assert!((g - exact).abs() < 1e-10, "t={t}: {g} vs {exact}");
        }
        assert!((s.sigma_sq - 35.0 / 27.0).abs() < 1e-9);
        assert!(s.truncation_tail < DEFAULT_TAIL_TOL);
    }

    #[test]
    fn autocovariance_degenerate_cases() {
        let c = iid(vec![0.2, 0.3, 0.5], vec![0, 1, 4]);
        let s = autocovariance(&c, 5, DEFAULT_TAIL_TOL).unwrap();
        let mean: f64 = 0.3 + 2.0;
        let var = 0.2 * mean * mean + 0.3 * (1.0 - mean).powi(2) + 0.5 * (4.0 - mean).powi(2);
        assert!((s.gamma[0] - var).abs() < 1e-12);
        assert!(s.gamma[1..].iter().all(|g| g.abs() < 1e-15));
        assert!((s.sigma_sq - var).abs() < 1e-12);

        let constant = build_chain(labels(2), &[vec![0.9, 0.1], vec![0.5, 0.5]], vec![3, 3]).unwrap();
        let s = autocovariance(&constant, 5, DEFAULT_TAIL_TOL).unwrap();
        assert!(s.gamma.iter().all(|g| g.abs() < 1e-12));
        assert!(s.sigma_sq.abs() < 1e-12);
    }

    #[test]
    fn windowed_sum_matches_manual() {
        let s = autocovariance(&reference(), 5, DEFAULT_TAIL_TOL).unwrap();
        let manual = s.gamma[0] + 2.0 * (s.gamma[1] + s.gamma[2] + s.gamma[3]);
        assert!((s.windowed_sum(3) - manual).abs() < 1e-15);
    }

    #[test]
    fn sample_path_is_deterministic_and_validates_start() {
        let c = reference();
        let a = sample_path(&c, Start::Stationary, 1000, 7).unwrap();
        let b = sample_path(&c, Start::Stationary, 1000, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_path(&c, Start::Stationary, 1000, 8).unwrap());
        assert_eq!(sample_path(&c, Start::State("1".into()), 1, 0).unwrap().states, vec![1]);
        assert!(matches!(sample_path(&c, Start::State("x".into()), 5, 0), Err(MarkovError::UnknownState(_))));
        assert!(matches!(sample_path(&c, Start::Stationary, 0, 0), Err(MarkovError::EmptyPath)));
        assert!(sample_path(&c, Start::Distribution(vec![0.5, 0.6]), 3, 0).is_err());
    }

    #[test]
    fn iid_path_mean_within_three_standard_errors() {
        let c = iid(vec![0.6, 0.4], vec![0, 1]);
        let n = 200_000;
        let path = sample_path(&c, Start::Stationary, n, 11).unwrap();
        let mean = path.emissions.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let se = (0.4f64 * 0.6 / n as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn reference_path_lag_one_autocovariance() {
        let c = reference();
        let n = 1_000_000;
        let path = sample_path(&c, Start::Stationary, n, 3).unwrap();
        let lambda = 1.0 / 3.0;
        let prods: Vec<f64> =
            path.emissions.windows(2).map(|w| (w[0] as f64 - lambda) * (w[1] as f64 - lambda)).collect();
        let bm = crate::stats::batch_means(&prods, 50);
        assert!((bm.mean - 2.0 / 9.0).abs() < 3.0 * bm.std_error, "{bm:?}");
    }

    #[test]
    fn long_path_autocovariances_match_exact() {
        let c = reference();
        let exact = autocovariance(&c, 5, DEFAULT_TAIL_TOL).unwrap();
        let path = sample_path(&c, Start::Stationary, 10_000_000, 8).unwrap();
        let x: Vec<f64> = path.emissions.iter().map(|&a| a as f64 - 1.0 / 3.0).collect();
        for t in 0..=5 {
            let prods: Vec<f64> = x.iter().zip(&x[t..]).map(|(a, b)| a * b).collect();
            let bm = crate::stats::batch_means(&prods, 50);
            assert!((bm.mean - exact.gamma[t]).abs() < 3.0 * bm.std_error, "lag {t}: {bm:?} vs {}", exact.gamma[t]);
        }
    }

    /// `Var(Σ_{t=1..m} f(X^t))/m` for a stationary start, from the exact γ.
    fn window_variance(gamma: &[f64], m: usize) -> f64 {
        gamma[0] + 2.0 * (1..m).map(|t| (1.0 - t as f64 / m as f64) * gamma[t]).sum::<f64>()
    }

    #[test]
    fn partial_sum_variance_matches_exact_window_value() {
        let c = reference();
        let env = chain_envelope(&c).unwrap();
        let m = (10.0 / (1.0 - env.alpha)).ceil() as usize;
        let exact = autocovariance(&c, m, DEFAULT_TAIL_TOL).unwrap();
        let target = window_variance(&exact.gamma, m);

        let reps = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sums: Vec<f64> = (0..reps)
            .map(|_| {
                let mut w = ChainWalker::stationary(&c, &mut rng);
                (0..m)
                    .map(|_| {
                        w.advance(&mut rng);
                        w.emission() as f64
                    })
                    .sum()
            })
            .collect();
        let mean = sums.iter().sum::<f64>() / reps as f64;
        let dev: Vec<f64> = sums.iter().map(|s| (s - mean).powi(2)).collect();
        let var = dev.iter().sum::<f64>() / (reps - 1) as f64;
        let m4 = dev.iter().map(|d| d * d).sum::<f64>() / reps as f64;
        let se = ((m4 - var * var) / reps as f64).sqrt();
        assert!((var - m as f64 * target).abs() < 3.0 * se, "{var} vs {}", m as f64 * target);
    }

    #[test]
    fn partial_sum_variance_converges_at_rate_one_over_m() {
        // For γ(t) = γ₀rᵗ, m(σ² − Var(S_m)/m) → 2Σ tγ(t) = 2γ₀r/(1 − r)².
        let c = reference();
        let exact = autocovariance(&c, 4000, DEFAULT_TAIL_TOL).unwrap();
        let gamma: Vec<f64> = (0..=4000).map(|t| 5.0 / 9.0 * 0.4f64.powi(t)).collect();
        let coefficient = 2.0 * (5.0 / 9.0) * 0.4 / 0.36;
        let mut previous = f64::INFINITY;
        for m in [17, 68, 272, 1088] {
            let gap = exact.sigma_sq - window_variance(&gamma, m);
            assert!(gap > 0.0 && gap < previous);
            assert!((m as f64 * gap - coefficient).abs() < 2.0 * coefficient / m as f64 + 1e-6, "m = {m}");
            previous = gap;
        }
    }

    #[test]
    fn chain_file_round_trip() {
        let json = r#"{"states": ["off", "on"], "transition": [[0.9, 0.1], [0.5, 0.5]], "emission": [0, 2]}"#;
        let file: ChainFile = serde_json::from_str(json).unwrap();
        let chain = file.clone().into_chain().unwrap();
        assert_eq!(chain.states(), &["off".to_string(), "on".to_string()]);
        assert_eq!(chain.to_file(), file);
    }

    fn random_chain() -> impl Strategy<Value = FiniteMarkovChain> {
        (2usize..=6).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, n), n),
                proptest::collection::vec(0u32..4, n),
            )
                .prop_map(move |(raw, f)| {
                    let rows: Vec<Vec<f64>> = raw
                        .into_iter()
                        .map(|r| {
                            let s: f64 = r.iter().sum();
                            r.into_iter().map(|v| v / s).collect()
                        })
                        .collect();
                    build_chain(labels(n), &rows, f).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn stationary_agrees_with_power_iteration(chain in random_chain()) {
            let rows = chain.transition().to_rows();
            let oracle = power_iteration(&rows);
            for (a, b) in chain.stationary().probabilities.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert!(chain.stationarity_residual() < STATIONARITY_TOL);
        }

        #[test]
        fn envelope_dominates_profile(chain in random_chain()) {
            let env = chain_envelope(&chain).unwrap();
            for (i, d) in mixing_profile(&chain, 50).iter().enumerate() {
                prop_assert!(*d <= env.tv_bound(i + 1) + 1e-12);
            }
        }

        #[test]
        fn gamma_respects_mixing_bound(chain in random_chain()) {
            let s = autocovariance(&chain, 20, DEFAULT_TAIL_TOL).unwrap();
            prop_assert!(s.gamma[0] >= 0.0);
            prop_assert!(s.sigma_sq >= -1e-12);
            for (t, g) in s.gamma.iter().enumerate().skip(1) {
                let bound = AutocovarianceSummary::gamma_bound(&chain, &s.envelope, t);
                prop_assert!(g.abs() <= bound + 1e-12, "t={} g={} bound={}", t, g, bound);
            }
        }

        #[test]
        fn deviation_powers_match_direct_powers(chain in random_chain(), m in 1usize..12) {
            let direct = chain.transition_power(m);
            let pi = &chain.stationary().probabilities;
            let mut dev = chain.deviation();
            for _ in 1..m {
                dev = dev.matmul(&chain.deviation());
            }
            for i in 0..chain.len() {
                for j in 0..chain.len() {
                    prop_assert!((direct[(i, j)] - pi[j] - dev[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }
}
