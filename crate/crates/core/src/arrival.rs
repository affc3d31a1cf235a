//! Heavy-traffic families of Markov-modulated arrival processes.
//!
//! A family fixes the state space and the emission levels and moves only the
//! transition probabilities with ε, so that the stationary mean approaches
//! the target from below while the correlation structure converges. For the
//! two-state ON/OFF family the second eigenvalue is pinned at the burstiness
//! `r` for every ε, which keeps the mixing envelope uniform across the sweep
//! and gives `γ^(ε)(t) = γ^(ε)(0) r^t`.

use crate::linalg::SquareMatrix;
use crate::markov::{self, build_chain, FiniteMarkovChain, MarkovError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrivalError {
    #[error("infeasible rate: {0}")]
    InfeasibleRate(String),
    #[error("invalid family parameter: {0}")]
    InvalidParameter(String),
    #[error("family target is a {found}, expected a {expected}")]
    WrongTarget { expected: &'static str, found: &'static str },
    #[error(transparent)]
    Chain(#[from] MarkovError),
}

pub type Result<T, E = ArrivalError> = std::result::Result<T, E>;

/// How the stationary mean approaches the target as ε → 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRule {
    /// `λ^(ε) = (1 − ε) v` (switch convention).
    Scaled,
    /// `λ^(ε) = v − ε` (single-server convention, `v = µ`).
    Shifted,
}

impl RateRule {
    pub fn apply(self, v: f64, eps: f64) -> f64 {
        match self {
            RateRule::Scaled => (1.0 - eps) * v,
            RateRule::Shifted => v - eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Scalar(f64),
    Matrix(SquareMatrix),
}

impl Target {
    fn kind(&self) -> &'static str {
        match self {
            Target::Scalar(_) => "scalar",
            Target::Matrix(_) => "matrix",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// OFF/ON chain emitting `0` or `peak`.
    TwoState { peak: u32, burstiness: f64, per_queue: Option<SquareMatrix> },
    /// Identical rows: a per-slot distribution over `values`, thinned by a zero mass.
    Iid { values: Vec<u32>, probabilities: Vec<f64> },
}

/// ε-indexed collection of arrival chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalFamily {
    pub shape: Shape,
    pub target: Target,
    pub rule: RateRule,
}

/// Two-state OFF/ON chain with `f = (0, peak)`, stationary mean `rate`, second eigenvalue `r`.
pub fn two_state_chain(peak: u32, burstiness: f64, rate: f64) -> Result<FiniteMarkovChain> {
    if !(0.0..1.0).contains(&burstiness) {
        return Err(ArrivalError::InvalidParameter(format!("burstiness {burstiness} not in [0, 1)")));
    }
    if peak == 0 {
        return Err(ArrivalError::InvalidParameter("peak emission must be positive".into()));
    }
    let on = rate / peak as f64;
    if !(on > 0.0 && on < 1.0) {
        return Err(ArrivalError::InfeasibleRate(format!("ON fraction {on} for rate {rate}, peak {peak}")));
    }
    let p = (1.0 - burstiness) * on;
    let q = (1.0 - burstiness) * (1.0 - on);
    Ok(build_chain(vec!["off".into(), "on".into()], &[vec![1.0 - p, p], vec![q, 1.0 - q]], vec![0, peak])?)
}

/// i.i.d. chain: emits `values[k]` w.p. `β probabilities[k]` and `0` w.p. `1 − β`,
/// with `β` chosen to hit `rate`. Zero-probability states are dropped.
pub fn iid_chain(values: &[u32], probabilities: &[f64], rate: f64) -> Result<FiniteMarkovChain> {
    let mean = validate_iid(values, probabilities)?;
    let beta = rate / mean;
    if !(rate > 0.0) || beta > 1.0 + 1e-12 {
        return Err(ArrivalError::InfeasibleRate(format!("rate {rate} vs distribution mean {mean}")));
    }
    let beta = beta.min(1.0);
    let mut mass: Vec<(u32, f64)> = Vec::new();
    let mut add = |v: u32, p: f64| match mass.iter_mut().find(|(x, _)| *x == v) {
        Some((_, q)) => *q += p,
        None => mass.push((v, p)),
    };
    add(0, 1.0 - beta);
    for (&v, &p) in values.iter().zip(probabilities) {
        add(v, beta * p);
    }
    mass.retain(|(_, p)| *p > 0.0);
    mass.sort_by_key(|(v, _)| *v);
    let row: Vec<f64> = mass.iter().map(|(_, p)| *p).collect();
    let rows = vec![row; mass.len()];
    Ok(build_chain(mass.iter().map(|(v, _)| v.to_string()).collect(), &rows, mass.iter().map(|(v, _)| *v).collect())?)
}

fn validate_iid(values: &[u32], probabilities: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() != probabilities.len() {
        return Err(ArrivalError::InvalidParameter(
            "values and probabilities must be non-empty and equal length".into(),
        ));
    }
    if probabilities.iter().any(|p| !(*p >= 0.0)) || (probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ArrivalError::InvalidParameter(format!("not a distribution: {probabilities:?}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(ArrivalError::InvalidParameter("duplicate emission values".into()));
    }
    let mean: f64 = values.iter().zip(probabilities).map(|(&v, &p)| v as f64 * p).sum();
    if !(mean > 0.0) {
        return Err(ArrivalError::InfeasibleRate("distribution has zero mean".into()));
    }
    Ok(mean)
}

/// ON/OFF family with a pinned second eigenvalue.
pub fn make_two_state_family(peak: u32, burstiness: f64, target: Target) -> Result<ArrivalFamily> {
    if !(0.0..1.0).contains(&burstiness) {
        return Err(ArrivalError::InvalidParameter(format!("burstiness {burstiness} not in [0, 1)")));
    }
    let check = |v: f64| {
        if v > 0.0 && v < peak as f64 {
            Ok(())
        } else {
            Err(ArrivalError::InfeasibleRate(format!("target {v} not in (0, {peak})")))
        }
    };
    match &target {
        Target::Scalar(v) => check(*v)?,
        Target::Matrix(m) => m.as_slice().iter().try_for_each(|&v| check(v))?,
    }
    Ok(ArrivalFamily { shape: Shape::TwoState { peak, burstiness, per_queue: None }, target, rule: RateRule::Scaled })
}

/// i.i.d. family from a per-slot distribution over emission values.
pub fn make_iid_family(values: Vec<u32>, probabilities: Vec<f64>, target: Target) -> Result<ArrivalFamily> {
    let mean = validate_iid(&values, &probabilities)?;
    let check = |v: f64| {
        if v > 0.0 && v <= mean + 1e-12 {
            Ok(())
        } else {
            Err(ArrivalError::InfeasibleRate(format!("target {v} exceeds distribution mean {mean}")))
        }
    };
    match &target {
        Target::Scalar(v) => check(*v)?,
        Target::Matrix(m) => m.as_slice().iter().try_for_each(|&v| check(v))?,
    }
    Ok(ArrivalFamily { shape: Shape::Iid { values, probabilities }, target, rule: RateRule::Scaled })
}

impl ArrivalFamily {
    pub fn with_rule(mut self, rule: RateRule) -> Self {
        self.rule = rule;
        self
    }

    /// Per-queue burstiness override for switch families.
    pub fn with_per_queue_burstiness(mut self, r: SquareMatrix) -> Result<Self> {
        match (&mut self.shape, &self.target) {
            (Shape::TwoState { per_queue, .. }, Target::Matrix(v)) if v.dim() == r.dim() => {
                if r.as_slice().iter().any(|b| !(0.0..1.0).contains(b)) {
                    return Err(ArrivalError::InvalidParameter("burstiness entries must lie in [0, 1)".into()));
                }
                *per_queue = Some(r);
                Ok(self)
            }
            _ => Err(ArrivalError::InvalidParameter("per-queue burstiness needs a two-state matrix family".into())),
        }
    }

    /// Largest emission any chain of the family can produce.
    pub fn a_max(&self) -> u32 {
        match &self.shape {
            Shape::TwoState { peak, .. } => *peak,
            Shape::Iid { values, probabilities } => {
                values.iter().zip(probabilities).filter(|(_, &p)| p > 0.0).map(|(&v, _)| v).max().unwrap_or(0)
            }
        }
    }

    fn build(&self, rate: f64, i: usize, j: usize) -> Result<FiniteMarkovChain> {
        match &self.shape {
            Shape::TwoState { peak, burstiness, per_queue } => {
                let r = per_queue.as_ref().map_or(*burstiness, |m| m[(i, j)]);
                two_state_chain(*peak, r, rate)
            }
            Shape::Iid { values, probabilities } => iid_chain(values, probabilities, rate),
        }
    }

    pub fn scalar_target(&self) -> Result<f64> {
        match &self.target {
            Target::Scalar(v) => Ok(*v),
            other => Err(ArrivalError::WrongTarget { expected: "scalar", found: other.kind() }),
        }
    }

    pub fn matrix_target(&self) -> Result<&SquareMatrix> {
        match &self.target {
            Target::Matrix(m) => Ok(m),
            other => Err(ArrivalError::WrongTarget { expected: "matrix", found: other.kind() }),
        }
    }

    /// Single-queue chain at heavy-traffic parameter `eps`.
    pub fn chain(&self, eps: f64) -> Result<FiniteMarkovChain> {
        let v = self.scalar_target()?;
        self.build(self.rule.apply(v, eps), 0, 0)
    }

    /// Independent per-queue chains at `eps`, indexed `[i][j]`.
    pub fn queue_chains(&self, eps: f64) -> Result<Vec<Vec<FiniteMarkovChain>>> {
        let v = self.matrix_target()?;
        (0..v.dim())
            .map(|i| (0..v.dim()).map(|j| self.build(self.rule.apply(v[(i, j)], eps), i, j)).collect())
            .collect()
    }

    /// Asymptotic variance of the limiting (ε → 0⁺) scalar chain.
    pub fn limit_sigma_sq(&self) -> Result<f64> {
        let chain = self.chain(0.0)?;
        Ok(markov::autocovariance(&chain, 0, markov::DEFAULT_TAIL_TOL)?.sigma_sq)
    }

    /// Per-queue limiting asymptotic variances `σ_ij²`.
    pub fn limit_sigma_matrix(&self) -> Result<SquareMatrix> {
        let chains = self.queue_chains(0.0)?;
        let n = chains.len();
        let mut out = SquareMatrix::zeros(n);
        for (i, row) in chains.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                out[(i, j)] = markov::autocovariance(c, 0, markov::DEFAULT_TAIL_TOL)?.sigma_sq;
            }
        }
        Ok(out)
    }
}

/// Preset or random saturated rate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMatrixSpec {
    Uniform { n: usize },
    Random { n: usize, seed: u64 },
    Explicit(Vec<Vec<f64>>),
}

/// Doubly-stochastic matrix with strictly positive entries.
///
/// The random variant mixes `n` uniformly drawn permutation matrices with
/// random convex weights and then averages with the uniform matrix, so every
/// entry is at least `1/(2n)`.
pub fn saturated_rate_matrix(spec: &RateMatrixSpec) -> Result<SquareMatrix> {
    match spec {
        RateMatrixSpec::Uniform { n } => {
            check_dim(*n)?;
            Ok(SquareMatrix::from_fn(*n, |_, _| 1.0 / *n as f64))
        }
        RateMatrixSpec::Random { n, seed } => {
            let n = *n;
            check_dim(n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let total: f64 = weights.iter().sum();
            let mut m = SquareMatrix::from_fn(n, |_, _| 0.5 / n as f64);
            let mut perm: Vec<usize> = (0..n).collect();
            for w in weights {
                perm.shuffle(&mut rng);
                for (i, &j) in perm.iter().enumerate() {
                    m[(i, j)] += 0.5 * w / total;
                }
            }
            Ok(m)
        }
        RateMatrixSpec::Explicit(rows) => {
            let m = SquareMatrix::from_rows(rows)
                .ok_or_else(|| ArrivalError::InvalidParameter("rate matrix must be square".into()))?;
            check_dim(m.dim())?;
            if m.min_entry() <= 0.0 {
                return Err(ArrivalError::InfeasibleRate("saturated rate matrix needs positive entries".into()));
            }
            for k in 0..m.dim() {
                if (m.row_sum(k) - 1.0).abs() > 1e-10 || (m.col_sum(k) - 1.0).abs() > 1e-10 {
                    return Err(ArrivalError::InfeasibleRate(format!("row/column {k} does not sum to 1")));
                }
            }
            Ok(m)
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(ArrivalError::InvalidParameter(format!("switch size {n} < 2")));
    }
    Ok(())
}
