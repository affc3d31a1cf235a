//! Slotted simulation of the input-queued switch under MaxWeight.
//!
//! Each slot: arrivals `A^t` come from independent per-queue chains, MaxWeight
//! picks a perfect matching `S^t` from `Q^t`, and every queue evolves as
//! `Q' = max(Q + A − S, 0)` with unused service `U = Q' − (Q + A − S)`.

use super::cone::{ConeError, ConeSolver};
use super::geometry::{capacity_position, norm_parallel_l_sq_from_marginals, CapacityPosition, QueueMatrix};
use super::matching::{MaxWeight, Schedule};
use crate::arrival::{ArrivalError, ArrivalFamily};
use crate::markov::{ChainWalker, FiniteMarkovChain};
use crate::ssq::{default_burn_in, is_growing};
use crate::stats::{BatchAccumulator, Estimate, DEFAULT_BATCHES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("queues keep growing: quarter means {quarters:?}")]
    UnstableRun { quarters: [f64; 4] },
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
    #[error(transparent)]
    Cone(#[from] ConeError),
}

pub type Result<T, E = SwitchError> = std::result::Result<T, E>;

/// One slot for a single matrix of queues. Returns `(Q', U)`.
///
/// Panics if the unused-service identities fail, which would mean the
/// schedule is not a permutation.
pub fn switch_step(q: &QueueMatrix, a: &QueueMatrix, s: &Schedule) -> (QueueMatrix, QueueMatrix) {
    let n = q.dim();
    assert!(a.dim() == n && s.dim() == n, "dimension mismatch");
    let mut next = q.clone();
    let mut u = QueueMatrix::zeros(n);
    for (k, (qn, un)) in next.as_mut_slice().iter_mut().zip(u.as_mut_slice()).enumerate() {
        let (i, j) = (k / n, k % n);
        let (v, w) = crate::ssq::ssq_step(*qn, a.get(i, j), s.serves(i, j) as u64);
        *qn = v;
        *un = w;
    }
    check_unused(&next, &u, s);
    (next, u)
}

fn check_unused(next: &QueueMatrix, u: &QueueMatrix, s: &Schedule) {
    let n = next.dim();
    for i in 0..n {
        for j in 0..n {
            assert!(u.get(i, j) * next.get(i, j) == 0, "U·Q' ≠ 0 at ({i},{j})");
            assert!(u.get(i, j) <= s.serves(i, j) as u64, "U > S at ({i},{j})");
        }
        assert!(u.row_sum(i) <= 1 && u.col_sum(i) <= 1, "unused service exceeds one per port");
    }
}

/// Per-queue arrival chains for one ε.
#[derive(Debug, Clone)]
pub struct SwitchModel {
    chains: Vec<Vec<FiniteMarkovChain>>,
}

impl SwitchModel {
    pub fn new(chains: Vec<Vec<FiniteMarkovChain>>) -> Result<Self> {
        let n = chains.len();
        if n == 0 || chains.iter().any(|r| r.len() != n) {
            return Err(SwitchError::ConfigInvalid("per-queue chains must form a square array".into()));
        }
        if n > 64 {
            return Err(SwitchError::ConfigInvalid(format!("{n} ports exceeds the supported 64")));
        }
        Ok(SwitchModel { chains })
    }

    /// Bernoulli arrivals with the given per-queue rates.
    pub fn bernoulli(rates: &crate::linalg::SquareMatrix) -> Result<Self> {
        let chains = rates
            .rows()
            .map(|r| r.iter().map(|&p| crate::arrival::iid_chain(&[1], &[1.0], p)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(chains)
    }

    pub fn dim(&self) -> usize {
        self.chains.len()
    }

    pub fn chains(&self) -> &[Vec<FiniteMarkovChain>] {
        &self.chains
    }

    pub fn rates(&self) -> crate::linalg::SquareMatrix {
        crate::linalg::SquareMatrix::from_fn(self.dim(), |i, j| self.chains[i][j].lambda())
    }
}

/// RNG streams: 0 breaks ties, `1 + iN + j` drives queue `(i, j)`.
struct Streams<'a> {
    ties: ChaCha8Rng,
    queues: Vec<(ChaCha8Rng, ChainWalker<'a>)>,
}

impl<'a> Streams<'a> {
    fn new(model: &'a SwitchModel, seed: u64) -> Self {
        let n = model.dim();
        let mut ties = ChaCha8Rng::seed_from_u64(seed);
        ties.set_stream(0);
        let queues = (0..n * n)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + k as u64);
                let walker = ChainWalker::stationary(&model.chains[k / n][k % n], &mut rng);
                (rng, walker)
            })
            .collect();
        Streams { ties, queues }
    }

    fn arrivals(&self, a: &mut [u64]) {
        for (x, (_, w)) in a.iter_mut().zip(&self.queues) {
            *x = w.emission() as u64;
        }
    }

    fn advance(&mut self) {
        for (rng, w) in &mut self.queues {
            w.advance(rng);
        }
    }
}

/// One recorded slot of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchSlot {
    pub q: QueueMatrix,
    pub a: QueueMatrix,
    pub schedule: Schedule,
    pub u: QueueMatrix,
    pub q_next: QueueMatrix,
}

/// Runs `slots` slots from empty queues, keeping every slot.
pub fn simulate_switch_trace(model: &SwitchModel, slots: usize, seed: u64) -> Vec<SwitchSlot> {
    let n = model.dim();
    let mut streams = Streams::new(model, seed);
    let mut mw = MaxWeight::new(n);
    let mut q = QueueMatrix::zeros(n);
    let mut a = QueueMatrix::zeros(n);
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        streams.arrivals(a.as_mut_slice());
        let schedule = mw.schedule(q.as_slice(), &mut streams.ties);
        let (q_next, u) = switch_step(&q, &a, &schedule);
        out.push(SwitchSlot { q: q.clone(), a: a.clone(), schedule, u, q_next: q_next.clone() });
        q = q_next;
        streams.advance();
    }
    out
}

/// Total queue length `Σ Q^t` at every slot `t < horizon`, from empty queues.
pub fn total_queue_path(model: &SwitchModel, horizon: usize, seed: u64) -> Vec<u64> {
    let mut totals = Vec::with_capacity(horizon);
    run(model, horizon as u64, seed, |_, q, _| totals.push(q.iter().sum()));
    totals
}

/// Core loop. `observe(t, Q^t, U^t)` sees each slot before the next begins.
fn run(model: &SwitchModel, horizon: u64, seed: u64, mut observe: impl FnMut(u64, &[u64], &[u64])) {
    let n = model.dim();
    let mut streams = Streams::new(model, seed);
    let mut mw = MaxWeight::new(n);
    let mut q = vec![0u64; n * n];
    let mut a = vec![0u64; n * n];
    let mut u = vec![0u64; n * n];
    let (mut row_unused, mut col_unused) = (vec![0u64; n], vec![0u64; n]);
    for t in 0..horizon {
        streams.arrivals(&mut a);
        let schedule = mw.schedule(&q, &mut streams.ties);
        let q_now = q.clone();
        row_unused.iter_mut().for_each(|x| *x = 0);
        col_unused.iter_mut().for_each(|x| *x = 0);
        for (i, &j_served) in schedule.permutation.iter().enumerate() {
            for (j, col) in col_unused.iter_mut().enumerate() {
                let k = i * n + j;
                let (qn, un) = crate::ssq::ssq_step(q[k], a[k], (j == j_served) as u64);
                q[k] = qn;
                u[k] = un;
                row_unused[i] += un;
                *col += un;
            }
        }
        assert!(
            row_unused.iter().chain(&col_unused).all(|&x| x <= 1),
            "unused service exceeds one per port at slot {t}"
        );
        observe(t, &q_now, &u);
        streams.advance();
    }
}

#[derive(Debug, Clone)]
pub struct SwitchConfig {
    pub family: ArrivalFamily,
    pub eps: f64,
    /// Total simulated slots, burn-in included.
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub batches: usize,
}

impl SwitchConfig {
    pub fn new(family: ArrivalFamily, eps: f64, horizon: u64, seed: u64) -> Self {
        SwitchConfig { family, eps, horizon, burn_in: default_burn_in(eps), seed, batches: DEFAULT_BATCHES }
    }

    /// Checks the configuration and builds the per-queue chains.
    pub fn model(&self) -> Result<SwitchModel> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SwitchError::ConfigInvalid(format!("epsilon {} not in (0, 1)", self.eps)));
        }
        if self.burn_in >= self.horizon {
            return Err(SwitchError::ConfigInvalid(format!("burn-in {} ≥ horizon {}", self.burn_in, self.horizon)));
        }
        if self.horizon - self.burn_in < self.batches as u64 {
            return Err(SwitchError::ConfigInvalid("fewer recorded slots than batches".into()));
        }
        let v = self.family.matrix_target()?;
        if capacity_position(v) != CapacityPosition::OnFaceF {
            return Err(SwitchError::ConfigInvalid("target rate matrix must saturate every port".into()));
        }
        let model = SwitchModel::new(self.family.queue_chains(self.eps)?)?;
        let rates = model.rates();
        if rates.max_abs_diff(&v.scale(1.0 - self.eps)) > 1e-10 {
            return Err(SwitchError::ConfigInvalid("switch families must scale the target by (1 − ε)".into()));
        }
        let threshold = v.min_entry() / (2.0 * v.norm());
        if self.eps >= threshold {
            log::warn!(
                "epsilon {} is not below v_min/(2‖v‖) = {threshold:.4}; the collapse bound does not apply",
                self.eps
            );
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchStats {
    pub eps: f64,
    pub n: usize,
    pub sum_q: Estimate,
    pub scaled_sum_q: Estimate,
    pub perp_k_sq: Estimate,
    pub perp_l_sq: Estimate,
    pub parallel_k_sq: Estimate,
    pub sum_unused: Estimate,
    pub quarter_means: [f64; 4],
    /// Recorded slots with `‖Q_⊥L‖² > ‖Q_⊥K‖²` beyond rounding.
    pub collapse_violations: u64,
    pub recorded_slots: u64,
    pub seed: u64,
}

impl SwitchStats {
    /// `|ΣU − Nε|` in batch-means standard errors.
    pub fn unused_z(&self) -> f64 {
        self.sum_unused.z_score(self.n as f64 * self.eps)
    }
}

/// Simulates one replication and returns post-burn-in averages with
/// batch-means intervals. Deterministic in `config.seed`.
pub fn simulate_switch(config: &SwitchConfig) -> Result<SwitchStats> {
    let model = config.model()?;
    let n = model.dim();
    let recorded = config.horizon - config.burn_in;
    let acc = || BatchAccumulator::new(recorded, config.batches);
    let (mut sum_q, mut perp_k, mut perp_l, mut par_k, mut unused) = (acc(), acc(), acc(), acc(), acc());
    let mut solver = ConeSolver::new(n);
    let (mut x, mut rows, mut cols) = (vec![0.0; n * n], vec![0.0; n], vec![0.0; n]);
    let quarter = (recorded / 4).max(1);
    let mut quarter_sums = [0.0f64; 4];
    let mut quarter_counts = [0u64; 4];
    let mut violations = 0u64;
    let mut failure = None;

    run(&model, config.horizon, config.seed, |t, q, u| {
        if t < config.burn_in || failure.is_some() {
            return;
        }
        rows.iter_mut().for_each(|r| *r = 0.0);
        cols.iter_mut().for_each(|c| *c = 0.0);
        let mut total = 0u64;
        let mut norm_sq = 0.0;
        for (k, &v) in q.iter().enumerate() {
            let f = v as f64;
            x[k] = f;
            rows[k / n] += f;
            cols[k % n] += f;
            total += v;
            norm_sq += f * f;
        }
        let (par, perp) = match solver.norms(&x, &rows, &cols) {
            Ok(p) => p,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let l_perp = (norm_sq - norm_parallel_l_sq_from_marginals(&rows, &cols, total as f64)).max(0.0);
        if l_perp > perp + 1e-9 * (1.0 + norm_sq) {
            violations += 1;
        }
        let kq = (((t - config.burn_in) / quarter) as usize).min(3);
        quarter_sums[kq] += total as f64;
        quarter_counts[kq] += 1;
        sum_q.push(total as f64);
        perp_k.push(perp);
        perp_l.push(l_perp);
        par_k.push(par);
        unused.push(u.iter().sum::<u64>() as f64);
    });
    if let Some(e) = failure {
        return Err(e.into());
    }

    let quarter_means = std::array::from_fn(|k| quarter_sums[k] / quarter_counts[k].max(1) as f64);
    if is_growing(&quarter_means) {
        return Err(SwitchError::UnstableRun { quarters: quarter_means });
    }
    let sum_q = sum_q.estimate();
    let stats = SwitchStats {
        eps: config.eps,
        n,
        scaled_sum_q: Estimate {
            mean: config.eps * sum_q.mean,
            std_error: config.eps * sum_q.std_error,
            half_width: config.eps * sum_q.half_width,
            batches: sum_q.batches,
        },
        sum_q,
        perp_k_sq: perp_k.estimate(),
        perp_l_sq: perp_l.estimate(),
        parallel_k_sq: par_k.estimate(),
        sum_unused: unused.estimate(),
        quarter_means,
        collapse_violations: violations,
        recorded_slots: recorded,
        seed: config.seed,
    };
    let target = n as f64 * config.eps;
    if (stats.sum_unused.mean - target).abs() > 4.0 * stats.sum_unused.half_width {
        log::warn!(
            "unused service {:.6} deviates from Nε = {target} by more than 4 half-widths",
            stats.sum_unused.mean
        );
    }
    Ok(stats)
}
