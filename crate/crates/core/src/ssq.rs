//! Discrete-time single-server queue with Markov-modulated arrivals.
//!
//! In slot `t` the queue holds `Q^t`, receives `A^t = f(X^t)` arrivals and
//! offers `S^t` units of i.i.d. service after the arrivals:
//!
//! ```text
//! Q^{t+1} = max(Q^t + A^t − S^t, 0) = Q^t + A^t − S^t + U^t,     Q^{t+1} U^t = 0.
//! ```
//!
//! With `λ = µ − ε`, the scaled steady-state mean `εE[Q]` tends to
//! `(σ_a² + σ_s²)/2` and `εQ` to an exponential law with that mean. For every
//! finite ε the mean is sandwiched by [`prelimit_bounds`], which charge the
//! correlation between queue and arrivals to the first `m` autocovariances
//! plus a mixing remainder `C α^m`.

use crate::arrival::{ArrivalError, ArrivalFamily};
use crate::markov::{ChainWalker, MixingEnvelope};
use crate::stats::{BatchAccumulator, Estimate, DEFAULT_BATCHES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsqError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("queue keeps growing: quarter means {quarters:?}")]
    UnstableRun { quarters: [f64; 4] },
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
}

pub type Result<T, E = SsqError> = std::result::Result<T, E>;

/// One slot of the recursion. Returns `(Q^{t+1}, U^t)`.
#[inline]
pub fn ssq_step(q: u64, a: u64, s: u64) -> (u64, u64) {
    let inflow = q + a;
    if inflow >= s {
        (inflow - s, 0)
    } else {
        (0, s - inflow)
    }
}

/// Finite-support i.i.d. service law over `{0, …, S_max}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceDistribution {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl ServiceDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(SsqError::ConfigInvalid(format!("service law {probabilities:?}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(SsqError::ConfigInvalid(format!("service law sums to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(ServiceDistribution { probabilities, cumulative })
    }

    pub fn bernoulli(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(SsqError::ConfigInvalid(format!("Bernoulli service rate {mu}")));
        }
        Self::new(vec![1.0 - mu, mu])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(s, p)| s as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.probabilities.iter().enumerate().map(|(s, p)| (s as f64 - mu).powi(2) * p).sum()
    }

    /// Largest service value with positive probability.
    pub fn s_max(&self) -> u64 {
        self.probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64
    }

    #[inline]
    pub fn sample(&self, u: f64) -> u64 {
        let last = self.cumulative.len() - 1;
        self.cumulative[..last].iter().position(|&c| u < c).unwrap_or(last) as u64
    }
}

/// `max(10/ε², 10⁵)` slots: the relaxation time grows like `1/ε²`.
pub fn default_burn_in(eps: f64) -> u64 {
    ((10.0 / (eps * eps)).ceil() as u64).max(100_000)
}

#[derive(Debug, Clone)]
pub struct SsqConfig {
    pub family: ArrivalFamily,
    pub eps: f64,
    pub service: ServiceDistribution,
    /// Total simulated slots, burn-in included.
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// θ values (≤ 0) at which `E[exp(εθQ)]` is estimated.
    pub thetas: Vec<f64>,
    pub batches: usize,
}

impl SsqConfig {
    pub fn new(family: ArrivalFamily, eps: f64, service: ServiceDistribution, horizon: u64, seed: u64) -> Self {
        SsqConfig {
            family,
            eps,
            service,
            horizon,
            burn_in: default_burn_in(eps),
            seed,
            thetas: vec![-0.5, -1.0, -2.0],
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mu = self.service.mean();
        if !(self.eps > 0.0 && self.eps < mu) {
            return Err(SsqError::ConfigInvalid(format!("epsilon {} not in (0, µ = {mu})", self.eps)));
        }
        if self.burn_in >= self.horizon {
            return Err(SsqError::ConfigInvalid(format!("burn-in {} ≥ horizon {}", self.burn_in, self.horizon)));
        }
        if self.horizon - self.burn_in < self.batches as u64 {
            return Err(SsqError::ConfigInvalid("fewer recorded slots than batches".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t <= 0.0)) {
            return Err(SsqError::ConfigInvalid(format!("theta {t} must be ≤ 0")));
        }
        let lambda = self.family.chain(self.eps)?.lambda();
        if (lambda - (mu - self.eps)).abs() > 1e-10 {
            return Err(SsqError::ConfigInvalid(format!(
                "arrival rate {lambda} is not µ − ε = {}; single-server families use the shifted rate rule",
                mu - self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfEstimate {
    pub theta: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsqStats {
    pub eps: f64,
    pub mean_q: Estimate,
    pub scaled_mean_q: Estimate,
    pub mean_unused: Estimate,
    pub mgf: Vec<MgfEstimate>,
    /// Mean queue length in each quarter of the recorded window.
    pub quarter_means: [f64; 4],
    pub recorded_slots: u64,
    pub seed: u64,
}

impl SsqStats {
    /// `|Ū − ε|` in batch-means standard errors (`E[U] = µ − λ = ε`).
    pub fn unused_z(&self) -> f64 {
        self.mean_unused.z_score(self.eps)
    }

    pub fn mgf_at(&self, theta: f64) -> Option<&Estimate> {
        self.mgf.iter().find(|m| m.theta == theta).map(|m| &m.estimate)
    }
}

/// `exp(εθq)` by table lookup; queue lengths are small integers.
struct ExpTable {
    rate: f64,
    values: Vec<f64>,
}

impl ExpTable {
    fn new(rate: f64) -> Self {
        let mut t = ExpTable { rate, values: Vec::new() };
        t.grow(1024);
        t
    }

    fn grow(&mut self, len: usize) {
        let start = self.values.len();
        self.values.extend((start..len).map(|q| (self.rate * q as f64).exp()));
    }

    #[inline]
    fn get(&mut self, q: u64) -> f64 {
        let q = q as usize;
        if q >= self.values.len() {
            self.grow(2 * q + 1);
        }
        self.values[q]
    }
}

/// One simulated slot, for trace-level checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRecord {
    pub q: u64,
    pub a: u64,
    pub s: u64,
    pub u: u64,
    pub q_next: u64,
}

fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut arrivals = ChaCha8Rng::seed_from_u64(seed);
    arrivals.set_stream(1);
    let mut service = ChaCha8Rng::seed_from_u64(seed);
    service.set_stream(2);
    (arrivals, service)
}

/// Runs the queue for `slots` slots from `Q⁰ = 0`, chain at a stationary draw, recording every slot.
pub fn simulate_ssq_trace(config: &SsqConfig, slots: usize) -> Result<Vec<SlotRecord>> {
    let chain = config.family.chain(config.eps)?;
    let (mut arr_rng, mut srv_rng) = rngs(config.seed);
    let mut walker = ChainWalker::stationary(&chain, &mut arr_rng);
    let mut q = 0u64;
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        let a = walker.emission() as u64;
        let s = config.service.sample(srv_rng.random());
        let (q_next, u) = ssq_step(q, a, s);
        out.push(SlotRecord { q, a, s, u, q_next });
        q = q_next;
        walker.advance(&mut arr_rng);
    }
    Ok(out)
}

/// Simulates one replication and returns time averages after burn-in with
/// batch-means intervals. Deterministic in `config.seed`.
pub fn simulate_ssq(config: &SsqConfig) -> Result<SsqStats> {
    config.validate()?;
    let chain = config.family.chain(config.eps)?;
    let (mut arr_rng, mut srv_rng) = rngs(config.seed);
    let mut walker = ChainWalker::stationary(&chain, &mut arr_rng);

    let recorded = config.horizon - config.burn_in;
    let mut q_acc = BatchAccumulator::new(recorded, config.batches);
    let mut u_acc = BatchAccumulator::new(recorded, config.batches);
    let mut mgf_acc: Vec<_> = config.thetas.iter().map(|_| BatchAccumulator::new(recorded, config.batches)).collect();
    let mut tables: Vec<_> = config.thetas.iter().map(|th| ExpTable::new(config.eps * th)).collect();
    let quarter = (recorded / 4).max(1);
    let mut quarter_sums = [0.0f64; 4];
    let mut quarter_counts = [0u64; 4];

    let mut q = 0u64;
    for t in 0..config.horizon {
        let a = walker.emission() as u64;
        let s = config.service.sample(srv_rng.random());
        let (q_next, u) = ssq_step(q, a, s);
        if t >= config.burn_in {
            let k = (((t - config.burn_in) / quarter) as usize).min(3);
            quarter_sums[k] += q as f64;
            quarter_counts[k] += 1;
            q_acc.push(q as f64);
            u_acc.push(u as f64);
            for (acc, table) in mgf_acc.iter_mut().zip(tables.iter_mut()) {
                acc.push(table.get(q));
            }
        }
        q = q_next;
        walker.advance(&mut arr_rng);
    }

    let quarter_means = std::array::from_fn(|k| quarter_sums[k] / quarter_counts[k].max(1) as f64);
    if is_growing(&quarter_means) {
        return Err(SsqError::UnstableRun { quarters: quarter_means });
    }
    let mean_q = q_acc.estimate();
    let scaled_mean_q = Estimate {
        mean: config.eps * mean_q.mean,
        std_error: config.eps * mean_q.std_error,
        half_width: config.eps * mean_q.half_width,
        batches: mean_q.batches,
    };
    let stats = SsqStats {
        eps: config.eps,
        mean_q,
        scaled_mean_q,
        mean_unused: u_acc.estimate(),
        mgf: config
            .thetas
            .iter()
            .zip(&mgf_acc)
            .map(|(&theta, acc)| MgfEstimate { theta, estimate: acc.estimate() })
            .collect(),
        quarter_means,
        recorded_slots: recorded,
        seed: config.seed,
    };
    if stats.mean_unused.half_width.is_finite()
        && (stats.mean_unused.mean - config.eps).abs() > 4.0 * stats.mean_unused.half_width
    {
        log::warn!(
            "unused service {:.6} deviates from ε = {} by more than 4 half-widths",
            stats.mean_unused.mean,
            config.eps
        );
    }
    Ok(stats)
}

/// Sustained growth across the four quarters of a run: strictly increasing
/// quarter means, ending at more than twice the first quarter plus one, and
/// not decelerating. A stable queue still relaxing from a short burn-in rises
/// concavely and is not flagged.
pub fn is_growing(quarters: &[f64; 4]) -> bool {
    let q = quarters;
    q.windows(2).all(|w| w[1] > w[0]) && q[3] > 2.0 * q[0] + 1.0 && q[3] - q[2] >= 0.5 * (q[1] - q[0])
}

/// Heavy-traffic limit of `εE[Q]`: `(σ_a² + σ_s²)/2`.
pub fn heavy_traffic_mean(sigma_a_sq: f64, sigma_s_sq: f64) -> f64 {
    assert!(sigma_a_sq >= 0.0 && sigma_s_sq >= 0.0, "variances must be non-negative");
    (sigma_a_sq + sigma_s_sq) / 2.0
}

/// Limit of `E[exp(εθQ)]` for `θ ≤ 0`: the Laplace transform of an exponential
/// law with mean `(σ_a² + σ_s²)/2`.
pub fn laplace_prediction(theta: f64, sigma_a_sq: f64, sigma_s_sq: f64) -> f64 {
    assert!(theta <= 0.0, "theta must be ≤ 0");
    1.0 / (1.0 - theta * heavy_traffic_mean(sigma_a_sq, sigma_s_sq))
}

/// Smallest `m ≥ 1` with `2 A_max C (1 − α^m)/(1 − α) < mε/2`.
pub fn window_m(eps: f64, a_max: u32, envelope: &MixingEnvelope) -> usize {
    assert!(eps > 0.0);
    let lhs = |m: usize| 2.0 * a_max as f64 * envelope.partial_geometric(m);
    // The left side is bounded by 2 A_max C/(1 − α), so the search terminates.
    let mut m = 1usize;
    while lhs(m) >= m as f64 * eps / 2.0 {
        m += 1;
    }
    m
}

/// `⌊1/√ε⌋`, the window that sends the finite-ε bounds to the limit.
pub fn sqrt_window(eps: f64) -> usize {
    ((1.0 / eps.sqrt()).floor() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum UpperBound {
    Finite(f64),
    /// `1 − 2 A_max C α^m/ε ≤ 0`: the mixing remainder swamps the drift.
    Vacuous,
}

impl UpperBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            UpperBound::Finite(v) => Some(*v),
            UpperBound::Vacuous => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrelimitBounds {
    pub lower: f64,
    pub upper: UpperBound,
}

impl PrelimitBounds {
    /// `lower − slack ≤ x ≤ upper + slack`, treating a vacuous upper side as `+∞`.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && self.upper.value().is_none_or(|u| x <= u + slack)
    }
}

/// Inputs of [`prelimit_bounds`] that do not change with the window.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub eps: f64,
    /// `γ(0), …, γ(m)` at this ε (at least `m + 1` entries).
    pub gamma: &'a [f64],
    pub sigma_s_sq: f64,
    pub a_max: u32,
    pub s_max: u64,
    pub lambda: f64,
    pub envelope: &'a MixingEnvelope,
}

/// Finite-ε sandwich on `E[εQ]` for window `m`:
///
/// ```text
/// upper = [γ(0) + 2Σ_{i≤m} γ(i) + σ_s² + 2m(A_max+λ)ε + ε²] / [2(1 − 2 A_max C α^m/ε)]
/// lower = [γ(0) + 2Σ_{i≤m} γ(i) + σ_s² − 2m(A_max+λ)ε − S_max ε + ε²] / [2(1 + 2 A_max C α^m/ε)]
/// ```
///
/// The lower side is floored at zero.
pub fn prelimit_bounds(m: usize, inp: &BoundInputs<'_>) -> PrelimitBounds {
    assert!(m >= 1 && inp.gamma.len() > m, "need γ(0..=m)");
    let eps = inp.eps;
    let a_max = inp.a_max as f64;
    let windowed = inp.gamma[0] + 2.0 * inp.gamma[1..=m].iter().sum::<f64>();
    let spread = 2.0 * m as f64 * (a_max + inp.lambda) * eps;
    let mix = 2.0 * a_max * inp.envelope.tv_bound(m) / eps;
    let lower = (windowed + inp.sigma_s_sq - spread - inp.s_max as f64 * eps + eps * eps) / (2.0 * (1.0 + mix));
    let upper = if 1.0 - mix > 0.0 {
        UpperBound::Finite((windowed + inp.sigma_s_sq + spread + eps * eps) / (2.0 * (1.0 - mix)))
    } else {
        UpperBound::Vacuous
    };
    PrelimitBounds { lower: lower.max(0.0), upper }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::{make_iid_family, make_two_state_family, RateRule, Target};
    use crate::markov::{autocovariance, FiniteMarkovChain, DEFAULT_TAIL_TOL};

    /// Stationary law of `Q` for the joint chain `(Q, X)`, by power iteration
    /// on a truncated state space.
    fn exact_queue_law(chain: &FiniteMarkovChain, service: &ServiceDistribution, q_max: usize) -> Vec<f64> {
        let k = chain.len();
        let p = chain.transition();
        let f = chain.emission();
        let mut pi = vec![0.0; (q_max + 1) * k];
        pi[0] = 1.0;
        for _ in 0..200_000 {
            let mut next = vec![0.0; pi.len()];
            for q in 0..=q_max {
                for x in 0..k {
                    let mass = pi[q * k + x];
                    if mass == 0.0 {
                        continue;
                    }
                    for (sv, &ps) in service.probabilities().iter().enumerate() {
                        let q2 = (q + f[x] as usize).saturating_sub(sv).min(q_max);
                        for y in 0..k {
                            next[q2 * k + y] += mass * ps * p.row(x)[y];
                        }
                    }
                }
            }
            let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if change < 1e-14 {
                break;
            }
        }
        pi.chunks(k).map(|c| c.iter().sum()).collect()
    }

    #[test]
    fn simulation_matches_exact_stationary_law() {
        let eps = 0.1;
        let fam = make_two_state_family(2, 0.4, Target::Scalar(0.5)).unwrap().with_rule(RateRule::Shifted);
        let service = ServiceDistribution::bernoulli(0.5).unwrap();
        let law = exact_queue_law(&fam.chain(eps).unwrap(), &service, 400);
        assert!(law[380..].iter().sum::<f64>() < 1e-12);
        let exact_mean: f64 = law.iter().enumerate().map(|(q, p)| eps * q as f64 * p).sum();
        let exact_mgf: f64 = law.iter().enumerate().map(|(q, p)| (-eps * q as f64).exp() * p).sum();

        let mut config = SsqConfig::new(fam, eps, service, 4_000_000, 21);
        config.thetas = vec![-1.0];
        let stats = simulate_ssq(&config).unwrap();
        let m = stats.scaled_mean_q;
        assert!((m.mean - exact_mean).abs() < 3.0 * m.half_width, "{} vs {exact_mean}", m.mean);
        let g = stats.mgf_at(-1.0).unwrap();
        assert!((g.mean - exact_mgf).abs() < 3.0 * g.half_width, "{} vs {exact_mgf}", g.mean);
    }

    #[test]
    fn step_examples() {
        assert_eq!(ssq_step(0, 0, 1), (0, 1));
        assert_eq!(ssq_step(3, 2, 1), (4, 0));
        assert_eq!(ssq_step(1, 0, 3), (0, 2));
    }

    #[test]
    fn predictions() {
        assert!((heavy_traffic_mean(35.0 / 27.0, 0.25) - 0.773148).abs() < 1e-6);
        assert_eq!(heavy_traffic_mean(0.0, 0.0), 0.0);
        assert_eq!(heavy_traffic_mean(1.0, 1.0), 1.0);
        assert_eq!(laplace_prediction(0.0, 0.7, 0.3), 1.0);
        // Mean 0.5 at θ = −2.
        assert!((laplace_prediction(-2.0, 0.5, 0.5) - 0.5).abs() < 1e-15);
        assert!((laplace_prediction(-1.0, 35.0 / 27.0, 0.25) - 0.563969).abs() < 1e-6);
    }

    fn env(c: f64, alpha: f64) -> MixingEnvelope {
        MixingEnvelope { c_const: c, alpha, horizon: 100, exact_mixing: false }
    }

    #[test]
    fn window_examples() {
        assert_eq!(window_m(9.0, 1, &env(1.0, 0.5)), 1);
        let e = env(0.8, 0.6);
        let mut prev = 0;
        for eps in [0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.001] {
            let m = window_m(eps, 2, &e);
            let lhs = |m: usize| 2.0 * 2.0 * 0.8 * (1.0 - 0.6f64.powi(m as i32)) / 0.4;
            assert!(lhs(m) < m as f64 * eps / 2.0);
            if m > 1 {
                assert!(lhs(m - 1) >= (m - 1) as f64 * eps / 2.0);
            }
            assert!(m >= prev);
            prev = m;
        }
    }

    #[test]
    fn bounds_collapse_for_iid_arrivals() {
        let exact = MixingEnvelope { c_const: 1.0, alpha: 1e-9, horizon: 1, exact_mixing: true };
        let gamma = [0.21, 0.0];
        let inp = BoundInputs {
            eps: 0.05,
            gamma: &gamma,
            sigma_s_sq: 0.25,
            a_max: 1,
            s_max: 1,
            lambda: 0.45,
            envelope: &exact,
        };
        let b = prelimit_bounds(1, &inp);
        let spread = 2.0 * 1.45 * 0.05;
        assert!((b.upper.value().unwrap() - (0.46 + spread + 0.0025) / 2.0).abs() < 1e-15);
        assert!((b.lower - (0.46 - spread - 0.05 + 0.0025) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn bounds_vacuous_above_threshold_and_lower_floored() {
        let e = env(0.85, 0.4);
        let gamma = [0.5, 0.2, 0.08];
        let inp =
            BoundInputs { eps: 0.2, gamma: &gamma, sigma_s_sq: 0.25, a_max: 2, s_max: 1, lambda: 0.3, envelope: &e };
        let b = prelimit_bounds(2, &inp);
        assert_eq!(b.upper, UpperBound::Vacuous);
        assert!(b.lower >= 0.0);
        assert!(b.contains(1e6, 0.0));
    }

    #[test]
    fn bounds_bracket_limit_along_the_grid() {
        let fam = make_two_state_family(2, 0.4, Target::Scalar(0.5)).unwrap().with_rule(RateRule::Shifted);
        let limit = heavy_traffic_mean(fam.limit_sigma_sq().unwrap(), 0.25);
        let mut widths = Vec::new();
        for eps in [0.02, 0.01, 0.005, 0.001, 0.0001] {
            let chain = fam.chain(eps).unwrap();
            let m = sqrt_window(eps);
            let s = autocovariance(&chain, m, DEFAULT_TAIL_TOL).unwrap();
            let inp = BoundInputs {
                eps,
                gamma: &s.gamma,
                sigma_s_sq: 0.25,
                a_max: 2,
                s_max: 1,
                lambda: chain.lambda(),
                envelope: &s.envelope,
            };
            let b = prelimit_bounds(m, &inp);
            let up = b.upper.value().unwrap();
            widths.push(up - b.lower);
            assert!(up - b.lower < 10.0 * eps.sqrt(), "eps={eps}: {b:?}");
            assert!(b.lower <= limit + 0.05 && limit <= up + 0.05, "eps={eps}: {b:?} vs {limit}");
        }
        assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
    }

    #[test]
    fn service_law() {
        let s = ServiceDistribution::bernoulli(0.5).unwrap();
        assert_eq!(s.mean(), 0.5);
        assert_eq!(s.variance(), 0.25);
        assert_eq!(s.s_max(), 1);
        assert_eq!(s.sample(0.2), 0);
        assert_eq!(s.sample(0.7), 1);
        assert!(ServiceDistribution::new(vec![0.5, 0.6]).is_err());
        let s = ServiceDistribution::new(vec![0.2, 0.3, 0.5, 0.0]).unwrap();
        assert_eq!(s.s_max(), 2);
    }

    fn bernoulli_config(lambda: f64, mu: f64, horizon: u64, seed: u64) -> SsqConfig {
        let fam = make_iid_family(vec![1], vec![1.0], Target::Scalar(mu)).unwrap().with_rule(RateRule::Shifted);
        let mut c = SsqConfig::new(fam, mu - lambda, ServiceDistribution::bernoulli(mu).unwrap(), horizon, seed);
        c.burn_in = 10_000;
        c
    }

    #[test]
    fn config_validation() {
        let mut c = bernoulli_config(0.3, 0.5, 100_000, 1);
        assert!(c.validate().is_ok());
        c.burn_in = c.horizon;
        assert!(c.validate().is_err());
        let mut c = bernoulli_config(0.3, 0.5, 100_000, 1);
        c.thetas = vec![0.5];
        assert!(c.validate().is_err());
        let fam = make_two_state_family(2, 0.4, Target::Scalar(0.5)).unwrap();
        let c = SsqConfig::new(fam, 0.1, ServiceDistribution::bernoulli(0.5).unwrap(), 1_000_000, 0);
        assert!(matches!(c.validate(), Err(SsqError::ConfigInvalid(_))));
    }

    #[test]
    fn unused_service_matches_epsilon() {
        let stats = simulate_ssq(&bernoulli_config(0.3, 0.5, 1_000_000, 5)).unwrap();
        assert!(stats.unused_z() < 4.0, "{stats:?}");
        assert!((stats.mean_unused.mean - 0.2).abs() < stats.mean_unused.half_width * 4.0);
    }

    #[test]
    fn light_traffic_queue_is_short() {
        let stats = simulate_ssq(&bernoulli_config(0.05, 0.5, 100_000, 2)).unwrap();
        assert!(stats.mean_q.mean < 0.2, "{stats:?}");
    }

    #[test]
    fn identical_seeds_identical_stats() {
        let a = simulate_ssq(&bernoulli_config(0.4, 0.5, 200_000, 9)).unwrap();
        let b = simulate_ssq(&bernoulli_config(0.4, 0.5, 200_000, 9)).unwrap();
        assert_eq!(a, b);
        let c = simulate_ssq(&bernoulli_config(0.4, 0.5, 200_000, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn trace_identities_hold_every_slot() {
        let service = ServiceDistribution::new(vec![0.1, 0.3, 0.4, 0.2]).unwrap();
        let fam = make_two_state_family(3, 0.7, Target::Scalar(service.mean())).unwrap().with_rule(RateRule::Shifted);
        let c = SsqConfig::new(fam, 0.05, service, 1_000_000, 4);
        for r in simulate_ssq_trace(&c, 200_000).unwrap() {
            assert_eq!(r.q_next * r.u, 0);
            assert!(r.u <= r.s);
            assert_eq!(r.q_next as i64, r.q as i64 + r.a as i64 - r.s as i64 + r.u as i64);
        }
    }

    #[test]
    fn mgf_estimates_lie_in_unit_interval() {
        let stats = simulate_ssq(&bernoulli_config(0.45, 0.5, 300_000, 3)).unwrap();
        for m in &stats.mgf {
            assert!(m.estimate.mean > 0.0 && m.estimate.mean <= 1.0);
        }
        assert!(stats.mgf_at(-1.0).is_some());
    }

    #[test]
    fn growth_detector() {
        assert!(is_growing(&[10.0, 20.0, 30.0, 40.0]));
        assert!(!is_growing(&[10.0, 11.0, 10.5, 11.0]));
        assert!(!is_growing(&[0.1, 0.2, 0.3, 0.4]));
        assert!(is_growing(&[10.0, 25.0, 45.0, 70.0]));
        assert!(!is_growing(&[231.2, 421.0, 453.0, 536.7]));
    }
}
