//! Named invariant checks against independent oracles.
//!
//! `Fast` runs the oracle and identity suites; `Full` adds the simulation
//! acceptance checks from [`super::acceptance`].

use super::acceptance;
use crate::arrival::{make_two_state_family, saturated_rate_matrix, two_state_chain, RateMatrixSpec, RateRule, Target};
use crate::linalg::SquareMatrix;
use crate::markov::{
    autocovariance, build_chain, chain_envelope, mixing_profile, total_variation, FiniteMarkovChain, DEFAULT_TAIL_TOL,
};
use crate::ssq::{simulate_ssq_trace, window_m, ServiceDistribution, SsqConfig};
use crate::stats::chi_square_uniform_p;
use crate::switch::geometry::generators;
use crate::switch::sim::simulate_switch_trace;
use crate::switch::{
    brute_force_project_K, brute_force_schedules, max_weight_schedule, norm_parallel_L_sq, project_K, project_L,
    QueueMatrix, Schedule, SwitchModel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// A scheduler under test: returns a perfect matching for a queue matrix.
pub type Scheduler<'a> = &'a (dyn Fn(&QueueMatrix, &mut ChaCha8Rng) -> Schedule + Sync);

pub fn default_scheduler(q: &QueueMatrix, rng: &mut ChaCha8Rng) -> Schedule {
    max_weight_schedule(q, rng)
}

pub fn verify(level: Level) -> Report {
    verify_with(level, &default_scheduler)
}

/// Runs the suite with a substitute scheduler, for fault injection.
pub fn verify_with(level: Level, scheduler: Scheduler<'_>) -> Report {
    let mut checks = vec![
        reference_chain(),
        stationary_vs_power_iteration(),
        envelope_dominates_tv(),
        gamma_closed_form(),
        initial_bias_bound(),
        ssq_window_minimality(),
        ssq_trace_identities(),
        scheduler_optimality(scheduler),
        tie_uniformity(scheduler),
        maxweight_cone_gain(scheduler),
        l_projection_oracle(),
        cone_oracle(),
        cone_invariants(),
        switch_trace_identities(),
    ];
    if level == Level::Full {
        match acceptance::run_sweeps() {
            Ok(s) => checks.extend(acceptance::simulation_criteria(&s)),
            Err(e) => checks.push(Check::new("acceptance.sweeps", false, e.to_string())),
        }
    }
    Report { checks }
}

/// Irreducible aperiodic chain on 2–`max_states` states: random sparse rows
/// plus a positive cycle and diagonal.
pub fn random_chain<R: Rng>(rng: &mut R, max_states: usize) -> FiniteMarkovChain {
    let n = rng.random_range(2..=max_states);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| {
                    let keep = j == i || j == (i + 1) % n || rng.random_bool(0.6);
                    if keep {
                        rng.random_range(0.05..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        })
        .collect();
    let emission = (0..n).map(|_| rng.random_range(0..=3)).collect();
    build_chain((0..n).map(|i| format!("s{i}")).collect(), &rows, emission).expect("valid random chain")
}

fn random_distribution<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

pub fn reference_chain() -> Check {
    let name = "markov.reference_chain";
    let c = match build_chain(vec!["off".into(), "on".into()], &[vec![0.9, 0.1], vec![0.5, 0.5]], vec![0, 2]) {
        Ok(c) => c,
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let pi = &c.stationary().probabilities;
    let s = match autocovariance(&c, 10, DEFAULT_TAIL_TOL) {
        Ok(s) => s,
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let gamma_err = (0..=10).map(|t| (s.gamma[t] - 5.0 / 9.0 * 0.4f64.powi(t as i32)).abs()).fold(0.0, f64::max);
    let ok = (pi[0] - 5.0 / 6.0).abs() < 1e-12
        && (c.lambda() - 1.0 / 3.0).abs() < 1e-12
        && gamma_err < 1e-12
        && (s.sigma_sq - 35.0 / 27.0).abs() < 1e-9;
    Check::new(name, ok, format!("λ = {:.12}, σ² = {:.12}, max γ error {gamma_err:.1e}", c.lambda(), s.sigma_sq))
}

pub fn stationary_vs_power_iteration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = random_chain(&mut rng, 6);
        let mut mu = vec![1.0 / c.len() as f64; c.len()];
        for _ in 0..5000 {
            mu = c.transition().vec_mul(&mu);
        }
        worst = worst.max(total_variation(&mu, &c.stationary().probabilities));
    }
    Check::new("markov.stationary_vs_power_iteration", worst < 1e-10, format!("max TV gap {worst:.2e} over 50 chains"))
}

pub fn envelope_dominates_tv() -> Check {
    let name = "markov.envelope_dominates_tv";
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let c = random_chain(&mut rng, 6);
        let env = match chain_envelope(&c) {
            Ok(e) => e,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        for (i, d) in mixing_profile(&c, 50).iter().enumerate() {
            worst = worst.max(d - env.tv_bound(i + 1));
        }
    }
    Check::new(name, worst <= 1e-12, format!("max (TV − Cα^m) over 100 chains, m ≤ 50: {worst:.2e}"))
}

pub fn gamma_closed_form() -> Check {
    let name = "markov.gamma_closed_form";
    let mut worst = 0.0f64;
    for (k, r, rate) in [(2u32, 0.4, 1.0 / 3.0), (3, 0.8, 0.9), (1, 0.0, 0.5), (4, 0.95, 0.2), (2, 0.6, 1.7)] {
        let chain = match two_state_chain(k, r, rate) {
            Ok(c) => c,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        let on = rate / k as f64;
        let g0 = (k as f64).powi(2) * on * (1.0 - on);
        let s = match autocovariance(&chain, 60, DEFAULT_TAIL_TOL) {
            Ok(s) => s,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        for t in 0..=60 {
            worst = worst.max((s.gamma[t] - g0 * r.powi(t as i32)).abs());
        }
        worst = worst.max((s.sigma_sq - g0 * (1.0 + r) / (1.0 - r)).abs() / (1.0 + g0 / (1.0 - r)));
    }
    Check::new(name, worst < 1e-10, format!("max deviation from k²p(1−p)r^t: {worst:.2e}"))
}

/// `|E[f(X^m)] − λ| ≤ 2 A_max C α^m` from arbitrary starting laws, computed exactly.
pub fn initial_bias_bound() -> Check {
    let name = "markov.initial_bias_bound";
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..50 {
        let c = random_chain(&mut rng, 6);
        let env = match chain_envelope(&c) {
            Ok(e) => e,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        let f: Vec<f64> = c.emission().iter().map(|&x| x as f64).collect();
        let mut mu = random_distribution(&mut rng, c.len());
        for m in 1..=50 {
            mu = c.transition().vec_mul(&mu);
            let bias = (crate::linalg::dot(&mu, &f) - c.lambda()).abs();
            worst = worst.max(bias - 2.0 * c.a_max() as f64 * env.tv_bound(m));
        }
    }
    Check::new(name, worst <= 1e-12, format!("max (bias − 2A_max Cα^m) over 50 starts, m ≤ 50: {worst:.2e}"))
}

pub fn ssq_window_minimality() -> Check {
    let name = "ssq.window_minimality";
    let fam = match make_two_state_family(2, 0.4, Target::Scalar(0.5)) {
        Ok(f) => f.with_rule(RateRule::Shifted),
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let mut ok = true;
    let mut prev = 0;
    let mut shown = Vec::new();
    for eps in [0.2, 0.1, 0.05, 0.02, 0.01, 0.001] {
        let Ok(chain) = fam.chain(eps) else { return Check::new(name, false, "chain") };
        let Ok(env) = chain_envelope(&chain) else { return Check::new(name, false, "envelope") };
        let m = window_m(eps, chain.a_max(), &env);
        let lhs = |m: usize| 2.0 * chain.a_max() as f64 * env.partial_geometric(m);
        ok &= lhs(m) < m as f64 * eps / 2.0;
        ok &= m == 1 || lhs(m - 1) >= (m - 1) as f64 * eps / 2.0;
        ok &= m >= prev;
        prev = m;
        shown.push(m.to_string());
    }
    Check::new(name, ok, format!("m(ε) along the grid: {}", shown.join(", ")))
}

pub fn ssq_trace_identities() -> Check {
    let name = "ssq.trace_identities";
    let service = match ServiceDistribution::new(vec![0.1, 0.3, 0.4, 0.2]) {
        Ok(s) => s,
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let fam = match make_two_state_family(3, 0.7, Target::Scalar(service.mean())) {
        Ok(f) => f.with_rule(RateRule::Shifted),
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let trace = match simulate_ssq_trace(&SsqConfig::new(fam, 0.05, service, 1_000_000, 17), 200_000) {
        Ok(t) => t,
        Err(e) => return Check::new(name, false, e.to_string()),
    };
    let bad = trace.iter().filter(|r| r.q_next * r.u != 0 || r.u > r.s || r.q_next + r.s != r.q + r.a + r.u).count();
    Check::new(name, bad == 0, format!("{bad} violating slots of {}", trace.len()))
}

fn random_queue<R: Rng>(rng: &mut R, n: usize, max: u64) -> QueueMatrix {
    QueueMatrix::from_rows(&(0..n).map(|_| (0..n).map(|_| rng.random_range(0..=max)).collect()).collect::<Vec<_>>())
        .expect("square")
}

pub fn scheduler_optimality(scheduler: Scheduler<'_>) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut mismatches = 0;
    for trial in 0..1000 {
        let n = 2 + trial % 4;
        let q = random_queue(&mut rng, n, [1, 4, 30, 1000][trial % 4]);
        let oracle = brute_force_schedules(&q).expect("N ≤ 5");
        let s = scheduler(&q, &mut rng);
        if !oracle.contains(&s) {
            mismatches += 1;
        }
    }
    Check::new(
        "switch.scheduler_optimality",
        mismatches == 0,
        format!("{mismatches} mismatches in 1000 matrices, N ∈ 2..=5"),
    )
}

pub fn tie_uniformity(scheduler: Scheduler<'_>) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let zeros = QueueMatrix::zeros(3);
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for _ in 0..6000 {
        *counts.entry(scheduler(&zeros, &mut rng).permutation).or_default() += 1;
    }
    let mut c: Vec<u64> = counts.values().copied().collect();
    c.resize(6, 0);
    let p = chi_square_uniform_p(&c);
    Check::new("switch.tie_uniformity", p > 0.01, format!("counts {c:?}, chi-square p = {p:.3}"))
}

/// `⟨q, S − v⟩ ≥ v_min ‖q_⊥K‖` for the chosen schedule `S` and saturated `v`.
pub fn maxweight_cone_gain(scheduler: Scheduler<'_>) -> Check {
    let name = "switch.maxweight_cone_gain";
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..500 {
        let n = 2 + trial % 4;
        let Ok(v) = saturated_rate_matrix(&RateMatrixSpec::Random { n, seed: trial as u64 }) else {
            return Check::new(name, false, "rate matrix");
        };
        let q = random_queue(&mut rng, n, 50);
        let qr = q.to_real();
        let perp = match project_K(&qr) {
            Ok(d) => d.perp.norm(),
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        if perp == 0.0 {
            continue;
        }
        let s = scheduler(&q, &mut rng);
        let gain = s.weight(q.as_slice()) as f64 - qr.inner(&v);
        worst = worst.max(v.min_entry() * perp - gain);
    }
    Check::new(name, worst <= 1e-6, format!("max (v_min‖q_⊥K‖ − ⟨q, S − v⟩) = {worst:.3e}"))
}

fn random_real<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SquareMatrix {
    SquareMatrix::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

pub fn l_projection_oracle() -> Check {
    use nalgebra::{DMatrix, DVector};
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (mut dev, mut idem, mut orth, mut norm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..1000 {
        let n = 1 + trial % 6;
        let x = random_real(&mut rng, n, 10.0);
        let y = random_real(&mut rng, n, 10.0);
        let gens = generators(n);
        let g = DMatrix::from_fn(n * n, 2 * n, |k, c| gens[c].as_slice()[k]);
        let w = g.clone().svd(true, true).solve(&DVector::from_column_slice(x.as_slice()), 1e-12).expect("svd");
        let lsq = g * w;
        let p = project_L(&x);
        dev = dev.max(p.as_slice().iter().zip(lsq.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        idem = idem.max(project_L(&p).max_abs_diff(&p));
        orth = orth.max(x.sub(&p).inner(&project_L(&y)).abs() / (x.norm() * y.norm()));
        norm = norm.max((norm_parallel_L_sq(&x) - p.norm_sq()).abs());
    }
    let ok = dev <= 1e-10 && idem <= 1e-12 && orth <= 1e-9 && norm <= 1e-10;
    Check::new(
        "switch.l_projection_oracle",
        ok,
        format!(
            "least-squares gap {dev:.1e}, idempotence {idem:.1e}, orthogonality {orth:.1e}, norm formula {norm:.1e}"
        ),
    )
}

pub fn cone_oracle() -> Check {
    let name = "switch.cone_oracle";
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = random_real(&mut rng, 3, 5.0);
        match project_K(&x) {
            Ok(d) => worst = worst.max(d.parallel.max_abs_diff(&brute_force_project_K(&x))),
            Err(e) => return Check::new(name, false, e.to_string()),
        }
    }
    Check::new(
        name,
        worst <= 1e-7,
        format!("max deviation from active-set enumeration {worst:.2e} (200 matrices, N = 3)"),
    )
}

pub fn cone_invariants() -> Check {
    let name = "switch.cone_invariants";
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut bad = 0;
    for trial in 0..1000 {
        let n = 1 + trial % 8;
        let x = if trial % 2 == 0 {
            random_real(&mut rng, n, 100.0)
        } else {
            SquareMatrix::from_fn(n, |_, _| rng.random_range(0..10_000u32) as f64)
        };
        let d = match project_K(&x) {
            Ok(d) => d,
            Err(e) => return Check::new(name, false, e.to_string()),
        };
        let scale = 1.0 + x.norm_sq();
        let ok = d.parallel.add(&d.perp).max_abs_diff(&x) <= 1e-9
            && d.parallel.inner(&d.perp).abs() <= 1e-8 * scale
            && generators(n).iter().all(|g| d.perp.inner(g) <= 1e-9 * scale.sqrt())
            && d.row_weights.iter().chain(&d.col_weights).all(|&w| w >= 0.0)
            && x.sub(&project_L(&x)).norm() <= d.perp.norm() + 1e-9;
        bad += (!ok) as usize;
    }
    Check::new(
        name,
        bad == 0,
        format!("{bad} of 1000 decompositions break reconstruction, Moreau, polarity or ‖x_⊥L‖ ≤ ‖x_⊥K‖"),
    )
}

pub fn switch_trace_identities() -> Check {
    let name = "switch.trace_identities";
    let Ok(v) = saturated_rate_matrix(&RateMatrixSpec::Uniform { n: 3 }) else {
        return Check::new(name, false, "rates");
    };
    let model = match make_two_state_family(2, 0.4, Target::Matrix(v))
        .and_then(|f| f.queue_chains(0.05))
        .map_err(|e| e.to_string())
        .and_then(|c| SwitchModel::new(c).map_err(|e| e.to_string()))
    {
        Ok(m) => m,
        Err(e) => return Check::new(name, false, e),
    };
    let trace = simulate_switch_trace(&model, 50_000, 19);
    let n = 3;
    let mut bad = 0;
    for slot in &trace {
        for i in 0..n {
            let (mut row, mut col) = (0, 0);
            for j in 0..n {
                let (u, qn) = (slot.u.get(i, j), slot.q_next.get(i, j));
                let s = slot.schedule.serves(i, j) as u64;
                if u * qn != 0 || u > s || qn + s != slot.q.get(i, j) + slot.a.get(i, j) + u {
                    bad += 1;
                }
                row += u;
                col += slot.u.get(j, i);
            }
            if row > 1 || col > 1 {
                bad += 1;
            }
        }
    }
    Check::new(name, bad == 0, format!("{bad} violations over {} slots", trace.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_chains_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let c = random_chain(&mut rng, 6);
            assert!(c.len() >= 2 && c.len() <= 6);
            assert!(c.stationarity_residual() < 1e-10);
        }
    }

    #[test]
    fn check_display() {
        let c = Check::new("x.y", false, "detail");
        assert_eq!(c.to_string(), "FAIL x.y: detail");
        let r = Report { checks: vec![c, Check::new("a", true, "ok")] };
        assert!(!r.passed());
        assert_eq!(r.failures().count(), 1);
        assert!(r.to_string().ends_with("2 checks, 1 failed"));
    }
}
