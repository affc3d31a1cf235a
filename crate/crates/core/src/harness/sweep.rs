//! ε-sweeps: independent (ε, replication) jobs on a worker pool, aggregated
//! in job order so output never depends on scheduling.

use super::config::{ExperimentConfig, ModelKind};
use super::HarnessError;
use crate::arrival::ArrivalFamily;
use crate::linalg::SquareMatrix;
use crate::markov::{autocovariance, DEFAULT_TAIL_TOL};
use crate::ssq::{
    heavy_traffic_mean, laplace_prediction, prelimit_bounds, simulate_ssq, sqrt_window, BoundInputs, SsqConfig,
    SsqStats,
};
use crate::stats::Estimate;
use crate::switch::{optimality_ratio, simulate_switch, switch_prediction, universal_lower, SwitchConfig, SwitchStats};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Largest deviation of mean unused service from its target, in batch-means
/// standard errors, that a run may show.
pub const UNUSED_Z_LIMIT: f64 = 4.0;

/// Worker count: available parallelism, capped by `HTQ_THREADS` when set.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("HTQ_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => k.min(available),
            _ => {
                log::warn!("ignoring HTQ_THREADS={v:?}; expected a positive integer");
                available
            }
        },
        Err(_) => available,
    }
}

fn pool() -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build().expect("thread pool")
}

/// SplitMix64 finalizer, used to spread job seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at grid index `k`.
pub fn job_seed(base: u64, k: usize, rep: usize) -> u64 {
    mix(base ^ mix(((k as u64) << 32) | rep as u64))
}

/// Mean over replications with a replication t-interval, plus a pooled
/// batch-means standard error that exists even for a single replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pooled {
    pub mean: f64,
    /// 95% half-width across replications; NaN with one replication.
    pub ci: f64,
    pub std_error: f64,
}

impl Pooled {
    pub fn of(estimates: &[Estimate]) -> Pooled {
        let means: Vec<f64> = estimates.iter().map(|e| e.mean).collect();
        let across = Estimate::from_means(&means);
        let r = estimates.len() as f64;
        let std_error = (estimates.iter().map(|e| e.std_error * e.std_error).sum::<f64>()).sqrt() / r;
        Pooled { mean: across.mean, ci: across.half_width, std_error }
    }

    pub fn ci(&self) -> Option<f64> {
        self.ci.is_finite().then_some(self.ci)
    }

    /// The replication interval when available, else 1.96 pooled standard errors.
    pub fn half_width(&self) -> f64 {
        self.ci().unwrap_or(1.96 * self.std_error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MgfRecord {
    pub theta: f64,
    pub estimate: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsqRecord {
    pub epsilon: f64,
    pub m_window: usize,
    pub mean_q: f64,
    pub scaled_mean_q: Pooled,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    /// `(σ_a² + σ_s²)/2` with `σ_a²` of the chain at this ε.
    pub prediction: f64,
    /// Same with the limiting `σ_a²`.
    pub limit_prediction: f64,
    pub ratio: f64,
    pub mean_unused: f64,
    pub unused_z_max: f64,
    pub mgf: Vec<MgfRecord>,
    pub seed: u64,
    pub slots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchRecord {
    pub epsilon: f64,
    pub n: usize,
    pub scaled_sum_q: Pooled,
    /// `(1 − 1/2N)‖σ‖²` with per-queue variances at this ε.
    pub prediction: f64,
    pub limit_prediction: f64,
    pub universal_lower: f64,
    pub ratio: f64,
    /// Measured scaled total over the universal lower bound.
    pub lower_ratio: f64,
    pub perp_k_sq: f64,
    pub perp_l_sq: f64,
    pub parallel_k_sq: f64,
    pub sum_unused: f64,
    pub unused_z_max: f64,
    pub collapse_violations: u64,
    pub seed: u64,
    pub slots: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub ratio: f64,
    pub ratio_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub model: ModelKind,
    pub rows: Vec<SummaryRow>,
    /// Weighted least-squares line in ε over the whole grid, evaluated at 0.
    pub extrapolated_ratio: Option<f64>,
    pub extrapolated_std_error: Option<f64>,
    /// Richardson elimination of a `√ε` error term between the two smallest ε.
    pub sqrt_richardson_ratio: Option<f64>,
    pub sqrt_richardson_std_error: Option<f64>,
    /// Switch only: `2 − 1/N`, the limit of the measured-to-lower-bound ratio.
    pub optimality_ratio: Option<f64>,
    /// Switch only: measured scaled total over the universal lower bound, per ε.
    pub lower_ratios: Vec<f64>,
    pub warnings: Vec<String>,
    /// Invariant breaches; a non-empty list is a failed sweep.
    pub failures: Vec<String>,
}

impl fmt::Display for SweepSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10}  {:>10}  {:>10}", "epsilon", "ratio", "±95%")?;
        for r in &self.rows {
            writeln!(f, "{:>10}  {:>10.4}  {:>10.4}", r.epsilon, r.ratio, r.ratio_half_width)?;
        }
        let show = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.4}"));
        let pm = |s: Option<f64>| s.map_or(String::new(), |s| format!(" ± {:.4}", 1.96 * s));
        writeln!(
            f,
            "extrapolated ratio (weighted fit in ε): {}{}",
            show(self.extrapolated_ratio),
            pm(self.extrapolated_std_error)
        )?;
        writeln!(
            f,
            "extrapolated ratio (Richardson in √ε): {}{}",
            show(self.sqrt_richardson_ratio),
            pm(self.sqrt_richardson_std_error)
        )?;
        if let Some(r) = self.optimality_ratio {
            let measured: Vec<String> = self.lower_ratios.iter().map(|x| format!("{x:.3}")).collect();
            writeln!(f, "measured / universal lower bound: [{}], limit {r:.4}", measured.join(", "))?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for e in &self.failures {
            writeln!(f, "FAILED: {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsqSweep {
    pub records: Vec<SsqRecord>,
    pub runs: Vec<Vec<SsqStats>>,
    pub summary: SweepSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchSweep {
    pub records: Vec<SwitchRecord>,
    pub runs: Vec<Vec<SwitchStats>>,
    pub summary: SweepSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepOutcome {
    Ssq(SsqSweep),
    Switch(SwitchSweep),
}

impl SweepOutcome {
    pub fn summary(&self) -> &SweepSummary {
        match self {
            SweepOutcome::Ssq(s) => &s.summary,
            SweepOutcome::Switch(s) => &s.summary,
        }
    }

    pub fn to_csv(&self) -> String {
        match self {
            SweepOutcome::Ssq(s) => ssq_csv(&s.records),
            SweepOutcome::Switch(s) => switch_csv(&s.records),
        }
    }
}

/// Two-point Richardson extrapolation assuming `y(ε) = y₀ + b√ε + …`, using
/// the two smallest ε. Returns `(y₀, standard error)`; the error is `None`
/// when either input error is unavailable.
pub fn richardson_sqrt(eps: &[f64], ys: &[f64], ses: &[f64]) -> Option<(f64, Option<f64>)> {
    let n = eps.len();
    if n < 2 {
        return None;
    }
    let (mut i, mut j) = (n - 2, n - 1);
    if eps[i] < eps[j] {
        std::mem::swap(&mut i, &mut j);
    }
    // eps[i] > eps[j]
    let (r1, r2) = (eps[i].sqrt(), eps[j].sqrt());
    if !(r1 > r2) {
        return None;
    }
    let y0 = (r1 * ys[j] - r2 * ys[i]) / (r1 - r2);
    let se = (ses[i].is_finite() && ses[j].is_finite())
        .then(|| ((r1 * ses[j]).powi(2) + (r2 * ses[i]).powi(2)).sqrt() / (r1 - r2));
    Some((y0, se))
}

/// Weighted least-squares line through `(x, y)` evaluated at `x = 0`, with
/// its standard error. Weights are `1/se²`; any non-positive or non-finite
/// `se` falls back to equal weights and no standard error.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64], ses: &[f64]) -> Option<(f64, Option<f64>)> {
    if xs.len() < 2 {
        return None;
    }
    let weighted = ses.iter().all(|s| s.is_finite() && *s > 0.0);
    let w: Vec<f64> = ses.iter().map(|s| if weighted { 1.0 / (s * s) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).zip(&w).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let se = weighted.then(|| (1.0 / sw + mx * mx / sxx).sqrt());
    Some((my - sxy / sxx * mx, se))
}

fn summarize(model: ModelKind, eps: &[f64], est: &[Pooled], pred: &[f64], mut failures: Vec<String>) -> SweepSummary {
    let rows: Vec<SummaryRow> = eps
        .iter()
        .zip(est)
        .zip(pred)
        .map(|((&e, p), &pr)| SummaryRow { epsilon: e, ratio: p.mean / pr, ratio_half_width: p.half_width() / pr })
        .collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let ses: Vec<f64> = est.iter().zip(pred).map(|(p, pr)| p.std_error / pr).collect();
    let linear = extrapolate_to_zero(eps, &ratios, &ses);
    let richardson = richardson_sqrt(eps, &ratios, &ses);
    let mut warnings = Vec::new();
    for k in 1..eps.len() {
        let (gap_prev, gap) = ((est[k - 1].mean - pred[k - 1]).abs(), (est[k].mean - pred[k]).abs());
        if gap > gap_prev + est[k].half_width() + est[k - 1].half_width() {
            let msg = format!(
                "gap to prediction grows from {gap_prev:.4} at ε = {} to {gap:.4} at ε = {}",
                eps[k - 1],
                eps[k]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if ratios.iter().any(|r| !r.is_finite()) {
        failures.push("non-finite ratio".into());
    }
    SweepSummary {
        model,
        extrapolated_ratio: linear.map(|r| r.0),
        extrapolated_std_error: linear.and_then(|r| r.1),
        sqrt_richardson_ratio: richardson.map(|r| r.0),
        sqrt_richardson_std_error: richardson.and_then(|r| r.1),
        rows,
        optimality_ratio: None,
        lower_ratios: Vec::new(),
        warnings,
        failures,
    }
}

/// Runs every (ε, replication) job of `jobs` on the worker pool, preserving order.
fn run_jobs<T: Send, E: Send>(
    config: &ExperimentConfig,
    job: impl Fn(usize, f64, u64) -> Result<T, E> + Sync,
) -> Result<Vec<Vec<T>>, E> {
    let reps = config.replications;
    let jobs: Vec<(usize, usize)> = (0..config.epsilons.len()).flat_map(|k| (0..reps).map(move |r| (k, r))).collect();
    let results: Vec<Result<T, E>> = pool()
        .install(|| jobs.par_iter().map(|&(k, r)| job(k, config.epsilons[k], job_seed(config.seed, k, r))).collect());
    let mut grouped: Vec<Vec<T>> = (0..config.epsilons.len()).map(|_| Vec::with_capacity(reps)).collect();
    for ((k, _), res) in jobs.into_iter().zip(results) {
        grouped[k].push(res?);
    }
    Ok(grouped)
}

fn sigma_matrix_at(family: &ArrivalFamily, eps: f64) -> Result<SquareMatrix, HarnessError> {
    let chains = family.queue_chains(eps)?;
    let n = chains.len();
    let mut out = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = autocovariance(&chains[i][j], 0, DEFAULT_TAIL_TOL)?.sigma_sq;
        }
    }
    Ok(out)
}

pub fn run_ssq_sweep(config: &ExperimentConfig) -> Result<SsqSweep, HarnessError> {
    let family = config.validate()?;
    let service = config.service_distribution()?;
    let sigma_s_sq = service.variance();
    let runs = run_jobs(config, |_, eps, seed| {
        let mut c = SsqConfig::new(family.clone(), eps, service.clone(), config.horizon, seed);
        c.burn_in = config.burn_in_for(eps);
        c.thetas = config.thetas.clone();
        c.batches = config.batches;
        simulate_ssq(&c)
    })?;

    let limit_sigma = family.limit_sigma_sq()?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&eps, reps) in config.epsilons.iter().zip(&runs) {
        let chain = family.chain(eps)?;
        let m = sqrt_window(eps);
        let summary = autocovariance(&chain, m, DEFAULT_TAIL_TOL)?;
        let bounds = prelimit_bounds(
            m,
            &BoundInputs {
                eps,
                gamma: &summary.gamma,
                sigma_s_sq,
                a_max: chain.a_max(),
                s_max: service.s_max(),
                lambda: chain.lambda(),
                envelope: &summary.envelope,
            },
        );
        let sigma_a = summary.sigma_sq;
        let prediction = heavy_traffic_mean(sigma_a, sigma_s_sq);
        let scaled: Vec<Estimate> = reps.iter().map(|r| r.scaled_mean_q).collect();
        let scaled_mean_q = Pooled::of(&scaled);
        let unused_z_max = reps.iter().map(|r| r.unused_z()).fold(0.0, f64::max);
        if !(unused_z_max < UNUSED_Z_LIMIT) {
            failures.push(format!("unused service off by {unused_z_max:.2} standard errors at ε = {eps}"));
        }
        let mgf = config
            .thetas
            .iter()
            .enumerate()
            .map(|(i, &theta)| MgfRecord {
                theta,
                estimate: reps.iter().map(|r| r.mgf[i].estimate.mean).sum::<f64>() / reps.len() as f64,
                prediction: laplace_prediction(theta, sigma_a, sigma_s_sq),
            })
            .collect();
        records.push(SsqRecord {
            epsilon: eps,
            m_window: m,
            mean_q: reps.iter().map(|r| r.mean_q.mean).sum::<f64>() / reps.len() as f64,
            scaled_mean_q,
            lower_bound: bounds.lower,
            upper_bound: bounds.upper.value(),
            prediction,
            limit_prediction: heavy_traffic_mean(limit_sigma, sigma_s_sq),
            ratio: scaled_mean_q.mean / prediction,
            mean_unused: reps.iter().map(|r| r.mean_unused.mean).sum::<f64>() / reps.len() as f64,
            unused_z_max,
            mgf,
            seed: reps[0].seed,
            slots: config.horizon * reps.len() as u64,
        });
    }
    let est: Vec<Pooled> = records.iter().map(|r| r.scaled_mean_q).collect();
    let pred: Vec<f64> = records.iter().map(|r| r.prediction).collect();
    let summary = summarize(ModelKind::Ssq, &config.epsilons, &est, &pred, failures);
    Ok(SsqSweep { records, runs, summary })
}

pub fn run_switch_sweep(config: &ExperimentConfig) -> Result<SwitchSweep, HarnessError> {
    let family = config.validate()?;
    let runs = run_jobs(config, |_, eps, seed| {
        let mut c = SwitchConfig::new(family.clone(), eps, config.horizon, seed);
        c.burn_in = config.burn_in_for(eps);
        c.batches = config.batches;
        simulate_switch(&c)
    })?;

    let limit = switch_prediction(&family.limit_sigma_matrix()?);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (&eps, reps) in config.epsilons.iter().zip(&runs) {
        let sigma = sigma_matrix_at(&family, eps)?;
        let n = sigma.dim();
        let prediction = switch_prediction(&sigma);
        let lower = universal_lower(&sigma);
        let scaled: Vec<Estimate> = reps.iter().map(|r| r.scaled_sum_q).collect();
        let scaled_sum_q = Pooled::of(&scaled);
        let avg = |f: &dyn Fn(&SwitchStats) -> f64| reps.iter().map(f).sum::<f64>() / reps.len() as f64;
        let unused_z_max = reps.iter().map(|r| r.unused_z()).fold(0.0, f64::max);
        if !(unused_z_max < UNUSED_Z_LIMIT) {
            failures.push(format!("unused service off by {unused_z_max:.2} standard errors at ε = {eps}"));
        }
        let collapse_violations: u64 = reps.iter().map(|r| r.collapse_violations).sum();
        if collapse_violations > 0 {
            failures.push(format!("{collapse_violations} slots with ‖Q_⊥L‖ > ‖Q_⊥K‖ at ε = {eps}"));
        }
        records.push(SwitchRecord {
            epsilon: eps,
            n,
            scaled_sum_q,
            prediction,
            limit_prediction: limit,
            universal_lower: lower,
            ratio: scaled_sum_q.mean / prediction,
            lower_ratio: scaled_sum_q.mean / lower,
            perp_k_sq: avg(&|r| r.perp_k_sq.mean),
            perp_l_sq: avg(&|r| r.perp_l_sq.mean),
            parallel_k_sq: avg(&|r| r.parallel_k_sq.mean),
            sum_unused: avg(&|r| r.sum_unused.mean),
            unused_z_max,
            collapse_violations,
            seed: reps[0].seed,
            slots: config.horizon * reps.len() as u64,
        });
    }
    let est: Vec<Pooled> = records.iter().map(|r| r.scaled_sum_q).collect();
    let pred: Vec<f64> = records.iter().map(|r| r.prediction).collect();
    let mut summary = summarize(ModelKind::Switch, &config.epsilons, &est, &pred, failures);
    summary.optimality_ratio = records.first().map(|r| optimality_ratio(r.n));
    summary.lower_ratios = records.iter().map(|r| r.lower_ratio).collect();
    Ok(SwitchSweep { records, runs, summary })
}

/// Runs the configured sweep and writes the CSV to `output` when set.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome, HarnessError> {
    let outcome = match config.model {
        ModelKind::Ssq => SweepOutcome::Ssq(run_ssq_sweep(config)?),
        ModelKind::Switch => SweepOutcome::Switch(run_switch_sweep(config)?),
    };
    if let Some(path) = &config.output {
        std::fs::write(path, outcome.to_csv()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(outcome)
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("NA".to_string(), num)
}

fn write_rows(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn ssq_csv(records: &[SsqRecord]) -> String {
    let mut header: Vec<String> = [
        "epsilon",
        "m_window",
        "mean_q",
        "scaled_mean_q",
        "ci",
        "lower_bound",
        "upper_bound",
        "prediction",
        "mean_unused",
    ]
    .map(String::from)
    .to_vec();
    if let Some(r) = records.first() {
        header.extend(r.mgf.iter().map(|m| format!("mgf_theta_{}", m.theta)));
        header.extend(r.mgf.iter().map(|m| format!("laplace_pred_{}", m.theta)));
    }
    header.extend(["seed", "slots", "ratio", "limit_prediction", "std_error", "unused_z_max"].map(String::from));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                num(r.epsilon),
                r.m_window.to_string(),
                num(r.mean_q),
                num(r.scaled_mean_q.mean),
                opt(r.scaled_mean_q.ci()),
                num(r.lower_bound),
                opt(r.upper_bound),
                num(r.prediction),
                num(r.mean_unused),
            ];
            row.extend(r.mgf.iter().map(|m| num(m.estimate)));
            row.extend(r.mgf.iter().map(|m| num(m.prediction)));
            row.extend([
                r.seed.to_string(),
                r.slots.to_string(),
                num(r.ratio),
                num(r.limit_prediction),
                num(r.scaled_mean_q.std_error),
                num(r.unused_z_max),
            ]);
            row
        })
        .collect();
    write_rows(header, rows)
}

fn switch_csv(records: &[SwitchRecord]) -> String {
    let header = [
        "epsilon",
        "n",
        "scaled_sum_q",
        "ci",
        "prediction",
        "universal_lower",
        "perp_k_sq",
        "perp_l_sq",
        "parallel_k_sq",
        "sum_unused",
        "seed",
        "slots",
        "ratio",
        "lower_ratio",
        "limit_prediction",
        "std_error",
        "unused_z_max",
        "collapse_violations",
    ]
    .map(String::from)
    .to_vec();
    let rows = records
        .iter()
        .map(|r| {
            vec![
                num(r.epsilon),
                r.n.to_string(),
                num(r.scaled_sum_q.mean),
                opt(r.scaled_sum_q.ci()),
                num(r.prediction),
                num(r.universal_lower),
                num(r.perp_k_sq),
                num(r.perp_l_sq),
                num(r.parallel_k_sq),
                num(r.sum_unused),
                r.seed.to_string(),
                r.slots.to_string(),
                num(r.ratio),
                num(r.lower_ratio),
                num(r.limit_prediction),
                num(r.scaled_sum_q.std_error),
                num(r.unused_z_max),
                r.collapse_violations.to_string(),
            ]
        })
        .collect();
    write_rows(header, rows)
}
