//! The ten acceptance criteria, evaluated on desk-scale sweeps.
//!
//! Criteria 1–8 need the four simulation sweeps from [`run_sweeps`]; 9 and 10
//! are pure oracle comparisons.

use super::config::{ExperimentConfig, FamilySpec, ModelKind};
use super::sweep::{run_ssq_sweep, run_switch_sweep, Pooled, SsqSweep, SweepSummary, SwitchRecord, SwitchSweep};
use super::verify::{self, Check, Scheduler};
use super::HarnessError;
use crate::arrival::RateMatrixSpec;

pub const HORIZON: u64 = 20_000_000;
pub const REPLICATIONS: usize = 4;
/// ε at which the limit tolerances are checked.
pub const CHECK_EPS: f64 = 0.02;

pub struct Sweeps {
    pub ssq: SsqSweep,
    pub ssq_iid: SsqSweep,
    pub switch2: SwitchSweep,
    pub switch3: SwitchSweep,
}

pub fn ssq_config() -> ExperimentConfig {
    ExperimentConfig { horizon: HORIZON, replications: REPLICATIONS, ..ExperimentConfig::default_for(ModelKind::Ssq) }
}

pub fn ssq_iid_config() -> ExperimentConfig {
    ExperimentConfig { family: FamilySpec::Iid { values: vec![1], probabilities: vec![1.0] }, seed: 2, ..ssq_config() }
}

pub fn switch_config(n: usize) -> ExperimentConfig {
    ExperimentConfig {
        rates: RateMatrixSpec::Uniform { n },
        horizon: HORIZON,
        replications: REPLICATIONS,
        seed: 10 + n as u64,
        ..ExperimentConfig::default_for(ModelKind::Switch)
    }
}

pub fn run_sweeps() -> Result<Sweeps, HarnessError> {
    Ok(Sweeps {
        ssq: run_ssq_sweep(&ssq_config())?,
        ssq_iid: run_ssq_sweep(&ssq_iid_config())?,
        switch2: run_switch_sweep(&switch_config(2))?,
        switch3: run_switch_sweep(&switch_config(3))?,
    })
}

fn at<T>(records: &[T], eps: impl Fn(&T) -> f64, target: f64) -> Option<&T> {
    records.iter().find(|r| (eps(r) - target).abs() < 1e-12)
}

fn extrapolated_text(s: &SweepSummary) -> String {
    match (s.extrapolated_ratio, s.extrapolated_std_error) {
        (Some(x), Some(se)) => format!("{x:.4} (± {:.4})", 1.96 * se),
        (Some(x), None) => format!("{x:.4}"),
        _ => "NA".into(),
    }
}

fn richardson_text(s: &SweepSummary) -> String {
    match (s.sqrt_richardson_ratio, s.sqrt_richardson_std_error) {
        (Some(x), Some(se)) => format!("√ε Richardson {x:.4} (± {:.4})", 1.96 * se),
        (Some(x), None) => format!("√ε Richardson {x:.4}"),
        _ => "√ε Richardson NA".into(),
    }
}

fn ssq_limit(name: &str, s: &SsqSweep, extra: Option<(bool, String)>) -> Check {
    let Some(r) = at(&s.records, |r| r.epsilon, CHECK_EPS) else {
        return Check::new(name, false, format!("no record at ε = {CHECK_EPS}"));
    };
    let err = (r.ratio - 1.0).abs();
    let ex = s.summary.extrapolated_ratio;
    let mut ok = err <= 0.15 && ex.is_some_and(|x| (0.95..=1.05).contains(&x));
    let mut detail = format!(
        "ratio at ε = {CHECK_EPS}: {:.4} (|ratio − 1| = {err:.4} ≤ 0.15); extrapolated {} ∈ [0.95, 1.05]; {}",
        r.ratio,
        extrapolated_text(&s.summary),
        richardson_text(&s.summary)
    );
    if let Some((extra_ok, extra_detail)) = extra {
        ok &= extra_ok;
        detail.push_str("; ");
        detail.push_str(&extra_detail);
    }
    Check::new(name, ok, detail)
}

/// Criterion 1: single-server heavy-traffic mean.
pub fn criterion_1(s: &SsqSweep) -> Check {
    ssq_limit("1 single-server limit", s, None)
}

/// Criterion 2: simulated scaled mean inside the finite-ε bounds (±2 CI).
pub fn criterion_2(s: &SsqSweep) -> Check {
    let mut worst = Vec::new();
    let mut ok = true;
    for r in &s.records {
        let hw = r.scaled_mean_q.half_width();
        let x = r.scaled_mean_q.mean;
        let inside = x >= r.lower_bound - 2.0 * hw && r.upper_bound.is_none_or(|u| x <= u + 2.0 * hw);
        ok &= inside;
        let up = r.upper_bound.map_or("∞".to_string(), |u| format!("{u:.3}"));
        worst.push(format!("ε={}: {:.3} ≤ {x:.3} ≤ {up}", r.epsilon, r.lower_bound));
    }
    Check::new("2 finite-ε bounds", ok, worst.join("; "))
}

/// Criterion 3: exponential limit via the Laplace transform at ε = 0.02.
pub fn criterion_3(s: &SsqSweep) -> Check {
    let Some(r) = at(&s.records, |r| r.epsilon, CHECK_EPS) else {
        return Check::new("3 exponential limit", false, "no record");
    };
    let errs: Vec<(f64, f64)> = r.mgf.iter().map(|m| (m.theta, (m.estimate / m.prediction - 1.0).abs())).collect();
    let ok = !errs.is_empty() && errs.iter().all(|(_, e)| *e <= 0.05);
    let detail = errs.iter().map(|(t, e)| format!("θ={t}: rel err {e:.4}")).collect::<Vec<_>>().join(", ");
    Check::new("3 exponential limit", ok, format!("{detail} (≤ 0.05)"))
}

/// Criterion 4: Bernoulli arrivals reproduce the i.i.d. heavy-traffic value.
pub fn criterion_4(s: &SsqSweep) -> Check {
    // Bernoulli(λ) arrivals have σ_a² = λ(1 − λ); with Bernoulli(µ) service the
    // prediction is (λ(1 − λ) + µ(1 − µ))/2.
    let mu = 0.5;
    let worst = s
        .records
        .iter()
        .map(|r| {
            let lambda = mu - r.epsilon;
            (r.prediction - (lambda * (1.0 - lambda) + mu * (1.0 - mu)) / 2.0).abs()
        })
        .fold(0.0, f64::max);
    ssq_limit("4 i.i.d. regression", s, Some((worst < 1e-12, format!("prediction vs λ(1−λ) formula {worst:.1e}"))))
}

fn switch_limit_part(s: &SwitchSweep) -> (bool, String) {
    let Some(r) = at(&s.records, |r| r.epsilon, CHECK_EPS) else {
        return (false, "no record".into());
    };
    let n = r.n;
    let err = (r.ratio - 1.0).abs();
    let ex = s.summary.extrapolated_ratio;
    let ok = err <= 0.15 && ex.is_some_and(|x| (0.9..=1.1).contains(&x));
    (
        ok,
        format!(
            "N={n}: ratio {:.4} (≤ 0.15 off), extrapolated {}, {}",
            r.ratio,
            extrapolated_text(&s.summary),
            richardson_text(&s.summary)
        ),
    )
}

/// Criterion 5: switch heavy-traffic limit for N = 2 and N = 3.
pub fn criterion_5(s2: &SwitchSweep, s3: &SwitchSweep) -> Check {
    let (a, da) = switch_limit_part(s2);
    let (b, db) = switch_limit_part(s3);
    Check::new("5 switch limit", a && b, format!("{da}; {db}; extrapolation ∈ [0.9, 1.1]"))
}

fn lower_part(s: &SwitchSweep) -> (bool, String) {
    let recs: &[SwitchRecord] = &s.records;
    let above = recs.iter().all(|r| r.scaled_sum_q.mean >= r.universal_lower - 2.0 * r.scaled_sum_q.half_width());
    let target = s.summary.optimality_ratio.unwrap_or(f64::NAN);
    let (first, last) = (recs.first().map(|r| r.lower_ratio), recs.last().map(|r| r.lower_ratio));
    let approaching = match (first, last) {
        (Some(f), Some(l)) => (l - target).abs() < (f - target).abs(),
        _ => false,
    };
    let ratios: Vec<String> = recs.iter().map(|r| format!("{:.3}", r.lower_ratio)).collect();
    (
        above && approaching,
        format!("N={}: measured/lower [{}] → {target:.4}", recs.first().map_or(0, |r| r.n), ratios.join(", ")),
    )
}

/// Criterion 6: universal lower bound and the `2 − 1/N` optimality ratio.
pub fn criterion_6(s2: &SwitchSweep, s3: &SwitchSweep) -> Check {
    let (a, da) = lower_part(s2);
    let (b, db) = lower_part(s3);
    Check::new("6 universal lower bound", a && b, format!("{da}; {db}"))
}

fn collapse_part(s: &SwitchSweep) -> (bool, String) {
    let (Some(hi), Some(lo)) = (at(&s.records, |r| r.epsilon, 0.1), at(&s.records, |r| r.epsilon, CHECK_EPS)) else {
        return (false, "missing ε = 0.1 or 0.02".into());
    };
    let perp = lo.perp_k_sq.max(hi.perp_k_sq) / lo.perp_k_sq.min(hi.perp_k_sq);
    let par = lo.parallel_k_sq / hi.parallel_k_sq;
    (perp <= 2.0 && par >= 15.0, format!("N={}: ‖Q_⊥K‖² factor {perp:.3} (≤ 2), ‖Q_∥K‖² factor {par:.1} (≥ 15)", lo.n))
}

/// Criterion 7: state-space collapse between ε = 0.1 and ε = 0.02.
pub fn criterion_7(s2: &SwitchSweep, s3: &SwitchSweep) -> Check {
    let (a, da) = collapse_part(s2);
    let (b, db) = collapse_part(s3);
    Check::new("7 state-space collapse", a && b, format!("{da}; {db}"))
}

/// Criterion 8: unused-service identities on every run.
pub fn criterion_8(s: &Sweeps) -> Check {
    let ssq = s.ssq.runs.iter().chain(&s.ssq_iid.runs).flatten().map(|r| r.unused_z());
    let sw = s.switch2.runs.iter().chain(&s.switch3.runs).flatten().map(|r| r.unused_z());
    let zs: Vec<f64> = ssq.chain(sw).collect();
    let worst = zs.iter().copied().fold(0.0, f64::max);
    Check::new(
        "8 unused-service identities",
        !zs.is_empty() && zs.iter().all(|z| *z < 4.0),
        format!("max |mean − target| over {} runs: {worst:.2} standard errors (< 4)", zs.len()),
    )
}

/// Criterion 9: scheduler and projections against brute-force oracles.
pub fn criterion_9(scheduler: Scheduler<'_>) -> Check {
    let parts = [verify::scheduler_optimality(scheduler), verify::cone_oracle(), verify::l_projection_oracle()];
    let ok = parts.iter().all(|c| c.passed);
    Check::new("9 oracle equivalence", ok, parts.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; "))
}

/// Criterion 10: mixing envelope, closed-form autocovariance, initial-bias bound.
pub fn criterion_10() -> Check {
    let parts = [verify::envelope_dominates_tv(), verify::gamma_closed_form(), verify::initial_bias_bound()];
    let ok = parts.iter().all(|c| c.passed);
    Check::new("10 mixing machinery", ok, parts.iter().map(|c| c.detail.clone()).collect::<Vec<_>>().join("; "))
}

pub fn simulation_criteria(s: &Sweeps) -> Vec<Check> {
    vec![
        criterion_1(&s.ssq),
        criterion_2(&s.ssq),
        criterion_3(&s.ssq),
        criterion_4(&s.ssq_iid),
        criterion_5(&s.switch2, &s.switch3),
        criterion_6(&s.switch2, &s.switch3),
        criterion_7(&s.switch2, &s.switch3),
        criterion_8(s),
    ]
}

pub fn pooled_text(p: &Pooled) -> String {
    match p.ci() {
        Some(ci) => format!("{:.4} ± {ci:.4}", p.mean),
        None => format!("{:.4} (se {:.4})", p.mean, p.std_error),
    }
}
