//! Acceptance criteria 1–10. Criteria 1–8 run the desk-scale sweeps
//! (two single-server families, switches with N = 2 and N = 3, four
//! replications of 2·10⁷ slots per ε), so this target takes several minutes
//! on one core.

use htq::harness::acceptance::{self, criterion_10, criterion_9, run_sweeps, simulation_criteria};
use htq::harness::verify::default_scheduler;
use std::io::Write;
use std::time::Instant;

// Written straight to the stdout handle so the lines show without --nocapture.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance_criteria() {
    let mut results = Vec::new();

    let start = Instant::now();
    match run_sweeps() {
        Ok(sweeps) => results.extend(simulation_criteria(&sweeps)),
        Err(e) => panic!("acceptance sweeps failed to run: {e}"),
    }
    let sweep_time = start.elapsed();

    let start = Instant::now();
    let c9 = criterion_9(&default_scheduler);
    let oracle_time = start.elapsed();
    let ok9 = c9.passed && oracle_time.as_secs_f64() <= 60.0;
    results.push(htq::harness::Check::new(
        c9.name.clone(),
        ok9,
        format!("{} ({:.1} s ≤ 60 s)", c9.detail, oracle_time.as_secs_f64()),
    ));
    results.push(criterion_10());

    report(&format!(
        "acceptance sweeps: {:.0} s, {} slots per replication",
        sweep_time.as_secs_f64(),
        acceptance::HORIZON
    ));
    for (k, check) in results.iter().enumerate() {
        let status = if check.passed { "PASS" } else { "FAIL" };
        report(&format!("criterion {}: {status} {}: {}", k + 1, check.name, check.detail));
    }
    let failed: Vec<&str> = results.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
