//! Summary of a single chain file, as printed by `htq analyze-chain`.

use super::HarnessError;
use crate::markov::{autocovariance, ChainFile, FiniteMarkovChain, MixingEnvelope, DEFAULT_TAIL_TOL};
use serde::Serialize;
use std::fmt;
use std::path::Path;

/// Lags shown in the γ(t) table.
pub const GAMMA_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainAnalysis {
    pub states: Vec<String>,
    pub pi: Vec<f64>,
    pub lambda: f64,
    pub gamma: Vec<f64>,
    pub sigma_sq: f64,
    pub truncation_lag: usize,
    pub envelope: MixingEnvelope,
}

pub fn analyze_chain(chain: &FiniteMarkovChain) -> Result<ChainAnalysis, HarnessError> {
    let summary = autocovariance(chain, GAMMA_ROWS - 1, DEFAULT_TAIL_TOL)?;
    Ok(ChainAnalysis {
        states: chain.states().to_vec(),
        pi: chain.stationary().probabilities.clone(),
        lambda: chain.lambda(),
        gamma: summary.gamma[..GAMMA_ROWS.min(summary.gamma.len())].to_vec(),
        sigma_sq: summary.sigma_sq,
        truncation_lag: summary.truncation_lag,
        envelope: summary.envelope,
    })
}

pub fn analyze_chain_file(path: impl AsRef<Path>) -> Result<ChainAnalysis, HarnessError> {
    let chain = ChainFile::read(path)?.into_chain()?;
    analyze_chain(&chain)
}

impl fmt::Display for ChainAnalysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "stationary distribution")?;
        for (s, p) in self.states.iter().zip(&self.pi) {
            writeln!(f, "  {s:<12} {p:.10}")?;
        }
        writeln!(f, "lambda     {:.10}", self.lambda)?;
        writeln!(f, "autocovariance")?;
        writeln!(f, "  {:>4}  {:>16}", "t", "gamma(t)")?;
        for (t, g) in self.gamma.iter().enumerate() {
            writeln!(f, "  {t:>4}  {g:>16.12}")?;
        }
        writeln!(f, "sigma^2    {:.10} (series truncated at lag {})", self.sigma_sq, self.truncation_lag)?;
        let env = &self.envelope;
        write!(f, "envelope   C = {:.6}, alpha = {:.6}", env.c_const, env.alpha)?;
        if env.exact_mixing {
            write!(f, " (mixes exactly)")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::two_state_chain;

    #[test]
    fn reference_chain_summary() {
        let chain = two_state_chain(2, 0.4, 1.0 / 3.0).unwrap();
        let a = analyze_chain(&chain).unwrap();
        assert!((a.pi[0] - 5.0 / 6.0).abs() < 1e-12);
        assert!((a.lambda - 1.0 / 3.0).abs() < 1e-12);
        for (t, g) in a.gamma.iter().enumerate() {
            assert!((g - 5.0 / 9.0 * 0.4f64.powi(t as i32)).abs() < 1e-12);
        }
        assert!((a.sigma_sq - 35.0 / 27.0).abs() < 1e-8);
        assert!((a.envelope.alpha - 0.4).abs() < 1e-6);
        let text = a.to_string();
        assert!(text.contains("lambda     0.3333333333"));
        assert!(text.lines().count() > GAMMA_ROWS);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(analyze_chain_file("/nonexistent/chain.json").is_err());
    }
}
