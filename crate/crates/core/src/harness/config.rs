//! JSON experiment configuration.

use super::HarnessError;
use crate::arrival::{
    make_iid_family, make_two_state_family, saturated_rate_matrix, ArrivalFamily, RateMatrixSpec, RateRule, Target,
};
use crate::linalg::SquareMatrix;
use crate::ssq::{default_burn_in, ServiceDistribution};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_EPSILONS: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ssq,
    Switch,
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ssq" => Ok(ModelKind::Ssq),
            "switch" => Ok(ModelKind::Switch),
            other => Err(format!("unknown model `{other}` (expected ssq or switch)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// ON/OFF source emitting `peak` arrivals when ON; `burstiness` is the
    /// second eigenvalue of the chain.
    TwoState {
        peak: u32,
        burstiness: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_queue_burstiness: Option<Vec<Vec<f64>>>,
    },
    /// i.i.d. arrivals with the given law, thinned to the required rate.
    Iid { values: Vec<u32>, probabilities: Vec<f64> },
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::TwoState { peak: 2, burstiness: 0.4, per_queue_burstiness: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub family: FamilySpec,
    /// Service law over `{0, …, S_max}` (single-server model).
    pub service: Vec<f64>,
    /// Saturated rate matrix (switch model).
    pub rates: RateMatrixSpec,
    /// Strictly decreasing heavy-traffic parameters.
    pub epsilons: Vec<f64>,
    /// Slots per replication, burn-in included.
    pub horizon: u64,
    /// `null` uses `max(10/ε², 10⁵)` at each ε.
    pub burn_in: Option<u64>,
    pub replications: usize,
    pub seed: u64,
    pub thetas: Vec<f64>,
    pub batches: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Ssq,
            family: FamilySpec::default(),
            service: vec![0.5, 0.5],
            rates: RateMatrixSpec::Uniform { n: 3 },
            epsilons: DEFAULT_EPSILONS.to_vec(),
            horizon: 20_000_000,
            burn_in: None,
            replications: 4,
            seed: 1,
            thetas: vec![-0.5, -1.0, -2.0],
            batches: crate::stats::DEFAULT_BATCHES,
            output: None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid { field: field.to_string(), message: message.into() }
}

impl ExperimentConfig {
    pub fn default_for(model: ModelKind) -> Self {
        ExperimentConfig { model, ..Default::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Like [`ExperimentConfig::read`], but a missing `model` field means `model`.
    pub fn read_for(path: impl AsRef<Path>, model: ModelKind) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.entry("model").or_insert_with(|| serde_json::to_value(model).expect("model serializes"));
        }
        serde_json::from_value(value).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn burn_in_for(&self, eps: f64) -> u64 {
        self.burn_in.unwrap_or_else(|| default_burn_in(eps))
    }

    pub fn service_distribution(&self) -> Result<ServiceDistribution, HarnessError> {
        ServiceDistribution::new(self.service.clone()).map_err(|e| invalid("service", e.to_string()))
    }

    pub fn rate_matrix(&self) -> Result<SquareMatrix, HarnessError> {
        saturated_rate_matrix(&self.rates).map_err(|e| invalid("rates", e.to_string()))
    }

    /// Arrival family with the rate rule of the configured model.
    pub fn arrival_family(&self) -> Result<ArrivalFamily, HarnessError> {
        let (target, rule) = match self.model {
            ModelKind::Ssq => (Target::Scalar(self.service_distribution()?.mean()), RateRule::Shifted),
            ModelKind::Switch => (Target::Matrix(self.rate_matrix()?), RateRule::Scaled),
        };
        let family = match &self.family {
            FamilySpec::TwoState { peak, burstiness, per_queue_burstiness } => {
                let fam =
                    make_two_state_family(*peak, *burstiness, target).map_err(|e| invalid("family", e.to_string()))?;
                match per_queue_burstiness {
                    None => fam,
                    Some(rows) => {
                        let r = SquareMatrix::from_rows(rows)
                            .ok_or_else(|| invalid("family.per_queue_burstiness", "must be a square matrix"))?;
                        fam.with_per_queue_burstiness(r)
                            .map_err(|e| invalid("family.per_queue_burstiness", e.to_string()))?
                    }
                }
            }
            FamilySpec::Iid { values, probabilities } => make_iid_family(values.clone(), probabilities.clone(), target)
                .map_err(|e| invalid("family", e.to_string()))?,
        };
        Ok(family.with_rule(rule))
    }

    /// Field-level checks; also builds every chain of the sweep once.
    pub fn validate(&self) -> Result<ArrivalFamily, HarnessError> {
        if self.epsilons.is_empty() {
            return Err(invalid("epsilons", "at least one value is required"));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("epsilons", "must be strictly decreasing"));
        }
        let cap = match self.model {
            ModelKind::Ssq => self.service_distribution()?.mean().min(1.0),
            ModelKind::Switch => 1.0,
        };
        if let Some(e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e < cap)) {
            return Err(invalid("epsilons", format!("{e} is outside (0, {cap})")));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.batches < 2 {
            return Err(invalid("batches", "must be at least 2"));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t <= 0.0)) {
            return Err(invalid("thetas", format!("{t} must be ≤ 0")));
        }
        for &eps in &self.epsilons {
            let b = self.burn_in_for(eps);
            if b >= self.horizon || self.horizon - b < self.batches as u64 {
                return Err(invalid(
                    "horizon",
                    format!("{} slots leave too few recorded slots after a burn-in of {b} at ε = {eps}", self.horizon),
                ));
            }
        }
        if self.model == ModelKind::Switch {
            let n = self.rate_matrix()?.dim();
            if n > 64 {
                return Err(invalid("rates", "at most 64 ports are supported"));
            }
        }
        let family = self.arrival_family()?;
        for &eps in &self.epsilons {
            let built = match self.model {
                ModelKind::Ssq => family.chain(eps).map(|_| ()),
                ModelKind::Switch => family.queue_chains(eps).map(|_| ()),
            };
            built.map_err(|e| invalid("family", format!("at ε = {eps}: {e}")))?;
        }
        Ok(family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for model in [ModelKind::Ssq, ModelKind::Switch] {
            let c = ExperimentConfig::default_for(model);
            assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
            assert!(c.validate().is_ok());
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c =
            ExperimentConfig::from_json(r#"{"model": "switch", "rates": {"uniform": {"n": 2}}, "replications": 1}"#)
                .unwrap();
        assert_eq!(c.model, ModelKind::Switch);
        assert_eq!(c.rates, RateMatrixSpec::Uniform { n: 2 });
        assert_eq!(c.epsilons, DEFAULT_EPSILONS.to_vec());
        let c = ExperimentConfig::from_json(r#"{"family": {"kind": "iid", "values": [1], "probabilities": [1.0]}}"#)
            .unwrap();
        assert!(matches!(c.family, FamilySpec::Iid { .. }));
    }

    #[test]
    fn read_for_fills_missing_model() {
        let dir = std::env::temp_dir().join(format!("htq-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("c.json");
        std::fs::write(&path, r#"{"replications": 2}"#).unwrap();
        assert_eq!(ExperimentConfig::read_for(&path, ModelKind::Switch).unwrap().model, ModelKind::Switch);
        std::fs::write(&path, r#"{"model": "ssq"}"#).unwrap();
        assert_eq!(ExperimentConfig::read_for(&path, ModelKind::Switch).unwrap().model, ModelKind::Ssq);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(matches!(ExperimentConfig::from_json(r#"{"epsilon": [0.1]}"#), Err(HarnessError::Parse(_))));
    }

    fn field_of(c: &ExperimentConfig) -> String {
        match c.validate() {
            Err(HarnessError::ConfigInvalid { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        let base = ExperimentConfig::default();
        assert_eq!(field_of(&ExperimentConfig { epsilons: vec![0.1, 0.2], ..base.clone() }), "epsilons");
        assert_eq!(field_of(&ExperimentConfig { epsilons: vec![0.6], ..base.clone() }), "epsilons");
        assert_eq!(field_of(&ExperimentConfig { replications: 0, ..base.clone() }), "replications");
        assert_eq!(field_of(&ExperimentConfig { thetas: vec![1.0], ..base.clone() }), "thetas");
        assert_eq!(field_of(&ExperimentConfig { horizon: 1000, ..base.clone() }), "horizon");
        assert_eq!(field_of(&ExperimentConfig { service: vec![0.5, 0.6], ..base.clone() }), "service");
        let big_peak = FamilySpec::TwoState { peak: 0, burstiness: 0.4, per_queue_burstiness: None };
        assert_eq!(field_of(&ExperimentConfig { family: big_peak, ..base.clone() }), "family");
        let bad_rates = ExperimentConfig {
            model: ModelKind::Switch,
            rates: RateMatrixSpec::Explicit(vec![vec![0.5, 0.4], vec![0.5, 0.6]]),
            ..base
        };
        assert_eq!(field_of(&bad_rates), "rates");
    }
}
