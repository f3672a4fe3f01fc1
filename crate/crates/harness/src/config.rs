//! Experiment configuration: defaults per experiment, JSON files and CLI overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sigtrace_core::exit::SamplerParams;
use sigtrace_core::geometry::GeometryError;
use sigtrace_core::GridSpec;

/// Everything that determines a run; the output directory is not echoed into reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub trials: usize,
    pub level: u32,
    pub epsilon: f64,
    /// `None` selects the experiment's own rule (usually `ε²`).
    pub phi: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Signature truncation level N.
    pub truncation: usize,
    pub theta: f64,
    /// Thresholds for the no-atom tests.
    pub deltas: Vec<f64>,
    /// ε values for sweeps.
    pub epsilons: Vec<f64>,
    pub sampler: String,
    /// Walk-on-spheres stopping shell.
    pub shell: f64,
    /// Euler time step.
    pub dt: f64,
    pub max_steps: usize,
    pub builder: String,
    /// Trials of the trace refinement-stability check.
    pub refinement_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: String::new(),
            seed: 20_240_601,
            trials: 10_000,
            level: 16,
            epsilon: 0.1,
            phi: None,
            alpha: 2.0,
            beta: 3.0,
            truncation: 6,
            theta: 1e-8,
            deltas: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            epsilons: vec![0.4, 0.2, 0.1],
            sampler: "walk-on-spheres".into(),
            shell: 1e-9,
            dt: 1e-7,
            max_steps: 10_000_000,
            builder: "leftmost".into(),
            refinement_trials: 0,
            out: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config names experiment {found:?}, expected {expected:?}")]
    Mismatch { expected: String, found: String },
}

/// Flags given on the command line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub epsilon: Option<f64>,
    pub phi: Option<f64>,
    pub level: Option<u32>,
    pub truncation: Option<usize>,
    pub theta: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// `φ`, falling back to `ε²`.
    pub fn phi_or_square(&self) -> f64 {
        self.phi.unwrap_or(self.epsilon * self.epsilon)
    }

    pub fn grid(&self) -> Result<GridSpec, GeometryError> {
        GridSpec::new(self.epsilon, self.phi_or_square(), self.alpha, self.beta)
    }

    pub fn sampler_params(&self) -> SamplerParams {
        SamplerParams {
            shell: self.shell,
            dt: self.dt,
            max_steps: self.max_steps,
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// The part of the configuration echoed into reports.
    pub fn echo(&self) -> Self {
        Self {
            out: None,
            ..self.clone()
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.trials {
            self.trials = v;
        }
        if let Some(v) = o.epsilon {
            self.epsilon = v;
        }
        if let Some(v) = o.phi {
            self.phi = Some(v);
        }
        if let Some(v) = o.level {
            self.level = v;
        }
        if let Some(v) = o.truncation {
            self.truncation = v;
        }
        if let Some(v) = o.theta {
            self.theta = v;
        }
        if let Some(v) = &o.epsilons {
            self.epsilons = v.clone();
        }
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
    }

    /// Fields present in `patch` replace those of `self`.
    pub fn merged(&self, patch: &Value) -> Result<Self, ConfigError> {
        let mut base = serde_json::to_value(self)?;
        if let (Value::Object(b), Value::Object(p)) = (&mut base, patch) {
            for (k, v) in p {
                b.insert(k.clone(), v.clone());
            }
        }
        let merged: Self = serde_json::from_value(base)?;
        if merged.experiment != self.experiment {
            return Err(ConfigError::Mismatch {
                expected: self.experiment.clone(),
                found: merged.experiment,
            });
        }
        Ok(merged)
    }

    pub fn merged_file(&self, path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        self.merged(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            experiment: "lemc2".into(),
            ..Default::default()
        }
    }

    #[test]
    fn merge_overrides_only_given_fields() {
        let c = base().merged(&json!({"trials": 7, "epsilon": 0.25})).unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.epsilon, 0.25);
        assert_eq!(c.level, base().level);
    }

    #[test]
    fn merge_rejects_unknown_and_mismatched() {
        assert!(matches!(base().merged(&json!({"trails": 7})), Err(ConfigError::Parse(_))));
        assert!(matches!(
            base().merged(&json!({"experiment": "lemc1"})),
            Err(ConfigError::Mismatch { .. })
        ));
    }

    #[test]
    fn cli_overrides_win() {
        let mut c = base();
        c.apply(&Overrides {
            seed: Some(3),
            phi: Some(0.5),
            out: Some("x".into()),
            ..Default::default()
        });
        assert_eq!(c.seed, 3);
        assert_eq!(c.phi, Some(0.5));
        assert_eq!(c.echo().out, None);
        let v = serde_json::to_value(c.echo()).unwrap();
        assert!(v.get("out").is_none());
    }

    #[test]
    fn round_trip() {
        let c = base();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
