use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Outward,
    Inward,
}

/// The comparison side of `compare`. Either a surface preset or an abstract
/// unit normal at `point` with a diagonal shape operator `spectrum`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarConfig {
    pub metric: String,
    pub surface: Option<String>,
    pub point: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub spectrum: Option<Vec<f64>>,
}

impl Default for BarConfig {
    fn default() -> Self {
        Self {
            metric: "euclidean".into(),
            surface: None,
            point: None,
            direction: None,
            spectrum: None,
        }
    }
}

/// One scenario. Every field has a default, so a config file only lists what
/// it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Metric preset, e.g. `hyperbolic-randers:k=1,eps=0.05`.
    pub metric: String,
    pub dim: usize,
    /// Surface preset, e.g. `geodesic-sphere:r=0.5`.
    pub surface: String,
    pub side: Side,
    pub bar: Option<BarConfig>,
    /// Curvature bound `K ≤ −k²`; `theorem3` measures it when absent.
    pub k: Option<f64>,
    /// T-curvature bound; `theorem3` measures it when absent.
    pub delta: Option<f64>,
    /// Relative safety factor applied to a measured `(k̂, δ̂)`.
    pub certificate_slack: f64,
    pub certificate_samples: usize,
    pub t_max: f64,
    /// Surface samples, random flags, or random functions per `λ`.
    pub samples: usize,
    /// Time intervals for CSV output and grid checks.
    pub grid: usize,
    /// Overrides the command's default assertion tolerance.
    pub tolerance: Option<f64>,
    pub point: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub spectrum: Option<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            metric: "euclidean".into(),
            dim: 2,
            surface: "sphere:r=1".into(),
            side: Side::Outward,
            bar: None,
            k: None,
            delta: None,
            certificate_slack: 0.25,
            certificate_samples: 200,
            t_max: 3.0,
            samples: 16,
            grid: 30,
            tolerance: None,
            point: None,
            direction: None,
            spectrum: None,
            lambdas: vec![0.0, 0.5, 1.0],
            seed: 0,
            out: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return bad(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.samples == 0 || self.grid == 0 {
            return bad("samples and grid must be positive".into());
        }
        if !(self.certificate_slack >= 0.0) {
            return bad(format!("certificate_slack must be nonnegative, got {}", self.certificate_slack));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return bad(format!("tolerance must be nonnegative, got {t}"));
            }
        }
        for (name, v) in [("k", self.k), ("delta", self.delta)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    return bad(format!("{name} must be nonnegative, got {v}"));
                }
            }
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return bad("lambdas must be nonnegative".into());
        }
        Ok(())
    }
}
