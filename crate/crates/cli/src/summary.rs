use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;

pub const VERSION: &str = concat!("finsler-lab ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    /// Signed slack: nonnegative when the assertion holds.
    pub margin: f64,
    pub witness: Option<String>,
}

impl Assertion {
    /// `value ≤ bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        let margin = bound - value;
        Self {
            name: name.into(),
            passed: margin >= 0.0,
            margin,
            witness: (margin < 0.0).then(|| format!("{value:.6e} > {bound:.6e}")),
        }
    }

    pub fn holds(name: &str, passed: bool, witness: Option<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            margin: if passed { 0.0 } else { -1.0 },
            witness: if passed { None } else { witness },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub command: String,
    pub config: ScenarioConfig,
    pub passed: bool,
    pub assertions: Vec<Assertion>,
    pub worst_margin: Option<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunSummary {
    pub fn new(command: &str, config: &ScenarioConfig) -> Self {
        Self {
            version: VERSION.into(),
            command: command.into(),
            config: config.clone(),
            passed: true,
            assertions: Vec::new(),
            worst_margin: None,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    pub fn assert(&mut self, a: Assertion) {
        self.passed &= a.passed;
        self.worst_margin = Some(self.worst_margin.map_or(a.margin, |w| w.min(a.margin)));
        self.assertions.push(a);
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
