//! Structured, serialisable record of one inequality chain.
//!
//! Field order and float formatting are fixed so that identical inputs give
//! byte-identical JSON.

use crate::numerics::min_median_max;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofPath {
    Knothe,
    Transport,
    Abp,
    MichaelSimon,
    AlphaChain,
}

impl ProofPath {
    pub fn name(self) -> &'static str {
        match self {
            ProofPath::Knothe => "knothe",
            ProofPath::Transport => "transport",
            ProofPath::Abp => "abp",
            ProofPath::MichaelSimon => "michael_simon",
            ProofPath::AlphaChain => "alpha_chain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NodeStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

impl NodeStats {
    pub fn from_values(mut values: Vec<f64>) -> Option<Self> {
        values.retain(|v| !v.is_nan());
        let count = values.len();
        min_median_max(&mut values).map(|(min, median, max)| NodeStats {
            min,
            median,
            max,
            count,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stage {
    pub stage: String,
    /// The formula or statement this stage checks.
    pub anchor: String,
    pub node_stats: Option<NodeStats>,
    pub integrated_values: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Stage {
    pub fn new(stage: &str, anchor: &str) -> Self {
        Stage {
            stage: stage.to_string(),
            anchor: anchor.to_string(),
            node_stats: None,
            integrated_values: BTreeMap::new(),
            tolerance: 0.0,
            pass: false,
            note: None,
        }
    }

    pub fn stats(mut self, values: Vec<f64>) -> Self {
        self.node_stats = NodeStats::from_values(values);
        self
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.integrated_values.insert(key.to_string(), v);
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }

    pub fn pass(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Environment {
    pub dim: usize,
    pub resolution: f64,
    pub corpus_item: String,
    pub seed: u64,
    pub tol_scale: f64,
    pub version: String,
}

impl Environment {
    pub fn new(dim: usize, resolution: f64, corpus_item: &str, seed: u64, tol_scale: f64) -> Self {
        Environment {
            dim,
            resolution,
            corpus_item: corpus_item.to_string(),
            seed,
            tol_scale,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub proof_path: ProofPath,
    pub environment: Environment,
    pub stages: Vec<Stage>,
    pub pass: bool,
}

impl Certificate {
    pub fn new(proof_path: ProofPath, environment: Environment) -> Self {
        Certificate {
            proof_path,
            environment,
            stages: Vec::new(),
            pass: true,
        }
    }

    pub fn push(&mut self, stage: Stage) {
        self.pass &= stage.pass;
        self.stages.push(stage);
    }

    pub fn stage(&self, name: &str) -> Option<&Stage> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Integrated value `key` of stage `stage`.
    pub fn value(&self, stage: &str, key: &str) -> Option<f64> {
        self.stage(stage).and_then(|s| s.integrated_values.get(key).copied())
    }

    pub fn failed_stages(&self) -> Vec<&str> {
        self.stages.iter().filter(|s| !s.pass).map(|s| s.stage.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overall_pass_is_conjunction() {
        let mut c = Certificate::new(ProofPath::Knothe, Environment::default());
        c.push(Stage::new("a", "x").pass(true));
        assert!(c.pass);
        c.push(Stage::new("b", "y").pass(false));
        assert!(!c.pass);
        assert_eq!(c.failed_stages(), vec!["b"]);
    }

    #[test]
    fn nan_is_excluded_from_stats() {
        let s = NodeStats::from_values(vec![3.0, f64::NAN, 1.0, 2.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.count), (1.0, 2.0, 3.0, 3));
    }

    #[test]
    fn json_is_stable() {
        let mut c = Certificate::new(ProofPath::Abp, Environment::new(2, 0.125, "const1", 7, 1.0));
        c.push(Stage::new("s", "a").value("z", 1.0).value("a", 0.1).pass(true));
        assert_eq!(c.to_json(), c.clone().to_json());
        assert!(c.to_json().find("\"a\"").unwrap() < c.to_json().find("\"z\"").unwrap());
    }
}
