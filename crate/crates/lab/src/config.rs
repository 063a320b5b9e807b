//! Experiment configuration files.
//!
//! A config is one JSON document. `run` accepts either a single experiment
//! object or a set `{"experiments": [...]}`; `report` expects a set. Unknown
//! keys are rejected and every out-of-domain value is listed in one error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, Result, Violation};
use crate::table::OutputFormat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpectrumReport,
    Collapse,
    ApproxRates,
    ScaleMismatch,
    TaperCheck,
    GatesDump,
    Impulse,
    Energy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SpectrumReport => "spectrum-report",
            ExperimentKind::Collapse => "collapse",
            ExperimentKind::ApproxRates => "approx-rates",
            ExperimentKind::ScaleMismatch => "scale-mismatch",
            ExperimentKind::TaperCheck => "taper-check",
            ExperimentKind::GatesDump => "gates-dump",
            ExperimentKind::Impulse => "impulse",
            ExperimentKind::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Generic,
    Mamba,
    Retnet,
    Rwkv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Uniform,
    Ramp,
}

/// Experiment parameters. Which fields are required, and their defaults,
/// depend on the experiment; see the README.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(rename = "T_list", skip_serializing_if = "Option::is_none")]
    pub horizon_list: Option<Vec<f64>>,
    #[serde(rename = "T_train", skip_serializing_if = "Option::is_none")]
    pub t_train: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(rename = "N_list", skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub architecture: Option<Architecture>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<u64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub head_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_below: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span_above: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used for the default output file name; defaults to the
    /// experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Output file, relative to the output directory unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.name().to_owned())
    }

    pub fn output_path(&self, out_dir: &Path) -> PathBuf {
        let rel = self
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from(format!("{}.{}", self.label(), self.format.extension())));
        out_dir.join(rel)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSet {
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
    /// Summary file written by `report`, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_output: Option<PathBuf>,
}

impl ConfigSet {
    pub fn from_json(v: Value) -> std::result::Result<Self, serde_json::Error> {
        if v.get("experiments").is_some() {
            serde_json::from_value(v)
        } else {
            Ok(ConfigSet {
                experiments: vec![serde_json::from_value(v)?],
                report_output: None,
            })
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let parse = |source| LabError::Parse {
            path: path.to_owned(),
            source,
        };
        let v: Value = serde_json::from_str(&text).map_err(parse)?;
        Self::from_json(v).map_err(parse)
    }

    /// Labels must be unique so outputs do not overwrite each other.
    pub fn check_labels(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut seen = std::collections::BTreeSet::new();
        let dups: Vec<Violation> = self
            .experiments
            .iter()
            .enumerate()
            .filter(|(_, c)| !seen.insert(c.output.clone().unwrap_or_else(|| c.label().into())))
            .map(|(i, c)| {
                Violation::new(
                    format!("experiments[{i}].name"),
                    format!("duplicate output `{}`", c.label()),
                )
            })
            .collect();
        if dups.is_empty() {
            Ok(())
        } else {
            Err(dups)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn single_and_set_documents() {
        let one = ConfigSet::from_json(json!({"experiment": "collapse", "params": {"N_list": [8]}})).unwrap();
        assert_eq!(one.experiments.len(), 1);
        assert_eq!(one.experiments[0].params.n_list, Some(vec![8]));
        let set = ConfigSet::from_json(json!({"experiments": []})).unwrap();
        assert!(set.experiments.is_empty());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ConfigSet::from_json(json!({"experiment": "collapse", "colour": 1})).is_err());
        assert!(ConfigSet::from_json(json!({"experiment": "collapse", "params": {"gamma": 1}})).is_err());
        assert!(ConfigSet::from_json(json!({"experiment": "nope"})).is_err());
    }

    #[test]
    fn default_output_path() {
        let c: ExperimentConfig = serde_json::from_value(json!({"experiment": "energy", "format": "json"})).unwrap();
        assert_eq!(c.output_path(Path::new("o")), Path::new("o/energy.json"));
    }

    #[test]
    fn duplicate_labels_flagged() {
        let set = ConfigSet::from_json(json!({"experiments": [
            {"experiment": "energy"}, {"experiment": "energy"}
        ]}))
        .unwrap();
        assert_eq!(set.check_labels().unwrap_err().len(), 1);
    }
}
