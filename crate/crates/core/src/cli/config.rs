//! Run configuration: JSON files, dotted overrides and model construction.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::model::{BranchingModel, ConstantRateModel, OffspringLaw};
use crate::population::Population;
use crate::weight::{UnitWeight, WeightFunction};
use crate::yule::{yule_model, yule_weight, YuleParams};

use super::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    SimulateDirect,
    SimulateSpine,
    Estimate,
    Compare,
    Bench,
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Yule,
    BuiltinConstant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    pub model: ModelKind,
    /// Model parameters; the accepted keys depend on the model.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads, `0` for the default pool. Results do not depend on it.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub format: Format,
    /// Threshold `c` of the indicator functionals.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Initial population sizes for `bench`.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

fn default_threshold() -> f64 {
    0.5
}

fn default_sizes() -> Vec<usize> {
    vec![10, 100, 1000]
}

impl RunConfig {
    pub fn defaults(command: CommandKind) -> Self {
        let (replicas, format) = match command {
            CommandKind::SimulateDirect | CommandKind::SimulateSpine => (1, Format::Jsonl),
            CommandKind::Estimate | CommandKind::Compare => (1000, Format::Csv),
            CommandKind::Bench => (20, Format::Csv),
            CommandKind::Validate => (2000, Format::Jsonl),
        };
        RunConfig {
            command,
            model: ModelKind::BuiltinConstant,
            params: BTreeMap::new(),
            horizon: 1.0,
            replicas,
            seed: 0,
            threads: 0,
            output: None,
            format,
            threshold: default_threshold(),
            sizes: default_sizes(),
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.replicas < 1 {
            return Err(CliError::Config("replicas must be >= 1".into()));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Config(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn check_keys(&self, allowed: impl Fn(&str) -> bool) -> Result<(), CliError> {
        for key in self.params.keys() {
            if !allowed(key) {
                return Err(CliError::Config(format!("unknown parameter `{key}` for model {:?}", self.model)));
            }
        }
        Ok(())
    }

    pub fn n0(&self) -> Result<usize, CliError> {
        let n = self.param("n0", 1.0);
        if !(n >= 0.0 && n.fract() == 0.0) {
            return Err(CliError::Config(format!("n0 must be a non-negative integer, got {n}")));
        }
        Ok(n as usize)
    }

    pub fn yule_params(&self) -> Result<YuleParams, CliError> {
        if self.model != ModelKind::Yule {
            return Err(CliError::Config("this command needs --model yule".into()));
        }
        self.check_keys(|k| YULE_KEYS.contains(&k))?;
        YuleParams::constant(
            self.param("r", 1.0),
            self.param("d", 0.1),
            self.param("mu", 0.0),
            (self.param("div_a", 2.0), self.param("div_b", 2.0)),
            (self.param("loss_a", 2.0), self.param("loss_b", 1.0)),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Model, its default weight function and the initial population.
    pub fn build(&self) -> Result<Scenario, CliError> {
        match self.model {
            ModelKind::Yule => {
                let params = self.yule_params()?;
                let mass = self.param("mass", 1.0);
                if !(mass > 0.0) {
                    return Err(CliError::Config(format!("mass must be > 0, got {mass}")));
                }
                let initial = Population::from_scalars(0.0, &vec![mass; self.n0()?]);
                Ok(Scenario {
                    model: Box::new(yule_model(params.clone())),
                    weight: Box::new(yule_weight(params)),
                    initial,
                })
            }
            ModelKind::BuiltinConstant => {
                self.check_keys(|k| {
                    k == "B" || k == "n0" || k.strip_prefix('p').is_some_and(|n| n.parse::<usize>().is_ok_and(|n| n <= 64))
                })?;
                let mut pairs: Vec<(usize, f64)> = self
                    .params
                    .iter()
                    .filter_map(|(k, &v)| k.strip_prefix('p').and_then(|n| n.parse().ok()).map(|n| (n, v)))
                    .collect();
                if pairs.is_empty() {
                    pairs.push((2, 1.0));
                }
                let law = OffspringLaw::from_pairs(&pairs).map_err(|e| CliError::Config(e.to_string()))?;
                let model = ConstantRateModel::new(self.param("B", 1.0), law).map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Scenario {
                    model: Box::new(model),
                    weight: Box::new(UnitWeight),
                    initial: Population::from_scalars(0.0, &vec![0.0; self.n0()?]),
                })
            }
        }
    }
}

const YULE_KEYS: [&str; 9] = ["r", "d", "mu", "div_a", "div_b", "loss_a", "loss_b", "n0", "mass"];

pub struct Scenario {
    pub model: Box<dyn BranchingModel>,
    pub weight: Box<dyn WeightFunction>,
    pub initial: Population,
}

/// Sets `root.a.b.c = value` for the dotted key `a.b.c`. Values parse as
/// JSON when possible and are kept as strings otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}` does not name a nested key")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Merges `overlay` into `base`, recursing into objects.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Strict parse; the error names the offending key.
pub fn from_value(value: Value) -> Result<RunConfig, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
}

/// Manifest written next to every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub artifacts: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(config: &RunConfig, artifacts: Vec<PathBuf>) -> Self {
        Manifest {
            config: config.clone(),
            config_sha256: config.hash(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts,
        }
    }
}
