//! Scenario configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use illusion_core::caravan::{spread_positions, CaravanParams};
use illusion_core::disks::ExperimentConfig;
use illusion_core::squeeze::DEFAULT_P_MAX;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Trials run by `sweep` when the parameters do not say.
pub const DEFAULT_TRIALS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Identity,
    Caravan,
    Disks,
    Squeeze,
    Compose,
    Coarsen,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::Identity => "identity",
            Scenario::Caravan => "caravan",
            Scenario::Disks => "disks",
            Scenario::Squeeze => "squeeze",
            Scenario::Compose => "compose",
            Scenario::Coarsen => "coarsen",
        };
        f.write_str(name)
    }
}

/// The file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub horizon: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub parameters: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentitySystem {
    Caravan,
    Disks,
    Thirds,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityParams {
    pub system: IdentitySystem,
    /// Robot count; thirds always has one.
    pub n: Option<usize>,
}

impl Default for IdentityParams {
    fn default() -> Self {
        IdentityParams {
            system: IdentitySystem::Caravan,
            n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaravanScenario {
    pub n: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub x0: Option<Vec<f64>>,
    /// Spacing used when `x0` is absent; defaults to one horizon of the
    /// widest relative drift plus a little.
    pub gap: Option<f64>,
    pub primary_v_min: f64,
    pub primary_v_max: f64,
    pub tolerance: f64,
}

impl Default for CaravanScenario {
    fn default() -> Self {
        CaravanScenario {
            n: 4,
            v_min: 0.0,
            v_max: 1.0,
            x0: None,
            gap: None,
            primary_v_min: 0.0,
            primary_v_max: 1.0,
            tolerance: 1e-9,
        }
    }
}

impl CaravanScenario {
    pub fn secondary(&self, horizon: usize) -> CaravanParams {
        let x0 = self.x0.clone().unwrap_or_else(|| {
            let gap = self.gap.unwrap_or(horizon as f64 * (self.v_max - self.v_min) + 10.0);
            spread_positions(self.n, gap)
        });
        CaravanParams::new(self.v_min, self.v_max, x0)
    }

    /// Only the speed range matters; positions are placeholders.
    pub fn primary(&self) -> CaravanParams {
        CaravanParams::new(self.primary_v_min, self.primary_v_max, vec![0.0, 1.0, 2.0])
    }

    fn validate(&self, horizon: usize) -> illusion_core::Result<()> {
        self.secondary(horizon).validate()?;
        self.primary().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeParams {
    pub n: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub gap: Option<f64>,
    pub middle_v_min: f64,
    pub middle_v_max: f64,
    pub outer_v_min: f64,
    pub outer_v_max: f64,
    pub tolerance: f64,
}

impl Default for ComposeParams {
    fn default() -> Self {
        ComposeParams {
            n: 4,
            v_min: 0.0,
            v_max: 1.0,
            gap: None,
            middle_v_min: 0.0,
            middle_v_max: 1.0,
            outer_v_min: 0.25,
            outer_v_max: 0.75,
            tolerance: 1e-9,
        }
    }
}

impl ComposeParams {
    pub fn inner(&self) -> CaravanScenario {
        CaravanScenario {
            n: self.n,
            v_min: self.v_min,
            v_max: self.v_max,
            x0: None,
            gap: self.gap,
            primary_v_min: self.middle_v_min,
            primary_v_max: self.middle_v_max,
            tolerance: self.tolerance,
        }
    }

    fn validate(&self, horizon: usize) -> illusion_core::Result<()> {
        self.inner().validate(horizon)?;
        CaravanParams::new(self.outer_v_min, self.outer_v_max, vec![0.0, 1.0, 2.0]).validate()
    }
}

/// Coarsening applied to caravan percepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kappa {
    Identity,
    Round,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenParams {
    pub kappa: Kappa,
    pub caravan: CaravanScenario,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqueezeParams {
    pub p_max: u32,
    /// Thresholds for the first-crossing search.
    pub n_t: Vec<u64>,
}

impl Default for SqueezeParams {
    fn default() -> Self {
        SqueezeParams {
            p_max: DEFAULT_P_MAX,
            n_t: vec![1, 5, 10, 20],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Identity(IdentityParams),
    Caravan(CaravanScenario),
    Disks(ExperimentConfig),
    Squeeze(SqueezeParams),
    Compose(ComposeParams),
    Coarsen(CoarsenParams),
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub raw: ScenarioConfig,
    pub parameters: Parameters,
    /// Trials for `sweep`.
    pub trials: usize,
}

impl LoadedConfig {
    pub fn scenario(&self) -> Scenario {
        self.raw.scenario
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn horizon(&self) -> usize {
        self.raw.horizon
    }
}

fn take<T: DeserializeOwned>(path: &Path, map: &Map<String, Value>, what: &str) -> Result<T> {
    serde_json::from_value(Value::Object(map.clone()))
        .map_err(|e| CliError::config(path, format!("parameters for {what}: {e}")))
}

fn pop_trials(path: &Path, map: &mut Map<String, Value>) -> Result<usize> {
    match map.remove("trials") {
        None => Ok(DEFAULT_TRIALS),
        Some(v) => match v.as_u64() {
            Some(t) if t > 0 => Ok(t as usize),
            _ => Err(CliError::config(
                path,
                format!("parameters.trials must be a positive integer, got {v}"),
            )),
        },
    }
}

/// Parse and check everything up front; no scenario runs on a bad file.
pub fn parse(path: &Path, text: &str, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let mut raw: ScenarioConfig = serde_json::from_str(text).map_err(|e| CliError::config(path, e.to_string()))?;
    if let Some(seed) = seed_override {
        raw.seed = seed;
    }
    if raw.horizon == 0 {
        return Err(CliError::config(path, "horizon must be at least 1"));
    }
    let bad = |e: illusion_core::Error| CliError::config(path, e.to_string());
    let mut map = raw.parameters.clone();
    let what = raw.scenario.to_string();
    let (parameters, trials) = match raw.scenario {
        Scenario::Identity => {
            let trials = pop_trials(path, &mut map)?;
            let p: IdentityParams = take(path, &map, &what)?;
            if p.n == Some(0) {
                return Err(CliError::config(path, "parameters.n must be positive"));
            }
            if p.system == IdentitySystem::Thirds && p.n.is_some_and(|n| n != 1) {
                return Err(CliError::config(path, "the thirds system has exactly one robot"));
            }
            (Parameters::Identity(p), trials)
        }
        Scenario::Caravan => {
            let trials = pop_trials(path, &mut map)?;
            let p: CaravanScenario = take(path, &map, &what)?;
            p.validate(raw.horizon).map_err(bad)?;
            (Parameters::Caravan(p), trials)
        }
        Scenario::Compose => {
            let trials = pop_trials(path, &mut map)?;
            let p: ComposeParams = take(path, &map, &what)?;
            p.validate(raw.horizon).map_err(bad)?;
            (Parameters::Compose(p), trials)
        }
        Scenario::Coarsen => {
            let trials = pop_trials(path, &mut map)?;
            let kappa = match map.remove("kappa") {
                Some(v) => {
                    serde_json::from_value(v).map_err(|e| CliError::config(path, format!("parameters.kappa: {e}")))?
                }
                None => return Err(CliError::config(path, "missing field `kappa` in parameters")),
            };
            let caravan: CaravanScenario = take(path, &map, &what)?;
            caravan.validate(raw.horizon).map_err(bad)?;
            (Parameters::Coarsen(CoarsenParams { kappa, caravan }), trials)
        }
        Scenario::Squeeze => {
            let trials = pop_trials(path, &mut map)?;
            let p: SqueezeParams = take(path, &map, &what)?;
            if p.p_max == 0 {
                return Err(CliError::config(path, "parameters.p_max must be positive"));
            }
            (Parameters::Squeeze(p), trials)
        }
        Scenario::Disks => {
            for key in ["seed", "horizon"] {
                if map.contains_key(key) {
                    return Err(CliError::config(
                        path,
                        format!("`{key}` belongs at the top level, not in parameters"),
                    ));
                }
            }
            map.insert("seed".into(), raw.seed.into());
            map.insert("horizon".into(), raw.horizon.into());
            let p: ExperimentConfig = take(path, &map, &what)?;
            p.validate().map_err(bad)?;
            if p.trials == 0 {
                return Err(CliError::config(path, "parameters.trials must be positive"));
            }
            let trials = p.trials;
            (Parameters::Disks(p), trials)
        }
    };
    Ok(LoadedConfig {
        path: path.to_path_buf(),
        raw,
        parameters,
        trials,
    })
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(path, &text, seed_override)
}
