//! Witness and trace-pair files, and rechecking one against the other.

use std::fs;
use std::path::Path;

use illusion_core::caravan::{caravan_system, CaravanObservation, CaravanParams, Gap};
use illusion_core::disks::{disks_system, single_system, DiskParams, ObstacleField, Point, Pose, SingleParams};
use illusion_core::illusion::{
    coarsen_system, verify_illusion, IllusionReport, RoleMapSequence, TimeScale, WitnessBundle,
};
use illusion_core::squeeze::{binary_system, thirds_system, ExactRational};
use illusion_core::system::{Joint, StateOf, TransitionSystem};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Kappa, Scenario};
use crate::error::{CliError, Result};
use crate::format::rational_text;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessMeta {
    pub scenario: Scenario,
    pub seed: u64,
    pub horizon: usize,
    pub participants: usize,
    pub tolerance: f64,
    pub measured_slowdown: usize,
}

/// On-disk witness: `{policies, roles: [[k, map]...], z, meta}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessFile {
    pub policies: Vec<String>,
    pub roles: RoleMapSequence,
    pub z: TimeScale,
    pub meta: WitnessMeta,
}

impl WitnessFile {
    pub fn new(witness: &WitnessBundle, meta: WitnessMeta) -> Self {
        WitnessFile {
            policies: witness.policies.clone(),
            roles: witness.roles.clone(),
            z: witness.timescale.clone(),
            meta,
        }
    }

    pub fn bundle(&self) -> WitnessBundle {
        WitnessBundle {
            policies: self.policies.clone(),
            participants: self.meta.participants,
            roles: self.roles.clone(),
            timescale: self.z.clone(),
        }
    }
}

/// Enough to rebuild a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum SystemSpec {
    Caravan {
        params: CaravanParams,
    },
    Disks {
        params: DiskParams,
    },
    Single {
        params: SingleParams,
        field_seed: u64,
        spacing: f64,
    },
    Thirds,
    Binary {
        p_max: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSide {
    #[serde(flatten)]
    pub system: SystemSpec,
    /// Joint states, one per step; rationals as `num/den` strings.
    pub states: Value,
}

/// Secondary and primary runs a witness relates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<Kappa>,
    pub secondary: TraceSide,
    pub primary: TraceSide,
}

pub fn states_json<X: Serialize>(states: &[Joint<X>]) -> Value {
    serde_json::to_value(states).expect("states serialize")
}

pub fn rational_states_json(states: &[Joint<ExactRational>]) -> Value {
    Value::Array(
        states
            .iter()
            .map(|x| Value::Array(x.iter().map(|q| Value::String(rational_text(q))).collect()))
            .collect(),
    )
}

fn parse_states<X: DeserializeOwned>(path: &Path, v: &Value) -> Result<Vec<Joint<X>>> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::config(path, format!("states: {e}")))
}

fn parse_rational_states(path: &Path, v: &Value) -> Result<Vec<Joint<ExactRational>>> {
    let rows: Vec<Vec<String>> = parse_states_raw(path, v)?;
    rows.into_iter()
        .map(|row| {
            row.iter()
                .map(|s| {
                    s.parse::<ExactRational>()
                        .map_err(|e| CliError::config(path, format!("rational {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Joint::new)
        })
        .collect()
}

fn parse_states_raw<T: DeserializeOwned>(path: &Path, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::config(path, format!("states: {e}")))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(path, e.to_string()))
}

fn check<S, P>(
    s: &S,
    ss: &[StateOf<S>],
    p: &P,
    ps: &[StateOf<P>],
    meta: &WitnessMeta,
    witness: &WitnessBundle,
) -> Result<IllusionReport>
where
    S: TransitionSystem + ?Sized,
    P: TransitionSystem<Observation = S::Observation> + ?Sized,
{
    Ok(verify_illusion(
        s,
        ss,
        p,
        ps,
        meta.participants,
        witness,
        meta.tolerance,
    )?)
}

fn round_gap(g: Gap) -> Gap {
    match g {
        Gap::Finite(d) => Gap::Finite(d.round()),
        Gap::Infinite => Gap::Infinite,
    }
}

pub fn kappa_round(y: &CaravanObservation) -> CaravanObservation {
    CaravanObservation {
        behind: round_gap(y.behind),
        ahead: round_gap(y.ahead),
    }
}

/// Verify `witness` against `pair` under the witness's own tolerance.
pub fn verify_pair(witness: &WitnessFile, pair: &TracePair, path: &Path) -> Result<IllusionReport> {
    let bundle = witness.bundle();
    let meta = &witness.meta;
    let unsupported = || {
        CliError::config(
            path,
            format!(
                "cannot relate a {} secondary to a {} primary",
                kind(&pair.secondary.system),
                kind(&pair.primary.system)
            ),
        )
    };
    if pair.kappa.is_some()
        && !matches!(
            (&pair.secondary.system, &pair.primary.system),
            (SystemSpec::Caravan { .. }, SystemSpec::Caravan { .. })
        )
    {
        return Err(CliError::config(path, "coarsening is only defined for caravan pairs"));
    }
    match (&pair.secondary.system, &pair.primary.system) {
        (SystemSpec::Caravan { params: sp }, SystemSpec::Caravan { params: pp }) => {
            let s = caravan_system(sp.clone())?;
            let p = caravan_system(pp.clone())?;
            let ss: Vec<Joint<f64>> = parse_states(path, &pair.secondary.states)?;
            let ps: Vec<Joint<f64>> = parse_states(path, &pair.primary.states)?;
            match pair.kappa {
                None => check(&s, &ss, &p, &ps, meta, &bundle),
                Some(Kappa::Identity) => {
                    let id = |y: &CaravanObservation| *y;
                    check(
                        &coarsen_system(&s, id),
                        &ss,
                        &coarsen_system(&p, id),
                        &ps,
                        meta,
                        &bundle,
                    )
                }
                Some(Kappa::Round) => check(
                    &coarsen_system(&s, kappa_round),
                    &ss,
                    &coarsen_system(&p, kappa_round),
                    &ps,
                    meta,
                    &bundle,
                ),
                Some(Kappa::Constant) => {
                    let unit = |_: &CaravanObservation| ();
                    check(
                        &coarsen_system(&s, unit),
                        &ss,
                        &coarsen_system(&p, unit),
                        &ps,
                        meta,
                        &bundle,
                    )
                }
            }
        }
        (SystemSpec::Disks { params: sp }, SystemSpec::Disks { params: pp }) => {
            let s = disks_system(sp.clone())?;
            let p = disks_system(pp.clone())?;
            let ss: Vec<Joint<Pose>> = parse_states(path, &pair.secondary.states)?;
            let ps: Vec<Joint<Pose>> = parse_states(path, &pair.primary.states)?;
            check(&s, &ss, &p, &ps, meta, &bundle)
        }
        (
            SystemSpec::Single {
                params,
                field_seed,
                spacing,
            },
            SystemSpec::Disks { params: pp },
        ) => {
            let s = single_system(*params, ObstacleField::new(*field_seed, *spacing)?)?;
            let p = disks_system(pp.clone())?;
            let ss: Vec<Joint<Point>> = parse_states(path, &pair.secondary.states)?;
            let ps: Vec<Joint<Pose>> = parse_states(path, &pair.primary.states)?;
            check(&s, &ss, &p, &ps, meta, &bundle)
        }
        (SystemSpec::Thirds, SystemSpec::Thirds) => {
            let s = thirds_system();
            let ss = parse_rational_states(path, &pair.secondary.states)?;
            let ps = parse_rational_states(path, &pair.primary.states)?;
            check(&s, &ss, &s, &ps, meta, &bundle)
        }
        (SystemSpec::Thirds, SystemSpec::Binary { p_max }) => {
            let s = thirds_system();
            let p = binary_system(*p_max)?;
            let ss = parse_rational_states(path, &pair.secondary.states)?;
            let ps = parse_rational_states(path, &pair.primary.states)?;
            check(&s, &ss, &p, &ps, meta, &bundle)
        }
        _ => Err(unsupported()),
    }
}

fn kind(spec: &SystemSpec) -> &'static str {
    match spec {
        SystemSpec::Caravan { .. } => "caravan",
        SystemSpec::Disks { .. } => "disks",
        SystemSpec::Single { .. } => "single",
        SystemSpec::Thirds => "thirds",
        SystemSpec::Binary { .. } => "binary",
    }
}

/// Load both files and recheck.
pub fn verify_files(witness_path: &Path, traces_path: &Path) -> Result<IllusionReport> {
    let witness: WitnessFile = read_json(witness_path)?;
    let pair: TracePair = read_json(traces_path)?;
    verify_pair(&witness, &pair, traces_path)
}
