//! Executing configured scenarios.

use illusion_core::caravan::{
    caravan_dilation, caravan_illusion, caravan_slowdown_bound, caravan_system, spread_positions, uniform_policies,
    CaravanObservation, CaravanParams,
};
use illusion_core::disks::{
    disks_system, experiment_cells, random_walk_policies, ring_poses, run_cell, DiskParams, ExperimentConfig, Point,
    Strategy, TimingRecord, Workspace,
};
use illusion_core::illusion::{
    coarsen_system, compose_witness, identity_witness, verify_illusion, IllusionReport, WitnessBundle,
};
use illusion_core::squeeze::{
    constant_thirds_policy, find_n_t, n_t_closed_form, n_t_from_plateau_bound, rational, squeeze_illusion,
    thirds_system,
};
use illusion_core::system::{rollout, BoxedPolicy, TransitionSystem};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{IdentityParams, IdentitySystem, Kappa, LoadedConfig, Parameters};
use crate::error::{CliError, Result};
use crate::format::{float_json, round_floats};
use crate::report::Records;
use crate::traces::{kappa_round, rational_states_json, states_json, SystemSpec, TracePair, TraceSide, WitnessMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Run,
    Sweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Sweep => "sweep",
        }
    }
}

/// Everything a scenario produces, before it touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    pub first_failure: Option<usize>,
    /// `(file name, records)`, written as CSV.
    pub tables: Vec<(&'static str, Records)>,
    pub witness: Option<(WitnessBundle, WitnessMeta)>,
    pub traces: Option<TracePair>,
}

/// One verified run of a non-grid scenario.
#[derive(Debug, Clone)]
struct Single {
    report: IllusionReport,
    witness: WitnessBundle,
    participants: usize,
    traces: TracePair,
    extra: Map<String, Value>,
    tables: Vec<(&'static str, Records)>,
    pass: bool,
}

impl Single {
    fn primary_steps(&self) -> usize {
        self.witness
            .timescale
            .as_slice()
            .get(self.report.horizon)
            .copied()
            .unwrap_or(0)
    }

    fn max_residual(&self) -> f64 {
        self.report.per_step_residual.iter().copied().fold(0.0, f64::max)
    }
}

pub fn report_json(report: &IllusionReport) -> Value {
    json!({
        "horizon": report.horizon,
        "tolerance": float_json(report.tolerance),
        "pass": report.pass,
        "first_failure": report.first_failure,
        "measured_slowdown": report.measured_slowdown,
        "mean_plateau": float_json(report.mean_plateau()),
        "plateau_lengths": report.plateau_lengths,
        "per_step_residual": report.per_step_residual.iter().map(|&r| float_json(r)).collect::<Vec<_>>(),
    })
}

fn steps_table(report: &IllusionReport, witness: &WitnessBundle) -> Records {
    let mut t = Records::new(&["k", "primary_step", "plateau_len", "residual"]);
    let z = witness.timescale.as_slice();
    for (k, &r) in report.per_step_residual.iter().enumerate() {
        let plateau = if k == 0 { 0 } else { z[k] - z[k - 1] };
        t.push(vec![k.into(), z[k].into(), plateau.into(), r.into()]);
    }
    t
}

fn identity_disks(n: usize) -> DiskParams {
    DiskParams {
        n,
        workspace: Workspace {
            x_min: -1.6,
            x_max: 1.6,
            y_min: -1.0,
            y_max: 1.0,
        },
        v_wheel_max: 0.2,
        r: 0.6,
        wheelbase: 0.1,
        dt: 0.1,
        robot_radius: 0.05,
        x0: ring_poses(n, Point::new(0.0, 0.0), 0.4),
    }
}

fn identity_of<S: TransitionSystem>(
    system: &S,
    policies: &[BoxedPolicy<S>],
    horizon: usize,
) -> Result<(IllusionReport, WitnessBundle, Vec<illusion_core::system::StateOf<S>>)> {
    let trace = rollout(system, policies, horizon)?;
    let witness = identity_witness(system, policies, horizon);
    let n = system.robot_count();
    let report = verify_illusion(system, &trace.states, system, &trace.states, n, &witness, 0.0)?;
    Ok((report, witness, trace.states))
}

fn identity(p: &IdentityParams, seed: u64, horizon: usize) -> Result<Single> {
    let (report, witness, participants, side) = match p.system {
        IdentitySystem::Caravan => {
            let n = p.n.unwrap_or(4);
            let params = CaravanParams::new(0.0, 1.0, spread_positions(n, 5.0));
            let sys = caravan_system(params.clone())?;
            let (report, witness, states) = identity_of(&sys, &uniform_policies(&params, seed), horizon)?;
            (
                report,
                witness,
                n,
                TraceSide {
                    system: SystemSpec::Caravan { params },
                    states: states_json(&states),
                },
            )
        }
        IdentitySystem::Disks => {
            let n = p.n.unwrap_or(3);
            let params = identity_disks(n);
            let sys = disks_system(params.clone())?;
            let (report, witness, states) = identity_of(&sys, &random_walk_policies(&params, seed), horizon)?;
            (
                report,
                witness,
                n,
                TraceSide {
                    system: SystemSpec::Disks { params },
                    states: states_json(&states),
                },
            )
        }
        IdentitySystem::Thirds => {
            let sys = thirds_system();
            let (report, witness, states) = identity_of(&sys, &[constant_thirds_policy(rational(1, 3))], horizon)?;
            (
                report,
                witness,
                1,
                TraceSide {
                    system: SystemSpec::Thirds,
                    states: rational_states_json(&states),
                },
            )
        }
    };
    let mut extra = Map::new();
    extra.insert(
        "system".into(),
        serde_json::to_value(p.system).expect("enum serializes"),
    );
    extra.insert(
        "zero_residual".into(),
        report.per_step_residual.iter().all(|&r| r == 0.0).into(),
    );
    let pass = report.pass && report.measured_slowdown == 1;
    Ok(Single {
        pass,
        traces: TracePair {
            kappa: None,
            secondary: side.clone(),
            primary: side,
        },
        report,
        witness,
        participants,
        extra,
        tables: Vec::new(),
    })
}

fn caravan_pair(run: &illusion_core::caravan::CaravanIllusion, kappa: Option<Kappa>) -> TracePair {
    TracePair {
        kappa,
        secondary: TraceSide {
            system: SystemSpec::Caravan {
                params: run.secondary.params().clone(),
            },
            states: states_json(&run.secondary_trace.states),
        },
        primary: TraceSide {
            system: SystemSpec::Caravan {
                params: run.primary.params().clone(),
            },
            states: states_json(&run.primary_trace.states),
        },
    }
}

fn single(cfg: &LoadedConfig, seed: u64) -> Result<Single> {
    let horizon = cfg.horizon();
    match &cfg.parameters {
        Parameters::Identity(p) => identity(p, seed, horizon),
        Parameters::Caravan(p) => {
            let s = p.secondary(horizon);
            let run = caravan_illusion(&s, &p.primary(), &uniform_policies(&s, seed), horizon, p.tolerance)?;
            let bound = caravan_slowdown_bound(&s, &p.primary()) as usize;
            let within = run.report.measured_slowdown <= bound;
            let mut extra = Map::new();
            extra.insert("slowdown_bound".into(), bound.into());
            extra.insert("within_bound".into(), within.into());
            Ok(Single {
                pass: run.report.pass && within,
                traces: caravan_pair(&run, None),
                report: run.report,
                witness: run.witness,
                participants: 1,
                extra,
                tables: Vec::new(),
            })
        }
        Parameters::Compose(p) => {
            let inner_cfg = p.inner();
            let s = inner_cfg.secondary(horizon);
            let inner = caravan_illusion(
                &s,
                &inner_cfg.primary(),
                &uniform_policies(&s, seed),
                horizon,
                p.tolerance,
            )?;
            let middle = inner.primary.params().clone();
            let outer = caravan_dilation(&middle, &inner.primary_trace, p.outer_v_min, p.outer_v_max, p.tolerance)?;
            let composed = compose_witness(&outer.witness, &inner.witness)?;
            let report = verify_illusion(
                &inner.secondary,
                &inner.secondary_trace.states,
                &outer.primary,
                &outer.primary_trace.states,
                1,
                &composed,
                p.tolerance,
            )?;
            let (tau, tau_hat) = (inner.report.measured_slowdown, outer.report.measured_slowdown);
            let within = report.measured_slowdown <= tau * tau_hat;
            let mut extra = Map::new();
            extra.insert("inner_pass".into(), inner.report.pass.into());
            extra.insert("outer_pass".into(), outer.report.pass.into());
            extra.insert("inner_slowdown".into(), tau.into());
            extra.insert("outer_slowdown".into(), tau_hat.into());
            extra.insert("slowdown_product".into(), (tau * tau_hat).into());
            extra.insert("within_product".into(), within.into());
            let traces = TracePair {
                kappa: None,
                secondary: TraceSide {
                    system: SystemSpec::Caravan {
                        params: inner.secondary.params().clone(),
                    },
                    states: states_json(&inner.secondary_trace.states),
                },
                primary: TraceSide {
                    system: SystemSpec::Caravan {
                        params: outer.primary.params().clone(),
                    },
                    states: states_json(&outer.primary_trace.states),
                },
            };
            Ok(Single {
                pass: report.pass && within,
                report,
                witness: composed,
                participants: 1,
                traces,
                extra,
                tables: Vec::new(),
            })
        }
        Parameters::Coarsen(p) => {
            let c = &p.caravan;
            let s = c.secondary(horizon);
            let run = caravan_illusion(&s, &c.primary(), &uniform_policies(&s, seed), horizon, c.tolerance)?;
            let (ss, ps) = (&run.secondary_trace.states, &run.primary_trace.states);
            let report = match p.kappa {
                Kappa::Identity => {
                    let id = |y: &CaravanObservation| *y;
                    verify_illusion(
                        &coarsen_system(&run.secondary, id),
                        ss,
                        &coarsen_system(&run.primary, id),
                        ps,
                        1,
                        &run.witness,
                        c.tolerance,
                    )?
                }
                Kappa::Round => verify_illusion(
                    &coarsen_system(&run.secondary, kappa_round),
                    ss,
                    &coarsen_system(&run.primary, kappa_round),
                    ps,
                    1,
                    &run.witness,
                    c.tolerance,
                )?,
                Kappa::Constant => {
                    let unit = |_: &CaravanObservation| ();
                    verify_illusion(
                        &coarsen_system(&run.secondary, unit),
                        ss,
                        &coarsen_system(&run.primary, unit),
                        ps,
                        1,
                        &run.witness,
                        c.tolerance,
                    )?
                }
            };
            let mut extra = Map::new();
            extra.insert("kappa".into(), serde_json::to_value(p.kappa).expect("enum serializes"));
            extra.insert("original_pass".into(), run.report.pass.into());
            Ok(Single {
                pass: report.pass,
                traces: caravan_pair(&run, Some(p.kappa)),
                report,
                witness: run.witness,
                participants: 1,
                extra,
                tables: Vec::new(),
            })
        }
        Parameters::Squeeze(p) => {
            let run = squeeze_illusion(horizon, p.p_max)?;
            let records = run.plateau_records();
            let mut plateaus = Records::new(&[
                "h",
                "secondary_step",
                "plateau_len",
                "lower_bound_floor_3h_2",
                "state_num",
                "state_den",
            ]);
            for r in &records {
                plateaus.push(vec![
                    r.h.into(),
                    r.secondary_step.into(),
                    r.plateau_len.into(),
                    r.lower_bound.into(),
                    r.primary_state.numer().to_string().into(),
                    r.primary_state.denom().to_string().into(),
                ]);
            }
            let lower_bound_holds = records.iter().all(|r| r.plateau_len as u64 >= r.lower_bound);
            let mut thresholds = Vec::new();
            for &t in &p.n_t {
                let n = find_n_t(t, p.p_max)? as u64;
                thresholds.push(json!({
                    "t": t,
                    "n_t": n,
                    "closed_form": n_t_closed_form(t),
                    "closed_form_holds": n <= n_t_closed_form(t),
                    "plateau_bound": n_t_from_plateau_bound(t),
                    "plateau_bound_holds": n <= n_t_from_plateau_bound(t),
                }));
            }
            let mut extra = Map::new();
            extra.insert("p_max".into(), p.p_max.into());
            extra.insert("lower_bound_holds".into(), lower_bound_holds.into());
            extra.insert("thresholds".into(), Value::Array(thresholds));
            let traces = TracePair {
                kappa: None,
                secondary: TraceSide {
                    system: SystemSpec::Thirds,
                    states: rational_states_json(&run.secondary_trace.states),
                },
                primary: TraceSide {
                    system: SystemSpec::Binary { p_max: p.p_max },
                    states: rational_states_json(&run.primary_trace.states),
                },
            };
            let mut tables = Vec::new();
            if !plateaus.is_empty() {
                tables.push(("plateaus.csv", plateaus));
            }
            Ok(Single {
                pass: run.report.pass && lower_bound_holds,
                report: run.report,
                witness: run.witness,
                participants: 1,
                traces,
                extra,
                tables,
            })
        }
        Parameters::Disks(_) => unreachable!("disks run as a grid"),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}

fn header(cfg: &LoadedConfig, mode: Mode) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("scenario".into(), cfg.scenario().to_string().into());
    m.insert("mode".into(), mode.name().into());
    m.insert("seed".into(), cfg.seed().into());
    m.insert("horizon".into(), cfg.horizon().into());
    m
}

fn meta(cfg: &LoadedConfig, seed: u64, participants: usize, report: &IllusionReport) -> WitnessMeta {
    WitnessMeta {
        scenario: cfg.scenario(),
        seed,
        horizon: report.horizon,
        participants,
        tolerance: report.tolerance,
        measured_slowdown: report.measured_slowdown,
    }
}

/// Run the configured scenario on `jobs` worker threads (0 picks a default).
pub fn execute(cfg: &LoadedConfig, mode: Mode, jobs: usize) -> Result<Outcome> {
    if let Parameters::Disks(exp) = &cfg.parameters {
        return disks(cfg, exp, mode, jobs);
    }
    match mode {
        Mode::Run => {
            let run = single(cfg, cfg.seed())?;
            let mut report = header(cfg, mode);
            report.insert("pass".into(), run.pass.into());
            report.insert("primary_steps".into(), run.primary_steps().into());
            report.extend(run.extra.clone());
            report.insert("illusion".into(), report_json(&run.report));
            let mut report = Value::Object(report);
            round_floats(&mut report);
            let mut tables = vec![("steps.csv", steps_table(&run.report, &run.witness))];
            tables.extend(run.tables.clone());
            Ok(Outcome {
                report,
                pass: run.pass,
                first_failure: run.report.first_failure,
                tables,
                witness: Some((
                    run.witness.clone(),
                    meta(cfg, cfg.seed(), run.participants, &run.report),
                )),
                traces: Some(run.traces),
            })
        }
        Mode::Sweep => {
            let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| cfg.seed() ^ t).collect();
            let runs: Vec<Result<Single>> = pool(jobs)?.install(|| seeds.par_iter().map(|&s| single(cfg, s)).collect());
            let mut table = Records::new(&[
                "trial_id",
                "seed",
                "pass",
                "measured_slowdown",
                "primary_steps",
                "max_residual",
            ]);
            let mut all_pass = true;
            let mut first_failure = None;
            let mut worst = 0usize;
            let mut trials = Vec::new();
            for (t, run) in runs.into_iter().enumerate() {
                let run = run?;
                if !run.pass && all_pass {
                    all_pass = false;
                    first_failure = run.report.first_failure;
                }
                worst = worst.max(run.report.measured_slowdown);
                table.push(vec![
                    t.into(),
                    seeds[t].into(),
                    run.pass.into(),
                    run.report.measured_slowdown.into(),
                    run.primary_steps().into(),
                    run.max_residual().into(),
                ]);
                let mut entry = Map::new();
                entry.insert("trial_id".into(), t.into());
                entry.insert("seed".into(), seeds[t].into());
                entry.insert("pass".into(), run.pass.into());
                entry.insert("measured_slowdown".into(), run.report.measured_slowdown.into());
                entry.extend(run.extra);
                trials.push(Value::Object(entry));
            }
            let mut report = header(cfg, mode);
            report.insert("trials".into(), cfg.trials.into());
            report.insert("pass".into(), all_pass.into());
            report.insert("max_slowdown".into(), worst.into());
            report.insert("runs".into(), Value::Array(trials));
            let mut report = Value::Object(report);
            round_floats(&mut report);
            Ok(Outcome {
                report,
                pass: all_pass,
                first_failure,
                tables: vec![("sweep.csv", table)],
                witness: None,
                traces: None,
            })
        }
    }
}

/// Cells summarised for the report.
struct CellResult {
    record: TimingRecord,
    pass: bool,
    first_failure: Option<usize>,
    max_residual: f64,
    detail: Option<(WitnessBundle, WitnessMeta, TracePair)>,
}

pub fn timing_table(records: &[TimingRecord]) -> Records {
    let mut t = Records::new(&[
        "trial_id",
        "strategy",
        "n_primary",
        "secondary_steps",
        "primary_steps",
        "slowdown_max",
        "slowdown_mean",
        "seed",
    ]);
    for r in records {
        t.push(vec![
            r.trial_id.into(),
            r.strategy.name().into(),
            r.n_primary.into(),
            r.secondary_steps.into(),
            r.primary_steps.into(),
            r.slowdown_max.into(),
            r.slowdown_mean.into(),
            r.seed.into(),
        ]);
    }
    t
}

/// Mean primary steps per `(strategy, n_primary)`, in config order.
pub fn strategy_means(exp: &ExperimentConfig, records: &[TimingRecord]) -> Result<Vec<(Strategy, usize, f64, f64)>> {
    let mut out = Vec::new();
    for &strategy in &exp.strategies {
        for n in exp.robot_counts()? {
            let sel: Vec<_> = records
                .iter()
                .filter(|r| r.strategy == strategy && r.n_primary == n)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let k = sel.len() as f64;
            let steps = sel.iter().map(|r| r.primary_steps as f64).sum::<f64>() / k;
            let slowdown = sel.iter().map(|r| r.slowdown_max as f64).sum::<f64>() / k;
            out.push((strategy, n, steps, slowdown));
        }
    }
    Ok(out)
}

fn disks(cfg: &LoadedConfig, exp: &ExperimentConfig, mode: Mode, jobs: usize) -> Result<Outcome> {
    let cells = experiment_cells(exp)?;
    let sensing = exp.sensing_primary();
    let results: Vec<Result<CellResult>> = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(idx, &cell)| {
                let run = run_cell(exp, cell)?;
                let detail = (mode == Mode::Run && idx == 0).then(|| {
                    let single = run.secondary.params();
                    let pair = TracePair {
                        kappa: None,
                        secondary: TraceSide {
                            system: SystemSpec::Single {
                                params: *single,
                                field_seed: run.secondary.field().seed(),
                                spacing: run.secondary.field().spacing(),
                            },
                            states: states_json(&run.secondary_trace.states),
                        },
                        primary: TraceSide {
                            system: SystemSpec::Disks {
                                params: run.primary.params().clone(),
                            },
                            states: states_json(&run.primary_trace.states),
                        },
                    };
                    let m = WitnessMeta {
                        scenario: cfg.scenario(),
                        seed: run.record.seed,
                        horizon: run.report.horizon,
                        participants: 1,
                        tolerance: run.report.tolerance,
                        measured_slowdown: run.report.measured_slowdown,
                    };
                    (run.witness.clone(), m, pair)
                });
                Ok(CellResult {
                    pass: run.report.pass,
                    first_failure: run.report.first_failure,
                    max_residual: run.report.per_step_residual.iter().copied().fold(0.0, f64::max),
                    record: run.record,
                    detail,
                })
            })
            .collect()
    });
    let results: Vec<CellResult> = results.into_iter().collect::<Result<_>>()?;
    let records: Vec<TimingRecord> = results.iter().map(|c| c.record.clone()).collect();

    let all_pass = results.iter().all(|c| c.pass);
    let first_failure = results.iter().find(|c| !c.pass).and_then(|c| c.first_failure);
    let means = strategy_means(exp, &records)?;
    let heuristic: Vec<&TimingRecord> = records.iter().filter(|r| r.strategy == Strategy::Heuristic).collect();
    let mut report = header(cfg, mode);
    report.insert("pass".into(), all_pass.into());
    report.insert("trials".into(), exp.trials.into());
    report.insert("m_bound".into(), exp.m_bound()?.into());
    report.insert("sensing_primary".into(), float_json(sensing));
    report.insert("tolerance".into(), float_json(exp.tolerance()));
    report.insert(
        "means".into(),
        Value::Array(
            means
                .iter()
                .map(|(s, n, steps, slow)| {
                    json!({"strategy": s.name(), "n_primary": n, "mean_primary_steps": float_json(*steps), "mean_slowdown_max": float_json(*slow)})
                })
                .collect(),
        ),
    );
    if !heuristic.is_empty() {
        let max = heuristic.iter().map(|r| r.slowdown_max).max().unwrap_or(0);
        let mean = heuristic.iter().map(|r| r.slowdown_mean).sum::<f64>() / heuristic.len() as f64;
        report.insert(
            "heuristic_slowdown".into(),
            json!({"max": max, "mean": float_json(mean), "finite": mean.is_finite()}),
        );
    }
    report.insert(
        "cells".into(),
        Value::Array(
            results
                .iter()
                .map(|c| {
                    json!({
                        "trial_id": c.record.trial_id,
                        "strategy": c.record.strategy.name(),
                        "n_primary": c.record.n_primary,
                        "pass": c.pass,
                        "first_failure": c.first_failure,
                        "max_residual": float_json(c.max_residual),
                    })
                })
                .collect(),
        ),
    );
    let mut report = Value::Object(report);
    round_floats(&mut report);

    let detail = results.into_iter().find_map(|c| c.detail);
    let (witness, traces) = match detail {
        Some((w, m, t)) => (Some((w, m)), Some(t)),
        None => (None, None),
    };
    Ok(Outcome {
        report,
        pass: all_pass,
        first_failure,
        tables: vec![("timing.csv", timing_table(&records))],
        witness,
        traces,
    })
}
