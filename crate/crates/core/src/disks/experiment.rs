//! The obstacle-field illusion: a participant disk robot at the centre of the
//! workspace sees teammates exactly where a single robot wandering the field
//! would see obstacles.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::{
    assign_roles, disks_system, drive_to_targets, random_path_policy, ring_poses, single_system, Controller,
    DiskParams, DiskSystem, ObstacleField, Point, SingleParams, SingleSystem, Stage, Strategy, Workspace, PATH_PERIOD,
};
use crate::error::{Error, Result};
use crate::illusion::{orchestrate, verify_illusion, IllusionReport, OrchestrationConfig, Orchestrator, WitnessBundle};
use crate::rng::trial_seed;
use crate::system::{rollout, ActionOf, ExecutionTrace, StateOf, TraceOf, TransitionSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub horizon: usize,
    pub strategies: Vec<Strategy>,
    /// Primary team sizes; defaults to `m_bound + 1 ..= m_bound + 5`.
    pub robot_counts: Option<Vec<usize>>,
    pub workspace: Workspace,
    /// Sensing range of the single robot.
    pub r: f64,
    /// Sensing range of the disk robots; defaults to `r`.
    pub r_primary: Option<f64>,
    pub spacing: f64,
    pub v_wheel_max: f64,
    pub wheelbase: f64,
    pub robot_radius: f64,
    pub dt: f64,
    /// Top speed of the single robot.
    pub secondary_speed: f64,
    pub path_period: usize,
    pub lookahead: usize,
    /// Parking distance beyond the sensing range, as a fraction of `r`.
    pub margin: f64,
    /// Observation tolerance, as a fraction of `r`.
    pub epsilon: f64,
    /// Radius of the starting circle, as a multiple of `r`.
    pub start_radius: f64,
    pub plateau_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: 10,
            horizon: 200,
            strategies: Strategy::ALL.to_vec(),
            robot_counts: None,
            workspace: Workspace {
                x_min: -1.6,
                x_max: 1.6,
                y_min: -1.0,
                y_max: 1.0,
            },
            r: 0.6,
            r_primary: None,
            spacing: 0.5,
            v_wheel_max: 0.2,
            wheelbase: 0.1,
            robot_radius: 0.05,
            dt: 0.1,
            secondary_speed: 0.15,
            path_period: PATH_PERIOD,
            lookahead: 5,
            margin: 0.1,
            epsilon: 1e-3,
            start_radius: 1.5,
            plateau_cap: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn field(&self) -> Result<ObstacleField> {
        ObstacleField::new(self.seed, self.spacing)
    }

    pub fn sensing_primary(&self) -> f64 {
        self.r_primary.unwrap_or(self.r)
    }

    pub fn tolerance(&self) -> f64 {
        self.epsilon * self.r
    }

    pub fn m_bound(&self) -> Result<usize> {
        Ok(self.field()?.m_bound(self.r))
    }

    pub fn robot_counts(&self) -> Result<Vec<usize>> {
        match &self.robot_counts {
            Some(counts) => Ok(counts.clone()),
            None => {
                let m = self.m_bound()?;
                Ok((m + 1..=m + 5).collect())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.sensing_primary() < self.r {
            return bad(format!(
                "disk sensing range {} is below the single robot's {}",
                self.sensing_primary(),
                self.r
            ));
        }
        if !(self.epsilon > 0.0 && self.margin > 0.0 && self.start_radius > 0.0) {
            return bad("epsilon, margin and start_radius must be positive".into());
        }
        let centre = self.workspace.centre();
        let parking = self.sensing_primary() + self.margin * self.r;
        if !self
            .workspace
            .contains_disk(centre, parking.max(self.start_radius * self.r))
        {
            return bad("workspace cannot hold the parking and starting circles".into());
        }
        if self.strategies.is_empty() {
            return bad("no strategies selected".into());
        }
        let m = self.m_bound()?;
        for n in self.robot_counts()? {
            if n < m + 1 {
                return bad(format!("{n} disk robots cannot show up to {m} obstacles"));
            }
        }
        Ok(())
    }

    fn single_params(&self) -> SingleParams {
        SingleParams {
            v_max: self.secondary_speed,
            dt: self.dt,
            r: self.r,
            x0: Point::new(0.0, 0.0),
        }
    }

    fn disk_params(&self, n: usize) -> DiskParams {
        DiskParams {
            n,
            workspace: self.workspace,
            v_wheel_max: self.v_wheel_max,
            r: self.sensing_primary(),
            wheelbase: self.wheelbase,
            dt: self.dt,
            robot_radius: self.robot_radius,
            x0: ring_poses(n, self.workspace.centre(), self.start_radius * self.r),
        }
    }
}

/// One `(trial, strategy, team size)` combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub trial: usize,
    pub strategy: Strategy,
    pub n_primary: usize,
}

/// Every cell, in `(trial, strategy, team size)` order.
pub fn experiment_cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    let counts = config.robot_counts()?;
    let mut cells = Vec::new();
    for trial in 0..config.trials {
        for &strategy in &config.strategies {
            for &n_primary in &counts {
                cells.push(Cell {
                    trial,
                    strategy,
                    n_primary,
                });
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub trial_id: usize,
    pub strategy: Strategy,
    pub n_primary: usize,
    pub secondary_steps: usize,
    pub primary_steps: usize,
    pub slowdown_max: usize,
    pub slowdown_mean: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DiskRun {
    pub record: TimingRecord,
    pub secondary: SingleSystem,
    pub secondary_trace: TraceOf<SingleSystem>,
    pub primary: DiskSystem,
    pub primary_trace: TraceOf<DiskSystem>,
    pub witness: WitnessBundle,
    pub report: IllusionReport,
}

/// Pull a relative position just inside the sensing disk, so a robot that
/// stops short of it is still seen.
fn inside(rel: Point, r: f64, slack: f64) -> Point {
    let norm = rel.norm();
    if norm > r - slack {
        rel * ((r - slack) / norm)
    } else {
        rel
    }
}

struct Casting<'a> {
    path: Vec<Point>,
    field: ObstacleField,
    r: f64,
    lookahead: usize,
    strategy: Strategy,
    stage: Stage,
    params: &'a DiskParams,
    controller: Controller,
    targets: Vec<Option<Point>>,
}

impl Casting<'_> {
    /// Robots bound for a spot outside the sensing disk skirt around it
    /// rather than cut across.
    fn waypoint(&self, at: Point, target: Point) -> Point {
        let centre = self.stage.centre;
        if target.distance(centre) <= self.stage.sensing {
            return target;
        }
        let ring = self.stage.parking_radius();
        let keep_out = self.stage.sensing + self.stage.margin / 2.0;
        let from = at - centre;
        if from.norm() < keep_out {
            return self.stage.park(at);
        }
        if centre.distance_to_segment(at, target) >= keep_out {
            return target;
        }
        let to = target - centre;
        let swing = (to.y.atan2(to.x) - from.y.atan2(from.x) + PI).rem_euclid(TAU) - PI;
        let stride = (keep_out / ring).acos().min(swing.abs());
        let angle = from.y.atan2(from.x) + stride.copysign(swing);
        centre + Point::new(angle.cos(), angle.sin()) * ring
    }

    /// Where obstacles not yet in view will cross into it, soonest first.
    ///
    /// Candidates are the obstacles within `2r` of the path over the
    /// lookahead; each drifts across the participant's view opposite to the
    /// path's mean velocity over that window, and is met where that track
    /// first reaches the parking circle.
    fn upcoming(&self, k: usize) -> Vec<Point> {
        let here = self.path[k];
        let last = (k + self.lookahead).min(self.path.len() - 1);
        if last == k {
            return Vec::new();
        }
        let mut found: Vec<Point> = Vec::new();
        for &ahead in &self.path[k + 1..=last] {
            for p in self.field.visible_from(ahead, 2.0 * self.r) {
                if p.distance(here) > self.r && !found.contains(&p) {
                    found.push(p);
                }
            }
        }
        let drift = (here - self.path[last]) * (1.0 / (last - k) as f64);
        let ring = self.stage.parking_radius();
        let mut entries: Vec<(f64, Point)> = found
            .into_iter()
            .filter_map(|p| {
                let rel = p - here;
                entry_time(rel, drift, ring).map(|t| (t, rel + drift * t))
            })
            .collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        entries.into_iter().map(|(_, rel)| self.stage.centre + rel).collect()
    }
}

/// First `t >= 0` at which `start + t·velocity` lies on the circle of radius
/// `radius`, coming from outside.
fn entry_time(start: Point, velocity: Point, radius: f64) -> Option<f64> {
    let a = velocity.x * velocity.x + velocity.y * velocity.y;
    if a == 0.0 {
        return None;
    }
    let b = 2.0 * (start.x * velocity.x + start.y * velocity.y);
    let c = start.x * start.x + start.y * start.y - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t >= 0.0).then_some(t)
}

impl Orchestrator<SingleSystem, DiskSystem> for Casting<'_> {
    fn policy_descriptors(&self) -> Vec<String> {
        vec![format!("casting(strategy={})", self.strategy)]
    }

    fn plan(&mut self, k: usize, history: &[StateOf<SingleSystem>], primary: &StateOf<DiskSystem>) -> Result<()> {
        let here = history[k][0];
        let slack = self.controller.arrival;
        let roles: Vec<Point> = self
            .field
            .visible_from(here, self.r)
            .into_iter()
            .map(|p| self.stage.centre + inside(p - here, self.r, slack))
            .collect();
        let upcoming = if self.strategy == Strategy::Heuristic {
            self.upcoming(k)
        } else {
            Vec::new()
        };
        let positions: Vec<Point> = primary.iter().map(|p| p.position()).collect();
        let plan = assign_roles(&positions, &roles, &upcoming, self.strategy, &self.stage)?;
        self.targets = plan.targets(positions.len());
        Ok(())
    }

    fn roles(&self) -> Vec<usize> {
        vec![self.stage.participant]
    }

    fn act(
        &mut self,
        _history: &[StateOf<SingleSystem>],
        primary: &StateOf<DiskSystem>,
    ) -> Result<ActionOf<DiskSystem>> {
        let routed: Vec<Option<Point>> = self
            .targets
            .iter()
            .zip(primary.iter())
            .map(|(t, pose)| t.map(|t| self.waypoint(pose.position(), t)))
            .collect();
        Ok(drive_to_targets(primary, &routed, self.params, &self.controller))
    }
}

/// Simulate one cell: roll out the trial's random path, then cast the disk
/// robots until the participant has seen every step of it.
pub fn run_cell(config: &ExperimentConfig, cell: Cell) -> Result<DiskRun> {
    config.validate()?;
    let field = config.field()?;
    let seed = trial_seed(config.seed, cell.trial as u64);
    let single_params = config.single_params();
    let secondary = single_system(single_params, field)?;
    let secondary_trace = if config.horizon == 0 {
        ExecutionTrace::start(&secondary, secondary.initial_state())?
    } else {
        let policy = random_path_policy(&single_params, seed, config.path_period);
        rollout(&secondary, &[policy], config.horizon)?
    };

    let params = config.disk_params(cell.n_primary);
    let primary = disks_system(params.clone())?;
    let tolerance = config.tolerance();
    let mut casting = Casting {
        path: secondary_trace.states.iter().map(|x| x[0]).collect(),
        field,
        r: config.r,
        lookahead: config.lookahead,
        strategy: cell.strategy,
        stage: Stage {
            participant: 0,
            centre: config.workspace.centre(),
            sensing: config.sensing_primary(),
            margin: config.margin * config.r,
            max_speed: params.max_speed(),
        },
        params: &params,
        controller: Controller::new(&params, tolerance / 2.0),
        targets: Vec::new(),
    };
    let run = orchestrate(
        &secondary,
        &secondary_trace.states,
        &primary,
        &mut casting,
        OrchestrationConfig {
            participants: 1,
            tolerance,
            plateau_cap: config.plateau_cap,
        },
    )?;
    let report = verify_illusion(
        &secondary,
        &secondary_trace.states,
        &primary,
        &run.primary.states,
        1,
        &run.witness,
        tolerance,
    )?;
    let secondary_steps = secondary_trace.horizon();
    let primary_steps = run.primary.horizon();
    let record = TimingRecord {
        trial_id: cell.trial,
        strategy: cell.strategy,
        n_primary: cell.n_primary,
        secondary_steps,
        primary_steps,
        slowdown_max: report.measured_slowdown,
        slowdown_mean: if secondary_steps == 0 {
            0.0
        } else {
            primary_steps as f64 / secondary_steps as f64
        },
        seed,
    };
    Ok(DiskRun {
        record,
        secondary,
        secondary_trace,
        primary,
        primary_trace: run.primary,
        witness: run.witness,
        report,
    })
}

/// Every cell in order, one after another.
pub fn run_illusion_experiment(config: &ExperimentConfig) -> Result<Vec<TimingRecord>> {
    experiment_cells(config)?
        .into_iter()
        .map(|cell| run_cell(config, cell).map(|run| run.record))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bound_and_counts() {
        let config = ExperimentConfig::default();
        let m = config.m_bound().unwrap();
        assert_eq!(config.robot_counts().unwrap(), (m + 1..=m + 5).collect::<Vec<_>>());
        assert!(config.validate().is_ok());
    }

    #[test]
    fn narrower_primary_sensing_is_rejected() {
        let config = ExperimentConfig {
            r_primary: Some(0.5),
            ..ExperimentConfig::default()
        };
        assert!(matches!(config.validate(), Err(Error::InvalidParams(_))));
    }

    #[test]
    fn too_few_robots_is_rejected() {
        let m = ExperimentConfig::default().m_bound().unwrap();
        let config = ExperimentConfig {
            robot_counts: Some(vec![m]),
            ..ExperimentConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn empty_path_passes_trivially() {
        let config = ExperimentConfig {
            horizon: 0,
            trials: 1,
            ..ExperimentConfig::default()
        };
        let cell = experiment_cells(&config).unwrap()[0];
        let run = run_cell(&config, cell).unwrap();
        assert!(run.report.pass);
        assert!(run.report.plateau_lengths.is_empty());
        assert_eq!(run.record.secondary_steps, 0);
    }

    #[test]
    fn entry_on_the_circle() {
        let t = entry_time(Point::new(3.0, 0.0), Point::new(-1.0, 0.0), 1.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert_eq!(entry_time(Point::new(3.0, 2.0), Point::new(-1.0, 0.0), 1.0), None);
        assert_eq!(entry_time(Point::new(3.0, 0.0), Point::new(1.0, 0.0), 1.0), None);
    }

    #[test]
    fn pull_in_keeps_direction() {
        let p = inside(Point::new(0.6, 0.0), 0.6, 0.01);
        assert!((p.x - 0.59).abs() < 1e-15 && p.y == 0.0);
        assert_eq!(inside(Point::new(0.1, 0.2), 0.6, 0.01), Point::new(0.1, 0.2));
    }
}
