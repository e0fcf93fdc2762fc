//! Disk robots and the obstacle field.
//!
//! The primary system is a team of differential-drive disk robots in a
//! rectangular workspace, each sensing the relative positions of teammates
//! within range `r`. The secondary system is a single point robot roaming an
//! unbounded field of identical obstacles, sensing those within `r`. One
//! primary robot, the participant, stays put at the centre of the workspace
//! while the others act out the obstacles it should be seeing.

mod assignment;
mod control;
mod experiment;
mod field;

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::system::{
    Arithmetic, BoxedPolicy, FnPolicy, Joint, JointState, Observation, PolicyKind, TransitionSystem, ViewOf,
};

pub use assignment::{
    assign_roles, bottleneck_distance, hungarian_solve, lists_match, observation_match, Assignment, AssignmentPlan,
    MatchOutcome, Offstage, RoleAssignment, Stage, Strategy,
};
pub use control::{drive_to_targets, Controller};
pub use experiment::{
    experiment_cells, run_cell, run_illusion_experiment, Cell, DiskRun, ExperimentConfig, TimingRecord,
};
pub use field::ObstacleField;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Distance to the segment `a`–`b`.
    pub fn distance_to_segment(self, a: Point, b: Point) -> f64 {
        let ab = b - a;
        let len2 = ab.x * ab.x + ab.y * ab.y;
        if len2 == 0.0 {
            return self.distance(a);
        }
        let t = (((self - a).x * ab.x + (self - a).y * ab.y) / len2).clamp(0.0, 1.0);
        self.distance(a + ab * t)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Position and heading, radians in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose { x, y, theta }
    }

    pub fn position(self) -> Point {
        Point::new(self.x, self.y)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Workspace {
    pub fn centre(&self) -> Point {
        Point::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_disk(&self, c: Point, r: f64) -> bool {
        c.x - r >= self.x_min && c.x + r <= self.x_max && c.y - r >= self.y_min && c.y + r <= self.y_max
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.x_min, self.x_max), p.y.clamp(self.y_min, self.y_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub left: f64,
    pub right: f64,
}

impl WheelSpeeds {
    pub const ZERO: WheelSpeeds = WheelSpeeds { left: 0.0, right: 0.0 };

    pub fn new(left: f64, right: f64) -> Self {
        WheelSpeeds { left, right }
    }
}

/// Exact unicycle integration over `dt`; a straight segment when the wheels
/// agree.
pub fn integrate(pose: Pose, wheels: WheelSpeeds, wheelbase: f64, dt: f64) -> Pose {
    let v = (wheels.left + wheels.right) / 2.0;
    let omega = (wheels.right - wheels.left) / wheelbase;
    let turn = omega * dt;
    let (x, y) = if turn.abs() < 1e-12 {
        (pose.x + v * dt * pose.theta.cos(), pose.y + v * dt * pose.theta.sin())
    } else {
        let radius = v / omega;
        (
            pose.x + radius * ((pose.theta + turn).sin() - pose.theta.sin()),
            pose.y - radius * ((pose.theta + turn).cos() - pose.theta.cos()),
        )
    };
    Pose::new(x, y, wrap_angle(pose.theta + turn))
}

/// Relative positions of whatever a robot senses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointSet(pub Vec<Point>);

impl PointSet {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }
}

impl Observation for PointSet {
    fn distance(&self, other: &Self) -> f64 {
        bottleneck_distance(&self.0, &other.0)
    }

    fn matches(&self, other: &Self, tolerance: f64) -> bool {
        lists_match(&self.0, &other.0, tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskParams {
    pub n: usize,
    pub workspace: Workspace,
    pub v_wheel_max: f64,
    /// Sensing range.
    pub r: f64,
    pub wheelbase: f64,
    pub dt: f64,
    pub robot_radius: f64,
    pub x0: Vec<Pose>,
}

impl DiskParams {
    /// Top forward speed.
    pub fn max_speed(&self) -> f64 {
        self.v_wheel_max
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.n == 0 {
            return bad("at least one robot is needed".into());
        }
        if self.x0.len() != self.n {
            return bad(format!("{} initial poses for {} robots", self.x0.len(), self.n));
        }
        for (name, v) in [
            ("v_wheel_max", self.v_wheel_max),
            ("r", self.r),
            ("wheelbase", self.wheelbase),
            ("dt", self.dt),
            ("robot_radius", self.robot_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        let w = &self.workspace;
        if !(w.x_min.is_finite() && w.x_max.is_finite() && w.y_min.is_finite() && w.y_max.is_finite()) {
            return bad("workspace bounds must be finite".into());
        }
        if !w.contains_disk(w.centre(), self.r) {
            return bad(format!("workspace cannot hold a disk of radius {}", self.r));
        }
        for (i, p) in self.x0.iter().enumerate() {
            if !(p.theta.is_finite() && w.contains(p.position())) {
                return bad(format!("initial pose of robot {i} lies outside the workspace"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DiskSystem {
    params: DiskParams,
}

pub fn disks_system(params: DiskParams) -> Result<DiskSystem> {
    params.validate()?;
    Ok(DiskSystem { params })
}

impl DiskSystem {
    pub fn params(&self) -> &DiskParams {
        &self.params
    }
}

impl TransitionSystem for DiskSystem {
    type State = Pose;
    type Action = WheelSpeeds;
    type Observation = PointSet;

    fn robot_count(&self) -> usize {
        self.params.n
    }

    fn arithmetic(&self) -> Arithmetic {
        Arithmetic::Float
    }

    fn initial_state(&self) -> JointState<Pose> {
        Joint::new(self.params.x0.clone())
    }

    fn action_valid(&self, _state: &JointState<Pose>, _robot: usize, u: &WheelSpeeds) -> bool {
        let limit = self.params.v_wheel_max;
        [u.left, u.right].iter().all(|w| w.is_finite() && w.abs() <= limit)
    }

    fn transition_robot(&self, state: &JointState<Pose>, robot: usize, u: &WheelSpeeds) -> Pose {
        let p = &self.params;
        let next = integrate(state[robot], *u, p.wheelbase, p.dt);
        let at = p.workspace.clamp(next.position());
        Pose::new(at.x, at.y, next.theta)
    }

    fn observe_robot(&self, state: &JointState<Pose>, robot: usize) -> PointSet {
        let me = state[robot].position();
        PointSet(
            state
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != robot)
                .map(|(_, pose)| pose.position() - me)
                .filter(|d| d.norm() <= self.params.r)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleParams {
    /// Top speed.
    pub v_max: f64,
    pub dt: f64,
    pub r: f64,
    pub x0: Point,
}

impl SingleParams {
    pub fn step_length(&self) -> f64 {
        self.v_max * self.dt
    }
}

#[derive(Debug, Clone)]
pub struct SingleSystem {
    params: SingleParams,
    field: ObstacleField,
}

pub fn single_system(params: SingleParams, field: ObstacleField) -> Result<SingleSystem> {
    for (name, v) in [("v_max", params.v_max), ("dt", params.dt), ("r", params.r)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
        }
    }
    if !params.x0.is_finite() {
        return Err(Error::InvalidParams("initial position must be finite".into()));
    }
    Ok(SingleSystem { params, field })
}

impl SingleSystem {
    pub fn params(&self) -> &SingleParams {
        &self.params
    }

    pub fn field(&self) -> &ObstacleField {
        &self.field
    }
}

impl TransitionSystem for SingleSystem {
    type State = Point;
    type Action = Point;
    type Observation = PointSet;

    fn robot_count(&self) -> usize {
        1
    }

    fn arithmetic(&self) -> Arithmetic {
        Arithmetic::Float
    }

    fn initial_state(&self) -> JointState<Point> {
        Joint::new(vec![self.params.x0])
    }

    fn action_valid(&self, _state: &JointState<Point>, _robot: usize, u: &Point) -> bool {
        u.is_finite() && u.norm() <= self.params.step_length() * (1.0 + 1e-12)
    }

    fn transition_robot(&self, state: &JointState<Point>, robot: usize, u: &Point) -> Point {
        state[robot] + *u
    }

    fn observe_robot(&self, state: &JointState<Point>, robot: usize) -> PointSet {
        let at = state[robot];
        PointSet(
            self.field
                .visible_from(at, self.params.r)
                .into_iter()
                .map(|p| p - at)
                .collect(),
        )
    }
}

/// Resampling period of the random path, in steps.
pub const PATH_PERIOD: usize = 10;

/// Heading drawn afresh every `period` steps, full speed in between.
pub fn random_path_policy(params: &SingleParams, seed: u64, period: usize) -> BoxedPolicy<SingleSystem> {
    let step = params.step_length();
    let period = period.max(1);
    Box::new(FnPolicy::new(
        PolicyKind::OwnHistory,
        format!("random-path(seed={seed}, period={period})"),
        move |view: &ViewOf<'_, SingleSystem>| {
            let leg = (view.step() / period) as u64;
            let heading = rng::stream_at(seed, 0, leg).gen_range(0.0..TAU);
            Point::new(step * heading.cos(), step * heading.sin())
        },
    ))
}

/// Independent uniform wheel speeds for every robot and step.
pub fn random_walk_policies(params: &DiskParams, seed: u64) -> Vec<BoxedPolicy<DiskSystem>> {
    let limit = params.v_wheel_max;
    (0..params.n)
        .map(|robot| {
            Box::new(FnPolicy::new(
                PolicyKind::OwnHistory,
                format!("random-walk(seed={seed}, robot={robot})"),
                move |view: &ViewOf<'_, DiskSystem>| {
                    let mut draw = rng::stream_at(seed, robot as u64, view.step() as u64);
                    WheelSpeeds::new(draw.gen_range(-limit..=limit), draw.gen_range(-limit..=limit))
                },
            )) as BoxedPolicy<DiskSystem>
        })
        .collect()
}

/// Participant at the centre facing +x, the rest on a circle around it
/// facing inward.
pub fn ring_poses(n: usize, centre: Point, radius: f64) -> Vec<Pose> {
    let mut poses = vec![Pose::new(centre.x, centre.y, 0.0)];
    let others = n.saturating_sub(1);
    for i in 0..others {
        let angle = TAU * i as f64 / others as f64;
        poses.push(Pose::new(
            centre.x + radius * angle.cos(),
            centre.y + radius * angle.sin(),
            wrap_angle(angle + PI),
        ));
    }
    poses.truncate(n);
    poses
}
