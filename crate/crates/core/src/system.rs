//! Deterministic multi-robot transition systems.
//!
//! A system is `n` robots with per-robot state, action and observation
//! components. The joint transition is assembled from per-robot transitions,
//! each of which sees the whole joint state but only its own robot's action,
//! and the joint observation from per-robot observation maps over the joint
//! state. [`TransitionSystem`] encodes exactly that factorization, so a system
//! cannot let one robot's action leak into another robot's next state.

use std::fmt::Debug;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number representation a system computes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Exact,
    Float,
}

impl Arithmetic {
    /// Default tolerance for comparing observations in this mode.
    pub fn default_tolerance(self) -> f64 {
        match self {
            Arithmetic::Exact => 0.0,
            Arithmetic::Float => 1e-9,
        }
    }
}

/// A single robot's percept, comparable across systems that share a type.
pub trait Observation: Clone + Debug + PartialEq {
    /// Mismatch magnitude between two percepts; zero when they are the same.
    fn distance(&self, other: &Self) -> f64;

    /// Whether the percepts agree within `tolerance`. Implementations may
    /// short-circuit before computing the full distance.
    fn matches(&self, other: &Self, tolerance: f64) -> bool {
        self.distance(other) <= tolerance
    }
}

/// Observation of a fully coarsened sensor: every state reads the same.
impl Observation for () {
    fn distance(&self, _other: &Self) -> f64 {
        0.0
    }
}

/// Per-robot components of a joint state, action or observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Joint<T>(Vec<T>);

pub type JointState<X> = Joint<X>;
pub type JointAction<U> = Joint<U>;
pub type JointObservation<Y> = Joint<Y>;

impl<T> Joint<T> {
    pub fn new(components: Vec<T>) -> Self {
        Joint(components)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn get(&self, robot: usize) -> Option<&T> {
        self.0.get(robot)
    }
}

impl<T> Index<usize> for Joint<T> {
    type Output = T;

    fn index(&self, robot: usize) -> &T {
        &self.0[robot]
    }
}

impl<T> From<Vec<T>> for Joint<T> {
    fn from(components: Vec<T>) -> Self {
        Joint(components)
    }
}

impl<T> FromIterator<T> for Joint<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Joint(iter.into_iter().collect())
    }
}

impl<'a, T> IntoIterator for &'a Joint<T> {
    type Item = &'a T;
    type IntoIter = std::slice::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A deterministic multi-robot transition system.
///
/// Implementations must be pure: the same inputs always give bit-identical
/// outputs.
pub trait TransitionSystem {
    type State: Clone + Debug + PartialEq;
    type Action: Clone + Debug + PartialEq;
    type Observation: Observation;

    fn robot_count(&self) -> usize;

    fn arithmetic(&self) -> Arithmetic;

    fn initial_state(&self) -> JointState<Self::State>;

    /// Whether `robot` may take `action` from `state`.
    fn action_valid(&self, state: &JointState<Self::State>, robot: usize, action: &Self::Action) -> bool;

    /// Next state of `robot` given the joint state and that robot's action.
    fn transition_robot(&self, state: &JointState<Self::State>, robot: usize, action: &Self::Action) -> Self::State;

    /// Percept of `robot` in `state`.
    fn observe_robot(&self, state: &JointState<Self::State>, robot: usize) -> Self::Observation;
}

pub type StateOf<S> = JointState<<S as TransitionSystem>::State>;
pub type ActionOf<S> = JointAction<<S as TransitionSystem>::Action>;
pub type ObservationOf<S> = JointObservation<<S as TransitionSystem>::Observation>;
pub type TraceOf<S> = ExecutionTrace<
    <S as TransitionSystem>::State,
    <S as TransitionSystem>::Action,
    <S as TransitionSystem>::Observation,
>;

fn check_arity<S: TransitionSystem + ?Sized>(system: &S, actual: usize) -> Result<()> {
    let expected = system.robot_count();
    if actual != expected {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// One step of the joint dynamics.
pub fn step<S: TransitionSystem + ?Sized>(system: &S, state: &StateOf<S>, action: &ActionOf<S>) -> Result<StateOf<S>> {
    check_arity(system, state.len())?;
    check_arity(system, action.len())?;
    for (robot, u) in action.iter().enumerate() {
        if !system.action_valid(state, robot, u) {
            return Err(Error::InvalidAction { robot, step: None });
        }
    }
    Ok(action
        .iter()
        .enumerate()
        .map(|(robot, u)| system.transition_robot(state, robot, u))
        .collect())
}

/// Joint observation of `state`.
pub fn observe<S: TransitionSystem + ?Sized>(system: &S, state: &StateOf<S>) -> Result<ObservationOf<S>> {
    check_arity(system, state.len())?;
    Ok((0..system.robot_count())
        .map(|robot| system.observe_robot(state, robot))
        .collect())
}

/// What information a policy draws on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Own current state only.
    StateFeedback,
    /// Own past actions and observations so far.
    OwnHistory,
    /// Own history plus the state history of another system.
    CrossSystem,
}

/// The slice of a run a single robot's policy may look at.
pub struct RobotView<'a, X, U, Y> {
    robot: usize,
    kind: PolicyKind,
    states: &'a [Joint<X>],
    actions: &'a [Joint<U>],
    observations: &'a [Joint<Y>],
}

impl<'a, X, U, Y> RobotView<'a, X, U, Y> {
    pub fn new(
        robot: usize,
        kind: PolicyKind,
        states: &'a [Joint<X>],
        actions: &'a [Joint<U>],
        observations: &'a [Joint<Y>],
    ) -> Self {
        RobotView {
            robot,
            kind,
            states,
            actions,
            observations,
        }
    }

    pub fn robot(&self) -> usize {
        self.robot
    }

    /// Current time step `k`.
    pub fn step(&self) -> usize {
        self.observations.len().saturating_sub(1)
    }

    /// The robot's own current state, for state-feedback policies only.
    pub fn own_state(&self) -> Option<&'a X> {
        match self.kind {
            PolicyKind::StateFeedback => self.states.last().map(|x| &x[self.robot]),
            _ => None,
        }
    }

    /// `u_0 .. u_{k-1}` of this robot.
    pub fn own_actions(&self) -> impl Iterator<Item = &'a U> + '_ {
        self.actions.iter().map(move |u| &u[self.robot])
    }

    /// `y_0 .. y_k` of this robot.
    pub fn own_observations(&self) -> impl Iterator<Item = &'a Y> + '_ {
        self.observations.iter().map(move |y| &y[self.robot])
    }

    pub fn latest_observation(&self) -> Option<&'a Y> {
        self.observations.last().map(|y| &y[self.robot])
    }
}

pub type ViewOf<'a, S> = RobotView<
    'a,
    <S as TransitionSystem>::State,
    <S as TransitionSystem>::Action,
    <S as TransitionSystem>::Observation,
>;

/// A single robot's decision rule.
pub trait Policy<S: TransitionSystem + ?Sized>: Send + Sync {
    fn kind(&self) -> PolicyKind;

    fn act(&self, view: &ViewOf<'_, S>) -> S::Action;

    /// Stable human-readable descriptor, used in witness files.
    fn describe(&self) -> String;
}

/// Policy backed by a closure.
pub struct FnPolicy<F> {
    kind: PolicyKind,
    label: String,
    f: F,
}

impl<F> FnPolicy<F> {
    pub fn new(kind: PolicyKind, label: impl Into<String>, f: F) -> Self {
        FnPolicy {
            kind,
            label: label.into(),
            f,
        }
    }
}

impl<S, F> Policy<S> for FnPolicy<F>
where
    S: TransitionSystem + ?Sized,
    F: Fn(&ViewOf<'_, S>) -> S::Action + Send + Sync,
{
    fn kind(&self) -> PolicyKind {
        self.kind
    }

    fn act(&self, view: &ViewOf<'_, S>) -> S::Action {
        (self.f)(view)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

pub type BoxedPolicy<S> = Box<dyn Policy<S>>;

/// States, actions and observations of one run.
///
/// `states` and `observations` have one more entry than `actions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace<X, U, Y> {
    pub states: Vec<Joint<X>>,
    pub actions: Vec<Joint<U>>,
    pub observations: Vec<Joint<Y>>,
}

impl<X, U, Y> ExecutionTrace<X, U, Y> {
    /// Number of steps taken.
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn final_state(&self) -> &Joint<X> {
        self.states.last().expect("trace always holds the initial state")
    }
}

impl<X: Clone, U, Y> ExecutionTrace<X, U, Y> {
    /// Trace holding only `initial`.
    pub fn start<S>(system: &S, initial: Joint<X>) -> Result<Self>
    where
        S: TransitionSystem<State = X, Action = U, Observation = Y> + ?Sized,
    {
        let y0 = observe(system, &initial)?;
        Ok(ExecutionTrace {
            states: vec![initial],
            actions: Vec::new(),
            observations: vec![y0],
        })
    }

    /// Apply `action` to the final state and append the result.
    pub fn push<S>(&mut self, system: &S, action: Joint<U>) -> Result<()>
    where
        S: TransitionSystem<State = X, Action = U, Observation = Y> + ?Sized,
    {
        let next = step(system, self.final_state(), &action)?;
        let y = observe(system, &next)?;
        self.states.push(next);
        self.actions.push(action);
        self.observations.push(y);
        Ok(())
    }
}

/// Run `policies` from the system's initial state for `horizon` steps.
pub fn rollout<S>(system: &S, policies: &[BoxedPolicy<S>], horizon: usize) -> Result<TraceOf<S>>
where
    S: TransitionSystem + ?Sized,
{
    if horizon == 0 {
        return Err(Error::InvalidHorizon);
    }
    check_arity(system, policies.len())?;
    let mut trace = ExecutionTrace::start(system, system.initial_state())?;
    for k in 0..horizon {
        let action: ActionOf<S> = policies
            .iter()
            .enumerate()
            .map(|(robot, policy)| {
                let view = RobotView::new(robot, policy.kind(), &trace.states, &trace.actions, &trace.observations);
                policy.act(&view)
            })
            .collect();
        trace.push(system, action).map_err(|e| match e {
            Error::InvalidAction { robot, .. } => Error::InvalidAction { robot, step: Some(k) },
            other => other,
        })?;
    }
    Ok(trace)
}

/// Re-run recorded actions from `initial`.
pub fn replay<S>(system: &S, initial: StateOf<S>, actions: &[ActionOf<S>]) -> Result<TraceOf<S>>
where
    S: TransitionSystem + ?Sized,
{
    let mut trace = ExecutionTrace::start(system, initial)?;
    for (k, action) in actions.iter().enumerate() {
        trace.push(system, action.clone()).map_err(|e| match e {
            Error::InvalidAction { robot, .. } => Error::InvalidAction { robot, step: Some(k) },
            other => other,
        })?;
    }
    Ok(trace)
}
