//! Illusions: one system reproducing, for some of another system's robots,
//! exactly the percepts they would have had.
//!
//! A [`WitnessBundle`] records how the primary system did it over a finite
//! horizon: which primary robot played each participant at each secondary
//! step (`roles`), and which primary step each secondary step was shown at
//! (`timescale`). [`verify_illusion`] replays the comparison independently of
//! whatever produced the witness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{
    observe, step, ActionOf, Arithmetic, BoxedPolicy, ExecutionTrace, JointState, Observation, ObservationOf, StateOf,
    TraceOf, TransitionSystem,
};

/// Secondary step -> primary step. Strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TimeScale(Vec<usize>);

impl TimeScale {
    pub fn new(steps: Vec<usize>) -> Result<Self> {
        if let Some(i) = steps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NotStrictlyIncreasing(i + 1));
        }
        Ok(TimeScale(steps))
    }

    pub fn identity(horizon: usize) -> Self {
        TimeScale((0..=horizon).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, k: usize) -> Option<usize> {
        self.0.get(k).copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `z(k+1) - z(k)` for every recorded `k`.
    pub fn plateaus(&self) -> Vec<usize> {
        self.0.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

impl TryFrom<Vec<usize>> for TimeScale {
    type Error = Error;

    fn try_from(steps: Vec<usize>) -> Result<Self> {
        TimeScale::new(steps)
    }
}

impl From<TimeScale> for Vec<usize> {
    fn from(z: TimeScale) -> Self {
        z.0
    }
}

/// Largest plateau `max_k z(k+1) - z(k)`.
pub fn measure_slowdown(timescale: &TimeScale) -> Result<usize> {
    timescale.plateaus().into_iter().max().ok_or(Error::InsufficientData)
}

/// One role map per secondary step; `maps[k][i]` is the primary robot
/// playing participant `i` at step `k`. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoleMapSequence {
    maps: Vec<Vec<usize>>,
}

impl RoleMapSequence {
    pub fn new(maps: Vec<Vec<usize>>) -> Self {
        RoleMapSequence { maps }
    }

    pub fn identity(robots: usize, horizon: usize) -> Self {
        RoleMapSequence {
            maps: vec![(0..robots).collect(); horizon + 1],
        }
    }

    pub fn constant(map: Vec<usize>, horizon: usize) -> Self {
        RoleMapSequence {
            maps: vec![map; horizon + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn at(&self, k: usize) -> Option<&[usize]> {
        self.maps.get(k).map(Vec::as_slice)
    }

    pub fn push(&mut self, map: Vec<usize>) {
        self.maps.push(map);
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.maps.iter().map(Vec::as_slice)
    }
}

// Serialized as `[[k, [robot, ...]], ...]`.
impl Serialize for RoleMapSequence {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        serializer.collect_seq(self.maps.iter().enumerate())
    }
}

impl<'de> Deserialize<'de> for RoleMapSequence {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<(usize, Vec<usize>)>::deserialize(deserializer)?;
        if let Some((pos, _)) = entries.iter().enumerate().find(|(pos, (k, _))| pos != k) {
            return Err(serde::de::Error::custom(format!(
                "role map entry {pos} is labelled with the wrong step"
            )));
        }
        Ok(RoleMapSequence {
            maps: entries.into_iter().map(|(_, map)| map).collect(),
        })
    }
}

/// Primary policies, role maps and time scaling that ratify an illusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessBundle {
    /// One descriptor per primary robot.
    pub policies: Vec<String>,
    /// Number of secondary robots whose percepts are reproduced.
    pub participants: usize,
    pub roles: RoleMapSequence,
    #[serde(rename = "z")]
    pub timescale: TimeScale,
}

impl WitnessBundle {
    pub fn primary_robots(&self) -> usize {
        self.policies.len()
    }

    /// Last secondary step the witness covers.
    pub fn horizon(&self) -> usize {
        self.timescale.len().min(self.roles.len()).saturating_sub(1)
    }
}

/// Outcome of checking a witness against a pair of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllusionReport {
    /// Last secondary step checked.
    pub horizon: usize,
    pub tolerance: f64,
    /// Worst participant mismatch at each secondary step.
    pub per_step_residual: Vec<f64>,
    pub plateau_lengths: Vec<usize>,
    /// Largest plateau, or 0 when the run has a single secondary step.
    pub measured_slowdown: usize,
    pub pass: bool,
    pub first_failure: Option<usize>,
}

impl IllusionReport {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn assemble(horizon: usize, tolerance: f64, residuals: Vec<f64>, timescale: &[usize]) -> Self {
        let plateau_lengths: Vec<usize> = timescale.windows(2).map(|w| w[1] - w[0]).collect();
        let first_failure = residuals.iter().position(|r| !(*r <= tolerance));
        IllusionReport {
            horizon,
            tolerance,
            measured_slowdown: plateau_lengths.iter().copied().max().unwrap_or(0),
            plateau_lengths,
            pass: first_failure.is_none(),
            first_failure,
            per_step_residual: residuals,
        }
    }

    /// Recompute `pass` from the residuals.
    pub fn recheck(&self) -> bool {
        self.per_step_residual.iter().all(|r| *r <= self.tolerance)
    }

    pub fn mean_plateau(&self) -> f64 {
        if self.plateau_lengths.is_empty() {
            0.0
        } else {
            self.plateau_lengths.iter().sum::<usize>() as f64 / self.plateau_lengths.len() as f64
        }
    }
}

/// Check the participant constraint at every secondary step.
///
/// For each step `k` and participant `i`, the secondary percept
/// `h_i(x_k)` is compared with the percept of primary robot `roles[k][i]` in
/// primary state `timescale[k]`.
pub fn verify_illusion<S, P>(
    secondary: &S,
    secondary_states: &[StateOf<S>],
    primary: &P,
    primary_states: &[StateOf<P>],
    participants: usize,
    witness: &WitnessBundle,
    tolerance: f64,
) -> Result<IllusionReport>
where
    S: TransitionSystem + ?Sized,
    P: TransitionSystem<Observation = S::Observation> + ?Sized,
{
    if participants == 0 || participants > secondary.robot_count() {
        return Err(Error::InvalidParams(format!(
            "participant count {participants} outside 1..={}",
            secondary.robot_count()
        )));
    }
    let horizon = secondary_states
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidParams("empty secondary trace".into()))?;
    let covered = witness.timescale.len().min(witness.roles.len());
    if covered < horizon + 1 {
        return Err(Error::WitnessTooShort {
            covered,
            required: horizon + 1,
        });
    }

    let robots = primary.robot_count();
    let mut residuals = Vec::with_capacity(horizon + 1);
    for (k, x) in secondary_states.iter().enumerate() {
        let primary_step = witness.timescale.as_slice()[k];
        let x_hat = primary_states.get(primary_step).ok_or(Error::TimeOutOfRange {
            step: k,
            primary_step,
            len: primary_states.len(),
        })?;
        let roles = witness.roles.at(k).expect("coverage checked above");
        if roles.len() != participants {
            return Err(Error::InvalidParams(format!(
                "role map at step {k} has {} entries, expected {participants}",
                roles.len()
            )));
        }
        let mut worst = 0.0f64;
        for (i, &robot) in roles.iter().enumerate() {
            if robot >= robots {
                return Err(Error::RoleOutOfRange {
                    step: k,
                    participant: i,
                    robot,
                    robots,
                });
            }
            let d = secondary
                .observe_robot(x, i)
                .distance(&primary.observe_robot(x_hat, robot));
            // NaN counts as a mismatch
            worst = if d.is_nan() { f64::INFINITY } else { worst.max(d) };
        }
        residuals.push(worst);
    }
    Ok(IllusionReport::assemble(
        horizon,
        tolerance,
        residuals,
        &witness.timescale.as_slice()[..=horizon],
    ))
}

/// Every system is an illusion of itself: same policies, identity time
/// scale and identity role maps, covering `horizon` steps.
pub fn identity_witness<S>(system: &S, policies: &[BoxedPolicy<S>], horizon: usize) -> WitnessBundle
where
    S: TransitionSystem + ?Sized,
{
    let n = system.robot_count();
    WitnessBundle {
        policies: policies.iter().map(|p| p.describe()).collect(),
        participants: n,
        roles: RoleMapSequence::identity(n, horizon),
        timescale: TimeScale::identity(horizon),
    }
}

/// Chain two witnesses: `inner` has a middle system emulating the secondary,
/// `outer` has a third system emulating every robot of the middle one.
///
/// The result keeps the outer policies, uses time scale `outer.z ∘ inner.z`
/// and role maps `outer.roles[inner.z(k)] ∘ inner.roles[k]`.
pub fn compose_witness(outer: &WitnessBundle, inner: &WitnessBundle) -> Result<WitnessBundle> {
    let middle_robots = inner.primary_robots();
    if outer.participants < middle_robots {
        return Err(Error::ArityMismatch {
            participants: outer.participants,
            robots: middle_robots,
        });
    }
    let steps = inner.horizon() + 1;
    let mut z = Vec::with_capacity(steps);
    let mut roles = RoleMapSequence::default();
    for k in 0..steps {
        let mid = inner.timescale.as_slice()[k];
        let (Some(outer_step), Some(outer_roles)) = (outer.timescale.at(mid), outer.roles.at(mid)) else {
            return Err(Error::WitnessTooShort {
                covered: outer.horizon() + 1,
                required: mid + 1,
            });
        };
        z.push(outer_step);
        let inner_roles = inner.roles.at(k).expect("within inner horizon");
        let composed = inner_roles
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                outer_roles.get(r).copied().ok_or(Error::RoleOutOfRange {
                    step: k,
                    participant: i,
                    robot: r,
                    robots: outer_roles.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        roles.push(composed);
    }
    Ok(WitnessBundle {
        policies: outer.policies.clone(),
        participants: inner.participants,
        roles,
        timescale: TimeScale::new(z)?,
    })
}

/// A system whose sensor output is post-processed by `kappa`.
pub struct Coarsened<'a, S: ?Sized, K> {
    inner: &'a S,
    kappa: K,
}

/// Replace `h` with `kappa ∘ h`; dynamics are untouched, so traces of the
/// original system are traces of the coarsened one.
pub fn coarsen_system<S, K, Z>(system: &S, kappa: K) -> Coarsened<'_, S, K>
where
    S: TransitionSystem + ?Sized,
    K: Fn(&S::Observation) -> Z,
    Z: Observation,
{
    Coarsened { inner: system, kappa }
}

impl<S, K, Z> TransitionSystem for Coarsened<'_, S, K>
where
    S: TransitionSystem + ?Sized,
    K: Fn(&S::Observation) -> Z,
    Z: Observation,
{
    type State = S::State;
    type Action = S::Action;
    type Observation = Z;

    fn robot_count(&self) -> usize {
        self.inner.robot_count()
    }

    fn arithmetic(&self) -> Arithmetic {
        self.inner.arithmetic()
    }

    fn initial_state(&self) -> JointState<S::State> {
        self.inner.initial_state()
    }

    fn action_valid(&self, state: &JointState<S::State>, robot: usize, action: &S::Action) -> bool {
        self.inner.action_valid(state, robot, action)
    }

    fn transition_robot(&self, state: &JointState<S::State>, robot: usize, action: &S::Action) -> S::State {
        self.inner.transition_robot(state, robot, action)
    }

    fn observe_robot(&self, state: &JointState<S::State>, robot: usize) -> Z {
        (self.kappa)(&self.inner.observe_robot(state, robot))
    }
}

/// Joint observations seen over `trials` seeded rollouts, de-duplicated in
/// first-seen order. An under-approximation of the perceptual occurrence.
pub fn perceptual_sample<S, G>(
    system: &S,
    policies_for_seed: G,
    seed: u64,
    horizon: usize,
    trials: usize,
) -> Result<Vec<ObservationOf<S>>>
where
    S: TransitionSystem + ?Sized,
    G: Fn(u64) -> Vec<BoxedPolicy<S>>,
{
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let mut seen: Vec<ObservationOf<S>> = Vec::new();
    for trial in 0..trials {
        let policies = policies_for_seed(crate::rng::trial_seed(seed, trial as u64));
        let trace = crate::system::rollout(system, &policies, horizon)?;
        for y in trace.observations {
            if !seen.contains(&y) {
                seen.push(y);
            }
        }
    }
    Ok(seen)
}

/// Cross-system control of a primary system so that it reproduces a
/// secondary run.
pub trait Orchestrator<S: TransitionSystem + ?Sized, P: TransitionSystem + ?Sized> {
    /// One descriptor per primary robot.
    fn policy_descriptors(&self) -> Vec<String>;

    /// Called once when secondary step `k` becomes the one to reproduce.
    /// `secondary_history` holds `x_0 ..= x_k`.
    fn plan(&mut self, k: usize, secondary_history: &[StateOf<S>], primary_state: &StateOf<P>) -> Result<()>;

    /// Role map for the step most recently planned.
    fn roles(&self) -> Vec<usize>;

    /// Next primary joint action.
    fn act(&mut self, secondary_history: &[StateOf<S>], primary_state: &StateOf<P>) -> Result<ActionOf<P>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrchestrationConfig {
    pub participants: usize,
    pub tolerance: f64,
    /// Primary steps allowed for a single secondary step.
    pub plateau_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Orchestration<P: TransitionSystem + ?Sized> {
    pub primary: TraceOf<P>,
    pub witness: WitnessBundle,
}

/// Drive `primary` through `orchestrator` until it shows each secondary step
/// in turn, recording `z(k)` only once every participant's percept matches.
///
/// Every secondary step after the first costs at least one primary step, so
/// the recorded time scale is strictly increasing.
pub fn orchestrate<S, P, O>(
    secondary: &S,
    secondary_states: &[StateOf<S>],
    primary: &P,
    orchestrator: &mut O,
    config: OrchestrationConfig,
) -> Result<Orchestration<P>>
where
    S: TransitionSystem + ?Sized,
    P: TransitionSystem<Observation = S::Observation> + ?Sized,
    O: Orchestrator<S, P> + ?Sized,
{
    let mut trace: TraceOf<P> = ExecutionTrace::start(primary, primary.initial_state())?;
    let mut z = Vec::with_capacity(secondary_states.len());
    let mut roles = RoleMapSequence::default();

    for k in 0..secondary_states.len() {
        let history = &secondary_states[..=k];
        orchestrator.plan(k, history, trace.final_state())?;
        let map = orchestrator.roles();
        let wanted: Vec<S::Observation> = (0..config.participants)
            .map(|i| secondary.observe_robot(&secondary_states[k], i))
            .collect();

        let mut taken = 0usize;
        loop {
            let must_move = k > 0 && taken == 0;
            if !must_move {
                let state = trace.final_state();
                let matched = wanted.iter().zip(&map).all(|(y, &robot)| {
                    robot < primary.robot_count() && y.matches(&primary.observe_robot(state, robot), config.tolerance)
                });
                if matched {
                    break;
                }
                if taken >= config.plateau_cap {
                    return Err(Error::Timeout(k));
                }
            }
            let action = orchestrator.act(history, trace.final_state())?;
            let next = step(primary, trace.final_state(), &action)?;
            let y = observe(primary, &next)?;
            trace.states.push(next);
            trace.actions.push(action);
            trace.observations.push(y);
            taken += 1;
        }
        z.push(trace.states.len() - 1);
        roles.push(map);
    }

    Ok(Orchestration {
        primary: trace,
        witness: WitnessBundle {
            policies: orchestrator.policy_descriptors(),
            participants: config.participants,
            roles,
            timescale: TimeScale::new(z)?,
        },
    })
}
