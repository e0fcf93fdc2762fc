//! Squeeze sensor systems, in exact rational arithmetic.
//!
//! Two single robots on the non-negative half line share the squeeze sensor,
//! which reads `q` when the robot is within `1/(4·2^q)` of `q/3` and a blank
//! symbol otherwise. The *thirds* robot moves in steps of `1/3`; the *binary*
//! robot moves by `±1/2^p`. The binary robot can always reproduce the thirds
//! robot's readings by chasing it greedily, but the readings it has to hit get
//! narrower as the thirds robot walks right and the chase gets longer without
//! bound. Nothing in this module touches floating point.

use std::collections::VecDeque;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::illusion::{orchestrate, verify_illusion, IllusionReport, OrchestrationConfig, Orchestrator, WitnessBundle};
use crate::system::{
    rollout, ActionOf, Arithmetic, BoxedPolicy, FnPolicy, Joint, JointState, Observation, PolicyKind, StateOf, TraceOf,
    TransitionSystem, ViewOf,
};

pub type ExactRational = num_rational::BigRational;

/// Finest binary step `1/2^p` allowed by default.
pub const DEFAULT_P_MAX: u32 = 200;

/// Chase steps allowed for one secondary step.
pub const PLATEAU_CAP: usize = 1_000_000;

pub fn rational(numer: i64, denom: i64) -> ExactRational {
    ExactRational::new(BigInt::from(numer), BigInt::from(denom))
}

fn pow2(p: u32) -> BigInt {
    BigInt::one() << p as usize
}

/// `1 / (4 · 2^q)`, the half-width of the squeeze interval around `q/3`.
pub fn half_width(q: u64) -> ExactRational {
    let q = u32::try_from(q).expect("squeeze readings beyond 2^32 are out of reach");
    ExactRational::new(BigInt::one(), pow2(q + 2))
}

/// Squeeze sensor reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SqueezeObservation {
    /// Outside every interval.
    Blank,
    Reading(u64),
}

impl fmt::Display for SqueezeObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqueezeObservation::Blank => f.write_str("⊥"),
            SqueezeObservation::Reading(q) => write!(f, "{q}"),
        }
    }
}

impl Observation for SqueezeObservation {
    fn distance(&self, other: &Self) -> f64 {
        if self == other {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// The squeeze sensor.
///
/// Intervals are disjoint for `q >= 1`, and only `q` within one of `⌊3x⌋`
/// can contain `x`, so three exact comparisons settle it.
pub fn h_sqz(x: &ExactRational) -> Result<SqueezeObservation> {
    if x.is_negative() {
        return Err(Error::NegativeState);
    }
    let three_x = x * BigInt::from(3);
    let centre = three_x.floor().to_integer();
    let lo = (&centre - BigInt::one()).max(BigInt::one());
    let hi = &centre + 1;
    let mut q = lo;
    while q <= hi {
        let qu = q.to_u64().expect("reading fits in u64");
        let offset = (x - ExactRational::new(q.clone(), BigInt::from(3))).abs();
        if offset <= half_width(qu) {
            return Ok(SqueezeObservation::Reading(qu));
        }
        q += 1;
    }
    Ok(SqueezeObservation::Blank)
}

fn is_power_of_two(n: &BigInt) -> bool {
    n.is_positive() && (n & (n - BigInt::one())).is_zero()
}

/// Whether `x` has a power-of-two denominator.
pub fn is_dyadic(x: &ExactRational) -> bool {
    is_power_of_two(x.denom())
}

/// A binary-robot move of `±1/2^p`; `p` may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryStep {
    pub forward: bool,
    pub p: i32,
}

impl BinaryStep {
    pub fn value(self) -> ExactRational {
        let mag = if self.p >= 0 {
            ExactRational::new(BigInt::one(), pow2(self.p as u32))
        } else {
            ExactRational::from_integer(pow2(self.p.unsigned_abs()))
        };
        if self.forward {
            mag
        } else {
            -mag
        }
    }

    /// Inverse of [`BinaryStep::value`]; `None` for anything that is not a
    /// signed power of two.
    pub fn from_value(u: &ExactRational) -> Option<BinaryStep> {
        let forward = u.is_positive();
        let mag = u.abs();
        let (n, d) = (mag.numer(), mag.denom());
        if n.is_one() && is_power_of_two(d) {
            Some(BinaryStep {
                forward,
                p: i32::try_from(d.bits() - 1).ok()?,
            })
        } else if d.is_one() && is_power_of_two(n) {
            Some(BinaryStep {
                forward,
                p: -i32::try_from(n.bits() - 1).ok()?,
            })
        } else {
            None
        }
    }
}

/// Robot stepping by thirds.
#[derive(Debug, Clone, Default)]
pub struct ThirdsSystem;

pub fn thirds_system() -> ThirdsSystem {
    ThirdsSystem
}

fn stays_non_negative(state: &JointState<ExactRational>, robot: usize, u: &ExactRational) -> bool {
    !(&state[robot] + u).is_negative()
}

fn observe_non_negative(x: &ExactRational) -> SqueezeObservation {
    // states are non-negative whenever every action was valid
    h_sqz(x).unwrap_or(SqueezeObservation::Blank)
}

impl TransitionSystem for ThirdsSystem {
    type State = ExactRational;
    type Action = ExactRational;
    type Observation = SqueezeObservation;

    fn robot_count(&self) -> usize {
        1
    }

    fn arithmetic(&self) -> Arithmetic {
        Arithmetic::Exact
    }

    fn initial_state(&self) -> JointState<ExactRational> {
        Joint::new(vec![ExactRational::zero()])
    }

    fn action_valid(&self, state: &JointState<ExactRational>, robot: usize, u: &ExactRational) -> bool {
        let third = rational(1, 3);
        (u.is_zero() || *u == third || *u == -third) && stays_non_negative(state, robot, u)
    }

    fn transition_robot(&self, state: &JointState<ExactRational>, robot: usize, u: &ExactRational) -> ExactRational {
        &state[robot] + u
    }

    fn observe_robot(&self, state: &JointState<ExactRational>, robot: usize) -> SqueezeObservation {
        observe_non_negative(&state[robot])
    }
}

/// Robot stepping by signed powers of two, `|p| <= p_max`.
#[derive(Debug, Clone)]
pub struct BinarySystem {
    p_max: u32,
}

pub fn binary_system(p_max: u32) -> Result<BinarySystem> {
    if p_max == 0 || p_max > i32::MAX as u32 {
        return Err(Error::InvalidParams(format!(
            "p_max must be in 1..=2^31-1, got {p_max}"
        )));
    }
    Ok(BinarySystem { p_max })
}

impl BinarySystem {
    pub fn p_max(&self) -> u32 {
        self.p_max
    }
}

impl TransitionSystem for BinarySystem {
    type State = ExactRational;
    type Action = ExactRational;
    type Observation = SqueezeObservation;

    fn robot_count(&self) -> usize {
        1
    }

    fn arithmetic(&self) -> Arithmetic {
        Arithmetic::Exact
    }

    fn initial_state(&self) -> JointState<ExactRational> {
        Joint::new(vec![ExactRational::zero()])
    }

    fn action_valid(&self, state: &JointState<ExactRational>, robot: usize, u: &ExactRational) -> bool {
        BinaryStep::from_value(u).is_some_and(|s| s.p.unsigned_abs() <= self.p_max)
            && stays_non_negative(state, robot, u)
    }

    fn transition_robot(&self, state: &JointState<ExactRational>, robot: usize, u: &ExactRational) -> ExactRational {
        &state[robot] + u
    }

    fn observe_robot(&self, state: &JointState<ExactRational>, robot: usize) -> SqueezeObservation {
        observe_non_negative(&state[robot])
    }
}

/// Largest `1/2^p` with `p >= 0` not exceeding `gap`.
fn largest_step_within(gap: &ExactRational) -> ExactRational {
    let mut step = ExactRational::one();
    while &step > gap {
        step /= BigInt::from(2);
    }
    step
}

/// Greedy chase: repeatedly take the largest power-of-two step, from `1`
/// downward, that does not jump past `target`, until within `tolerance`.
pub fn binary_chase(
    target: &ExactRational,
    current: &ExactRational,
    tolerance: &ExactRational,
) -> Result<Vec<ExactRational>> {
    if !is_dyadic(current) {
        return Err(Error::NonDyadicStart);
    }
    if target.is_negative() {
        return Err(Error::NegativeState);
    }
    if !tolerance.is_positive() {
        return Err(Error::InvalidParams("chase tolerance must be positive".into()));
    }
    let mut at = current.clone();
    let mut steps = Vec::new();
    loop {
        let gap = (target - &at).abs();
        if &gap <= tolerance {
            return Ok(steps);
        }
        let mut step = largest_step_within(&gap);
        if target < &at {
            step = -step;
        }
        at += &step;
        steps.push(step);
    }
}

/// How close the chase must get to `target`: the half-width of its squeeze
/// interval, or `1/2^p_max` when the target reads blank.
pub fn chase_tolerance(target: &ExactRational, p_max: u32) -> Result<ExactRational> {
    Ok(match h_sqz(target)? {
        SqueezeObservation::Reading(q) => half_width(q),
        SqueezeObservation::Blank => ExactRational::new(BigInt::one(), pow2(p_max)),
    })
}

/// Thirds robot policy `u = c` for all steps.
pub fn constant_thirds_policy(u: ExactRational) -> BoxedPolicy<ThirdsSystem> {
    let label = format!("constant(u={u})");
    Box::new(FnPolicy::new(
        PolicyKind::OwnHistory,
        label,
        move |_: &ViewOf<'_, ThirdsSystem>| u.clone(),
    ))
}

struct GreedyChase {
    p_max: u32,
    queue: VecDeque<ExactRational>,
}

impl Orchestrator<ThirdsSystem, BinarySystem> for GreedyChase {
    fn policy_descriptors(&self) -> Vec<String> {
        vec![format!("greedy-binary-chase(p_max={})", self.p_max)]
    }

    fn plan(&mut self, k: usize, history: &[StateOf<ThirdsSystem>], primary: &StateOf<BinarySystem>) -> Result<()> {
        let target = &history[k][0];
        let tolerance = chase_tolerance(target, self.p_max)?;
        self.queue = binary_chase(target, &primary[0], &tolerance)?.into();
        if self.queue.is_empty() && k > 0 {
            // already in place, but time must advance: nudge within tolerance
            self.queue
                .push_back(ExactRational::new(BigInt::one(), pow2(self.p_max)));
        }
        Ok(())
    }

    fn roles(&self) -> Vec<usize> {
        vec![0]
    }

    fn act(
        &mut self,
        history: &[StateOf<ThirdsSystem>],
        _primary: &StateOf<BinarySystem>,
    ) -> Result<ActionOf<BinarySystem>> {
        let step = self.queue.pop_front().ok_or_else(|| {
            Error::InvalidParams(format!(
                "chase toward step {} ended without matching the reading",
                history.len() - 1
            ))
        })?;
        Ok(Joint::new(vec![step]))
    }
}

/// One row of the plateau table: the transition from secondary step
/// `3h+1` to `3h+2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauRecord {
    pub h: u64,
    pub secondary_step: usize,
    pub plateau_len: usize,
    /// `⌊3h/2⌋`
    pub lower_bound: u64,
    /// Binary robot position at `z(3h+1)`.
    pub primary_state: ExactRational,
}

#[derive(Debug, Clone)]
pub struct SqueezeRun {
    pub secondary: ThirdsSystem,
    pub secondary_trace: TraceOf<ThirdsSystem>,
    pub primary: BinarySystem,
    pub primary_trace: TraceOf<BinarySystem>,
    pub witness: WitnessBundle,
    pub report: IllusionReport,
}

impl SqueezeRun {
    /// Plateau records for every `h >= 1` whose `3h+2` lies in the run.
    pub fn plateau_records(&self) -> Vec<PlateauRecord> {
        let z = self.witness.timescale.as_slice();
        (1u64..)
            .map_while(|h| {
                let k = 3 * h as usize + 1;
                (k + 1 < z.len()).then(|| PlateauRecord {
                    h,
                    secondary_step: k,
                    plateau_len: z[k + 1] - z[k],
                    lower_bound: 3 * h / 2,
                    primary_state: self.primary_trace.states[z[k]][0].clone(),
                })
            })
            .collect()
    }
}

/// The thirds robot walks right at `1/3` per step for `horizon` steps while
/// the binary robot chases it; verified with exact reading equality.
pub fn squeeze_illusion(horizon: usize, p_max: u32) -> Result<SqueezeRun> {
    let secondary = thirds_system();
    let primary = binary_system(p_max)?;
    let secondary_trace = rollout(&secondary, &[constant_thirds_policy(rational(1, 3))], horizon)?;
    let mut chase = GreedyChase {
        p_max,
        queue: VecDeque::new(),
    };
    let run = orchestrate(
        &secondary,
        &secondary_trace.states,
        &primary,
        &mut chase,
        OrchestrationConfig {
            participants: 1,
            tolerance: 0.0,
            plateau_cap: PLATEAU_CAP,
        },
    )?;
    let report = verify_illusion(
        &secondary,
        &secondary_trace.states,
        &primary,
        &run.primary.states,
        1,
        &run.witness,
        0.0,
    )?;
    Ok(SqueezeRun {
        secondary,
        secondary_trace,
        primary,
        primary_trace: run.primary,
        witness: run.witness,
        report,
    })
}

/// Smallest `N` with `max_{k in 1..=N} z(k+1) - z(k) > t` under the greedy
/// chase.
pub fn find_n_t(t: u64, p_max: u32) -> Result<usize> {
    if t == 0 {
        return Err(Error::InvalidParams("T must be positive".into()));
    }
    let mut horizon = 8;
    loop {
        let run = squeeze_illusion(horizon, p_max)?;
        let plateaus = run.witness.timescale.plateaus();
        let mut widest = 0;
        for (k, &len) in plateaus.iter().enumerate().skip(1) {
            widest = widest.max(len);
            if widest as u64 > t {
                return Ok(k);
            }
        }
        horizon *= 2;
    }
}

/// `⌈2T/3⌉ + 3`, the closed-form choice of `N_T`.
pub fn n_t_closed_form(t: u64) -> u64 {
    (2 * t).div_ceil(3) + 3
}

/// `3h + 1` for the least `h` with `⌊3h/2⌋ > T`: the step at which the
/// plateau lower bound alone already exceeds `T`.
pub fn n_t_from_plateau_bound(t: u64) -> u64 {
    let h = (1..).find(|h| 3 * h / 2 > t).expect("unbounded search");
    3 * h + 1
}

/// Render as `num/den`.
pub fn format_rational(x: &ExactRational) -> String {
    format!("{}/{}", x.numer(), x.denom())
}

/// `x mod 1` for a non-negative rational, handy in bit-level checks.
pub fn fractional_part(x: &ExactRational) -> ExactRational {
    let (_, r) = x.numer().div_mod_floor(x.denom());
    ExactRational::new(r, x.denom().clone())
}
