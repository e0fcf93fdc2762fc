//! Caravans: robots on a single-lane road, each choosing its velocity within
//! `[v_min, v_max]` and sensing the gap to its nearest neighbour behind and
//! ahead.
//!
//! Besides the system itself this module has two orchestrators:
//!
//! * [`caravan_illusion`]: three primary robots reproduce robot 1's percepts
//!   in a caravan of any size. The lead robot cruises at mid-range speed and
//!   two chasers hold the requested gaps behind and ahead of it.
//! * [`caravan_dilation`]: a caravan with a narrower speed range replays every
//!   robot of another caravan of the same size, stretching each step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::illusion::{orchestrate, verify_illusion, IllusionReport, OrchestrationConfig, Orchestrator, WitnessBundle};
use crate::rng;
use crate::system::{
    rollout, ActionOf, Arithmetic, BoxedPolicy, FnPolicy, Joint, JointState, Observation, PolicyKind, StateOf, TraceOf,
    TransitionSystem, ViewOf,
};

/// Gaps at or beyond this distance stand in for an empty side of the sensor.
pub const FAR_DISTANCE: f64 = 1e6;

/// Default plateau cap for caravan orchestration.
pub const DEFAULT_PLATEAU_CAP: usize = 100_000;

/// One side of a caravan reading: a gap, or nobody there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gap {
    Finite(f64),
    Infinite,
}

impl Gap {
    pub fn finite(self) -> Option<f64> {
        match self {
            Gap::Finite(d) => Some(d),
            Gap::Infinite => None,
        }
    }

    fn distance(self, other: Gap) -> f64 {
        match (self, other) {
            (Gap::Finite(a), Gap::Finite(b)) => (a - b).abs(),
            (Gap::Infinite, Gap::Infinite) => 0.0,
            // a parked robot far enough away reads as nobody
            (Gap::Infinite, Gap::Finite(d)) | (Gap::Finite(d), Gap::Infinite) => (FAR_DISTANCE - d).max(0.0),
        }
    }

    /// Distance a primary robot must keep to show this reading.
    fn offset(self) -> Result<f64> {
        match self {
            Gap::Finite(d) if d >= FAR_DISTANCE => Err(Error::UnreachableOffset(d)),
            Gap::Finite(d) => Ok(d),
            Gap::Infinite => Ok(FAR_DISTANCE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaravanObservation {
    pub behind: Gap,
    pub ahead: Gap,
}

impl Observation for CaravanObservation {
    fn distance(&self, other: &Self) -> f64 {
        self.behind.distance(other.behind).max(self.ahead.distance(other.ahead))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaravanParams {
    pub n: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub x0: Vec<f64>,
}

impl CaravanParams {
    pub fn new(v_min: f64, v_max: f64, x0: Vec<f64>) -> Self {
        CaravanParams {
            n: x0.len(),
            v_min,
            v_max,
            x0,
        }
    }

    pub fn speed_span(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("caravan needs at least one robot".into()));
        }
        if self.x0.len() != self.n {
            return Err(Error::InvalidParams(format!(
                "{} initial positions for {} robots",
                self.x0.len(),
                self.n
            )));
        }
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(Error::InvalidParams(format!(
                "need finite v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        if self.x0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("initial positions must be finite".into()));
        }
        let mut sorted = self.x0.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("initial positions must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaravanSystem {
    params: CaravanParams,
}

pub fn caravan_system(params: CaravanParams) -> Result<CaravanSystem> {
    params.validate()?;
    Ok(CaravanSystem { params })
}

impl CaravanSystem {
    pub fn params(&self) -> &CaravanParams {
        &self.params
    }
}

/// Nearest-neighbour gaps of robot `i` on the line.
pub fn gaps(positions: &[f64], i: usize) -> CaravanObservation {
    let xi = positions[i];
    let mut behind = f64::INFINITY;
    let mut ahead = f64::INFINITY;
    for (j, &xj) in positions.iter().enumerate() {
        if j == i {
            continue;
        }
        if xj < xi {
            behind = behind.min(xi - xj);
        } else if xj > xi {
            ahead = ahead.min(xj - xi);
        }
    }
    let wrap = |d: f64| if d.is_finite() { Gap::Finite(d) } else { Gap::Infinite };
    CaravanObservation {
        behind: wrap(behind),
        ahead: wrap(ahead),
    }
}

impl TransitionSystem for CaravanSystem {
    type State = f64;
    type Action = f64;
    type Observation = CaravanObservation;

    fn robot_count(&self) -> usize {
        self.params.n
    }

    fn arithmetic(&self) -> Arithmetic {
        Arithmetic::Float
    }

    fn initial_state(&self) -> JointState<f64> {
        Joint::new(self.params.x0.clone())
    }

    fn action_valid(&self, _state: &JointState<f64>, _robot: usize, u: &f64) -> bool {
        (self.params.v_min..=self.params.v_max).contains(u)
    }

    fn transition_robot(&self, state: &JointState<f64>, robot: usize, u: &f64) -> f64 {
        state[robot] + u
    }

    fn observe_robot(&self, state: &JointState<f64>, robot: usize) -> CaravanObservation {
        gaps(state.as_slice(), robot)
    }
}

/// Every robot drives at `speed` forever.
pub fn constant_policies(n: usize, speed: f64) -> Vec<BoxedPolicy<CaravanSystem>> {
    (0..n)
        .map(|_| {
            Box::new(FnPolicy::new(
                PolicyKind::OwnHistory,
                format!("constant(v={speed})"),
                move |_: &ViewOf<'_, CaravanSystem>| speed,
            )) as BoxedPolicy<CaravanSystem>
        })
        .collect()
}

/// Each robot draws a fresh velocity uniformly from `[v_min, v_max]` every
/// step, addressed by `(seed, robot, k)`.
pub fn uniform_policies(params: &CaravanParams, seed: u64) -> Vec<BoxedPolicy<CaravanSystem>> {
    let (lo, hi) = (params.v_min, params.v_max);
    (0..params.n)
        .map(|robot| {
            Box::new(FnPolicy::new(
                PolicyKind::OwnHistory,
                format!("uniform(seed={seed},v=[{lo},{hi}])"),
                move |view: &ViewOf<'_, CaravanSystem>| {
                    let mut r = rng::stream_at(seed, robot as u64, view.step() as u64);
                    r.gen_range(lo..=hi)
                },
            )) as BoxedPolicy<CaravanSystem>
        })
        .collect()
}

/// Positions spaced `gap` apart with robot 1 in the middle of the column,
/// other robots alternating behind and ahead of it.
pub fn spread_positions(n: usize, gap: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let rank = i.div_ceil(2) as f64;
            if i % 2 == 1 {
                -rank * gap
            } else {
                rank * gap
            }
        })
        .collect()
}

/// `ceil(num / den)`, treating ratios within a relative 1e-9 of an integer
/// as that integer so float noise in the inputs cannot bump the result.
pub fn ceil_ratio(num: f64, den: f64) -> u64 {
    let ratio = num / den;
    let nearest = ratio.round();
    let stepped = if (ratio - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        ratio.ceil()
    };
    stepped.max(0.0) as u64
}

/// Slowdown of the three-robot caravan illusion:
/// `ceil(2 (v_max - v_min) / (v̂_max - v̂_min))`.
pub fn caravan_slowdown_bound(secondary: &CaravanParams, primary: &CaravanParams) -> u64 {
    ceil_ratio(2.0 * secondary.speed_span(), primary.speed_span())
}

/// Result of a caravan orchestration, verified.
#[derive(Debug, Clone)]
pub struct CaravanIllusion {
    pub secondary: CaravanSystem,
    pub secondary_trace: TraceOf<CaravanSystem>,
    pub primary: CaravanSystem,
    pub primary_trace: TraceOf<CaravanSystem>,
    pub witness: WitnessBundle,
    pub report: IllusionReport,
}

/// Lead robot at mid-range speed, chasers holding gaps behind and ahead.
struct GapChase {
    lead_speed: f64,
    v_min: f64,
    v_max: f64,
    behind: f64,
    ahead: f64,
}

impl GapChase {
    fn targets(obs: CaravanObservation) -> Result<(f64, f64)> {
        Ok((obs.behind.offset()?, obs.ahead.offset()?))
    }
}

impl Orchestrator<CaravanSystem, CaravanSystem> for GapChase {
    fn policy_descriptors(&self) -> Vec<String> {
        vec![
            format!("lead(v={})", self.lead_speed),
            "chase(behind)".to_string(),
            "chase(ahead)".to_string(),
        ]
    }

    fn plan(&mut self, _k: usize, history: &[StateOf<CaravanSystem>], _primary: &StateOf<CaravanSystem>) -> Result<()> {
        let x = history.last().expect("history holds x_k");
        (self.behind, self.ahead) = GapChase::targets(gaps(x.as_slice(), 0))?;
        Ok(())
    }

    fn roles(&self) -> Vec<usize> {
        vec![0]
    }

    fn act(
        &mut self,
        _history: &[StateOf<CaravanSystem>],
        primary: &StateOf<CaravanSystem>,
    ) -> Result<ActionOf<CaravanSystem>> {
        let lead_next = primary[0] + self.lead_speed;
        let chase = |from: f64, to: f64| (to - from).clamp(self.v_min, self.v_max);
        Ok(Joint::new(vec![
            self.lead_speed,
            chase(primary[1], lead_next - self.behind),
            chase(primary[2], lead_next + self.ahead),
        ]))
    }
}

/// Three primary robots reproduce the percepts of robot 1 of `secondary`
/// under `policies` for `horizon` steps.
///
/// Only the speed range of `primary` is used; the initial placement is lead
/// at 0 with the chasers already at the first requested gaps.
pub fn caravan_illusion(
    secondary: &CaravanParams,
    primary: &CaravanParams,
    policies: &[BoxedPolicy<CaravanSystem>],
    horizon: usize,
    tolerance: f64,
) -> Result<CaravanIllusion> {
    if primary.n != 3 {
        return Err(Error::InvalidParams(format!(
            "the gap-chase illusion uses exactly 3 primary robots, got {}",
            primary.n
        )));
    }
    let secondary_system = caravan_system(secondary.clone())?;
    let secondary_trace = rollout(&secondary_system, policies, horizon)?;

    let (behind, ahead) = GapChase::targets(gaps(&secondary.x0, 0))?;
    let primary_params = CaravanParams::new(primary.v_min, primary.v_max, vec![0.0, -behind, ahead]);
    let primary_system = caravan_system(primary_params)?;
    let mut chase = GapChase {
        lead_speed: 0.5 * (primary.v_min + primary.v_max),
        v_min: primary.v_min,
        v_max: primary.v_max,
        behind,
        ahead,
    };
    finish(
        secondary_system,
        secondary_trace,
        primary_system,
        &mut chase,
        1,
        tolerance,
    )
}

/// Same-size caravan replaying every robot of `inner_trace`, each secondary
/// step stretched over `ceil(span_inner / span_outer)` primary steps.
struct Dilation {
    outer_mid: f64,
    v_min: f64,
    v_max: f64,
    inner_mid: f64,
    stretch: f64,
    velocities: Vec<f64>,
    n: usize,
}

impl Orchestrator<CaravanSystem, CaravanSystem> for Dilation {
    fn policy_descriptors(&self) -> Vec<String> {
        (0..self.n)
            .map(|i| format!("dilated-replay(robot={i},stretch={})", self.stretch))
            .collect()
    }

    fn plan(&mut self, k: usize, history: &[StateOf<CaravanSystem>], _primary: &StateOf<CaravanSystem>) -> Result<()> {
        self.velocities = if k == 0 {
            vec![self.outer_mid; self.n]
        } else {
            let (prev, cur) = (&history[k - 1], &history[k]);
            (0..self.n)
                .map(|i| {
                    let u = cur[i] - prev[i];
                    (self.outer_mid + (u - self.inner_mid) / self.stretch).clamp(self.v_min, self.v_max)
                })
                .collect()
        };
        Ok(())
    }

    fn roles(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    fn act(
        &mut self,
        _history: &[StateOf<CaravanSystem>],
        _primary: &StateOf<CaravanSystem>,
    ) -> Result<ActionOf<CaravanSystem>> {
        Ok(Joint::new(self.velocities.clone()))
    }
}

/// Slowdown of [`caravan_dilation`]: `ceil(span_inner / span_outer)`.
pub fn dilation_stretch(inner: &CaravanParams, outer_v_min: f64, outer_v_max: f64) -> u64 {
    ceil_ratio(inner.speed_span(), outer_v_max - outer_v_min).max(1)
}

/// An `n`-illusion of the caravan `inner` (run as `inner_trace`) by a caravan
/// of the same size with speeds in `[outer_v_min, outer_v_max]`.
pub fn caravan_dilation(
    inner: &CaravanParams,
    inner_trace: &TraceOf<CaravanSystem>,
    outer_v_min: f64,
    outer_v_max: f64,
    tolerance: f64,
) -> Result<CaravanIllusion> {
    let inner_system = caravan_system(inner.clone())?;
    let outer_system = caravan_system(CaravanParams::new(outer_v_min, outer_v_max, inner.x0.clone()))?;
    let stretch = dilation_stretch(inner, outer_v_min, outer_v_max);
    let mut dilation = Dilation {
        outer_mid: 0.5 * (outer_v_min + outer_v_max),
        v_min: outer_v_min,
        v_max: outer_v_max,
        inner_mid: 0.5 * (inner.v_min + inner.v_max),
        stretch: stretch as f64,
        velocities: Vec::new(),
        n: inner.n,
    };
    finish(
        inner_system,
        inner_trace.clone(),
        outer_system,
        &mut dilation,
        inner.n,
        tolerance,
    )
}

fn finish<O: Orchestrator<CaravanSystem, CaravanSystem>>(
    secondary: CaravanSystem,
    secondary_trace: TraceOf<CaravanSystem>,
    primary: CaravanSystem,
    orchestrator: &mut O,
    participants: usize,
    tolerance: f64,
) -> Result<CaravanIllusion> {
    let run = orchestrate(
        &secondary,
        &secondary_trace.states,
        &primary,
        orchestrator,
        OrchestrationConfig {
            participants,
            tolerance,
            plateau_cap: DEFAULT_PLATEAU_CAP,
        },
    )?;
    let report = verify_illusion(
        &secondary,
        &secondary_trace.states,
        &primary,
        &run.primary.states,
        participants,
        &run.witness,
        tolerance,
    )?;
    Ok(CaravanIllusion {
        secondary,
        secondary_trace,
        primary,
        primary_trace: run.primary,
        witness: run.witness,
        report,
    })
}
