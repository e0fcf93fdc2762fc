//! Go-to-goal control for disk robots.

use super::{wrap_angle, DiskParams, Point, Pose, WheelSpeeds};
use crate::system::{Joint, JointAction, JointState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    /// A robot this close to its target counts as arrived.
    pub arrival: f64,
    /// Heading error beyond which the robot turns on the spot.
    pub align: f64,
    /// Centre distance kept from higher-priority robots.
    pub clearance: f64,
}

impl Controller {
    pub fn new(params: &DiskParams, arrival: f64) -> Self {
        Controller {
            arrival,
            align: 0.02,
            clearance: 2.0 * params.robot_radius,
        }
    }

    /// Rotate until roughly facing the target, then follow the circular arc
    /// that ends on it, as fast as the wheels allow.
    pub fn go_to(&self, pose: Pose, target: Point, params: &DiskParams) -> WheelSpeeds {
        let offset = target - pose.position();
        let dist = offset.norm();
        if dist <= self.arrival {
            return WheelSpeeds::ZERO;
        }
        let limit = params.v_wheel_max;
        let half_base = params.wheelbase / 2.0;
        let error = wrap_angle(offset.y.atan2(offset.x) - pose.theta);
        if error.abs() > self.align {
            let omega_max = limit / half_base;
            let omega = (error / params.dt).clamp(-omega_max, omega_max);
            return WheelSpeeds::new(-omega * half_base, omega * half_base);
        }
        let arc = if error.abs() < 1e-12 {
            dist
        } else {
            dist * error / error.sin()
        };
        let v = arc / params.dt;
        let omega = 2.0 * error / params.dt;
        let (left, right) = (v - omega * half_base, v + omega * half_base);
        let peak = left.abs().max(right.abs());
        let scale = if peak > limit { limit / peak } else { 1.0 };
        WheelSpeeds::new(
            (left * scale).clamp(-limit, limit),
            (right * scale).clamp(-limit, limit),
        )
    }
}

/// Wheel speeds taking every robot toward its target; robots without one
/// stay still. A robot yields, by stopping, to any lower-indexed robot still
/// under way whose centre lies within the clearance of its straight path to
/// the target.
pub fn drive_to_targets(
    state: &JointState<Pose>,
    targets: &[Option<Point>],
    params: &DiskParams,
    controller: &Controller,
) -> JointAction<WheelSpeeds> {
    let n = state.len();
    let moving: Vec<bool> = (0..n)
        .map(|i| {
            targets
                .get(i)
                .copied()
                .flatten()
                .is_some_and(|t| t.distance(state[i].position()) > controller.arrival)
        })
        .collect();
    let mut actions = Vec::with_capacity(n);
    for i in 0..n {
        let Some(target) = targets.get(i).copied().flatten() else {
            actions.push(WheelSpeeds::ZERO);
            continue;
        };
        let wheels = controller.go_to(state[i], target, params);
        let here = state[i].position();
        let blocked = moving[i]
            && (0..i)
                .filter(|&j| moving[j])
                .any(|j| state[j].position().distance_to_segment(here, target) < controller.clearance);
        actions.push(if blocked { WheelSpeeds::ZERO } else { wheels });
    }
    Joint::new(actions)
}

#[cfg(test)]
mod tests {
    use super::super::{integrate, ring_poses, Workspace};
    use super::*;

    fn params(n: usize) -> DiskParams {
        DiskParams {
            n,
            workspace: Workspace {
                x_min: -2.0,
                x_max: 2.0,
                y_min: -2.0,
                y_max: 2.0,
            },
            v_wheel_max: 0.2,
            r: 0.6,
            wheelbase: 0.1,
            dt: 0.1,
            robot_radius: 0.05,
            x0: ring_poses(n, Point::new(0.0, 0.0), 1.0),
        }
    }

    #[test]
    fn at_target_stands_still() {
        let p = params(1);
        let c = Controller::new(&p, 1e-3);
        assert_eq!(
            c.go_to(Pose::new(1.0, 1.0, 0.3), Point::new(1.0, 1.0005), &p),
            WheelSpeeds::ZERO
        );
    }

    #[test]
    fn dead_ahead_is_full_speed() {
        let p = params(1);
        let c = Controller::new(&p, 1e-3);
        assert_eq!(
            c.go_to(Pose::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0), &p),
            WheelSpeeds::new(0.2, 0.2)
        );
    }

    #[test]
    fn turns_before_driving() {
        let p = params(1);
        let c = Controller::new(&p, 1e-3);
        let w = c.go_to(Pose::new(0.0, 0.0, 0.0), Point::new(0.0, 1.0), &p);
        assert!(w.left < 0.0 && w.right > 0.0 && w.left == -w.right);
    }

    #[test]
    fn reaches_targets() {
        let p = params(1);
        let c = Controller::new(&p, 1e-4);
        for target in [Point::new(0.3, -0.7), Point::new(-1.0, 0.2), Point::new(0.001, 0.0)] {
            let mut pose = Pose::new(0.0, 0.0, 1.0);
            let mut steps = 0;
            while pose.position().distance(target) > c.arrival {
                pose = integrate(pose, c.go_to(pose, target, &p), p.wheelbase, p.dt);
                steps += 1;
                assert!(steps < 200, "stuck short of {target:?}");
            }
        }
    }

    #[test]
    fn lower_index_has_right_of_way() {
        let mut p = params(3);
        p.x0 = vec![
            Pose::new(5.0, 5.0, 0.0),
            Pose::new(0.0, 0.0, 0.0),
            Pose::new(0.08, 0.0, std::f64::consts::PI),
        ];
        let c = Controller::new(&p, 1e-3);
        let state = Joint::new(p.x0.clone());
        let targets = [None, Some(Point::new(1.0, 0.0)), Some(Point::new(-1.0, 0.0))];
        let act = drive_to_targets(&state, &targets, &p, &c);
        assert_eq!(act[0], WheelSpeeds::ZERO);
        assert_eq!(act[1], WheelSpeeds::new(0.2, 0.2));
        assert_eq!(act[2], WheelSpeeds::ZERO);
    }

    #[test]
    fn arrived_robots_do_not_block() {
        let mut p = params(2);
        p.x0 = vec![Pose::new(0.05, 0.0, 0.0), Pose::new(0.0, 0.0, 0.0)];
        let c = Controller::new(&p, 1e-3);
        let state = Joint::new(p.x0.clone());
        let act = drive_to_targets(
            &state,
            &[Some(Point::new(0.05, 0.0)), Some(Point::new(1.0, 0.0))],
            &p,
            &c,
        );
        assert_eq!(act[1], WheelSpeeds::new(0.2, 0.2));
    }
}
