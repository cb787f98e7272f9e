//! Differential-drive kinematics.
//!
//! The robot is a unicycle driven by a commanded linear velocity `v` and yaw
//! rate `w`. Commands are held constant over a control period and the pose is
//! advanced along the exact circular arc they describe.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Below this yaw rate the arc update degenerates to a straight line.
const STRAIGHT_LINE_EPS: f64 = 1e-9;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a - TAU * ((a + PI) / TAU).floor();
    // floor can land exactly on π after rounding
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Planar pose. `yaw` is kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.x).hypot(p[1] - self.y)
    }

    /// Bearing of `p` relative to the heading, wrapped to `[-π, π)`.
    pub fn bearing_to(&self, p: [f64; 2]) -> f64 {
        wrap_angle((p[1] - self.y).atan2(p[0] - self.x) - self.yaw)
    }
}

/// Velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub v: f64,
    pub w: f64,
}

impl Action {
    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

/// Geometry and velocity limits of a differential-drive base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotProfile {
    pub name: String,
    pub wheel_radius: f64,
    pub wheel_base: f64,
    pub v_range: [f64; 2],
    pub w_range: [f64; 2],
    pub body_radius: f64,
}

impl RobotProfile {
    /// Nominal Jetbot: 60 mm wheels, 12 cm track.
    pub fn jetbot() -> Self {
        Self {
            name: "jetbot".into(),
            wheel_radius: 0.03,
            wheel_base: 0.12,
            v_range: [0.1, 0.5],
            w_range: [-0.5, 0.5],
            body_radius: 0.1,
        }
    }

    /// TurtleBot 4 Lite: 72 mm wheels, 0.31 m/s safe-mode top speed.
    pub fn turtlebot4lite() -> Self {
        Self {
            name: "turtlebot4lite".into(),
            wheel_radius: 0.036,
            wheel_base: 0.233,
            v_range: [0.1, 0.31],
            w_range: [-0.5, 0.5],
            body_radius: 0.171,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "jetbot" => Some(Self::jetbot()),
            "turtlebot4lite" => Some(Self::turtlebot4lite()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.wheel_radius, self.wheel_base, self.body_radius]
            .iter()
            .chain(&self.v_range)
            .chain(&self.w_range)
            .all(|x| x.is_finite());
        if !finite {
            return Err("robot profile contains non-finite values".into());
        }
        if self.wheel_radius <= 0.0 {
            return Err("wheel_radius must be > 0".into());
        }
        if self.wheel_base <= 0.0 {
            return Err("wheel_base must be > 0".into());
        }
        if self.v_range[0] >= self.v_range[1] {
            return Err("v_range must be a nonempty interval".into());
        }
        if self.w_range[0] >= self.w_range[1] {
            return Err("w_range must be a nonempty interval".into());
        }
        if self.body_radius < 0.0 {
            return Err("body_radius must be >= 0".into());
        }
        Ok(())
    }

    /// Maps a velocity back to `[-1, 1]` (inverse of the clamp's affine part).
    pub fn normalize_action(&self, a: Action) -> [f64; 2] {
        [
            to_unit(a.v, self.v_range),
            to_unit(a.w, self.w_range),
        ]
    }
}

impl Default for RobotProfile {
    fn default() -> Self {
        Self::jetbot()
    }
}

fn from_unit(u: f64, range: [f64; 2]) -> f64 {
    range[0] + 0.5 * (u + 1.0) * (range[1] - range[0])
}

fn to_unit(x: f64, range: [f64; 2]) -> f64 {
    2.0 * (x - range[0]) / (range[1] - range[0]) - 1.0
}

/// Saturates `raw` to `[-1, 1]` and maps it affinely onto the profile's
/// velocity ranges. Non-finite components are treated as 0.
pub fn clamp_action(raw: [f64; 2], profile: &RobotProfile) -> Action {
    let sat = |x: f64| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
    Action {
        v: from_unit(sat(raw[0]), profile.v_range),
        w: from_unit(sat(raw[1]), profile.w_range),
    }
}

/// Advances `pose` along the arc traced by a constant `action` for `dt`
/// seconds.
pub fn integrate(pose: Pose, action: Action, dt: f64) -> Pose {
    let Action { v, w } = action;
    if w.abs() < STRAIGHT_LINE_EPS {
        return Pose {
            x: pose.x + v * dt * pose.yaw.cos(),
            y: pose.y + v * dt * pose.yaw.sin(),
            yaw: wrap_angle(pose.yaw + w * dt),
        };
    }
    let r = v / w;
    let yaw_end = pose.yaw + w * dt;
    Pose {
        x: pose.x + r * (yaw_end.sin() - pose.yaw.sin()),
        y: pose.y - r * (yaw_end.cos() - pose.yaw.cos()),
        yaw: wrap_angle(yaw_end),
    }
}

/// Wheel angular velocities `(left, right)` in rad/s.
pub fn wheel_speeds(action: Action, profile: &RobotProfile) -> (f64, f64) {
    let half = 0.5 * profile.wheel_base;
    (
        (action.v - action.w * half) / profile.wheel_radius,
        (action.v + action.w * half) / profile.wheel_radius,
    )
}

/// Inverse of [`wheel_speeds`].
pub fn action_from_wheel_speeds(left: f64, right: f64, profile: &RobotProfile) -> Action {
    let r = profile.wheel_radius;
    Action {
        v: 0.5 * r * (left + right),
        w: r * (right - left) / profile.wheel_base,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn clamp_bounds_and_midpoint() {
        let p = RobotProfile::jetbot();
        assert_eq!(clamp_action([-1.0, 0.0], &p), Action::new(0.1, 0.0));
        assert_eq!(clamp_action([1.0, 1.0], &p), Action::new(0.5, 0.5));
        let mid = clamp_action([0.0, 0.0], &p);
        assert!(close(mid.v, 0.3, 1e-15) && mid.w == 0.0);
        // saturation before mapping
        assert_eq!(clamp_action([7.0, -3.0], &p), Action::new(0.5, -0.5));
        assert_eq!(clamp_action([f64::NAN, f64::INFINITY], &p).v, mid.v);
    }

    #[test]
    fn integrate_examples() {
        let o = Pose::default();
        let s = integrate(o, Action::new(0.5, 0.0), 0.1);
        assert!(close(s.x, 0.05, 1e-15) && s.y == 0.0 && s.yaw == 0.0);
        let r = integrate(o, Action::new(0.0, 0.5), 0.1);
        assert!(close(r.x, 0.0, 1e-15) && close(r.y, 0.0, 1e-15) && close(r.yaw, 0.05, 1e-15));
        let a = integrate(o, Action::new(0.5, 0.5), 1.0);
        // closed form: x = sin(0.5), y = 1 - cos(0.5)
        assert!(close(a.x, 0.4794, 1e-4), "{a:?}");
        assert!(close(a.y, 0.1224, 1e-4), "{a:?}");
        assert!(close(a.yaw, 0.5, 1e-12));
    }

    #[test]
    fn wheel_speed_examples() {
        let p = RobotProfile::turtlebot4lite();
        let (l, r) = wheel_speeds(Action::new(0.31, 0.0), &p);
        assert!(close(l, 8.611, 1e-3) && l == r);
        let (l, r) = wheel_speeds(Action::new(0.0, 0.4), &p);
        assert_eq!(l, -r);
        assert!(r > 0.0);
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -PI, -PI + 1e-12, 0.0, PI, PI - 1e-12, 3.0 * PI, 1e6] {
            let w = wrap_angle(a);
            assert!((-PI..PI).contains(&w), "{a} -> {w}");
            assert!(close((w - a).sin(), 0.0, 1e-9));
        }
        assert_eq!(wrap_angle(PI), -PI);
    }

    #[test]
    fn circle_closes_after_one_period() {
        for &(v, w) in &[(0.3, 0.5), (0.5, -0.25), (0.1, 0.37)] {
            let start = Pose::new(1.2, -0.7, 2.0);
            let period = TAU / f64::abs(w);
            let end = integrate(start, Action::new(v, w), period);
            assert!(close(end.x, start.x, 1e-6) && close(end.y, start.y, 1e-6));
            assert!(close(wrap_angle(end.yaw - start.yaw), 0.0, 1e-6));
        }
    }

    proptest! {
        #[test]
        fn flow_composition(
            x in -3.0..3.0f64, y in -3.0..3.0f64, yaw in -PI..PI,
            v in 0.0..0.5f64, w in -0.5..0.5f64, dt in 0.01..1.0f64,
        ) {
            let p = Pose::new(x, y, yaw);
            let a = Action::new(v, w);
            let twice = integrate(integrate(p, a, dt), a, dt);
            let once = integrate(p, a, 2.0 * dt);
            prop_assert!(close(twice.x, once.x, 1e-9));
            prop_assert!(close(twice.y, once.y, 1e-9));
            prop_assert!(close(wrap_angle(twice.yaw - once.yaw), 0.0, 1e-9));
        }

        #[test]
        fn clamp_idempotent_and_monotone(a in -2.0..2.0f64, b in -2.0..2.0f64, d in 0.0..1.0f64) {
            let p = RobotProfile::jetbot();
            let act = clamp_action([a, b], &p);
            let again = clamp_action(p.normalize_action(act), &p);
            prop_assert!(close(again.v, act.v, 1e-12) && close(again.w, act.w, 1e-12));
            let up = clamp_action([a + d, b + d], &p);
            prop_assert!(up.v >= act.v && up.w >= act.w);
            prop_assert!(act.v >= p.v_range[0] && act.v <= p.v_range[1]);
        }

        #[test]
        fn wheel_speed_inverse(v in -1.0..1.0f64, w in -2.0..2.0f64) {
            let p = RobotProfile::turtlebot4lite();
            let (l, r) = wheel_speeds(Action::new(v, w), &p);
            let back = action_from_wheel_speeds(l, r, &p);
            prop_assert!(close(back.v, v, 1e-12) && close(back.w, w, 1e-12));
        }
    }
}
