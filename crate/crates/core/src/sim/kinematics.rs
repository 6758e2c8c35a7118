//! Unicycle kinematics and the differential-drive wheel mapping.

use std::f64::consts::PI;

/// Planar pose; `theta` is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: normalize_angle(theta) }
    }

    /// Composes a body-frame offset onto this pose.
    pub fn compose(&self, dx: f64, dy: f64, dtheta: f64) -> Pose2D {
        let (s, c) = self.theta.sin_cos();
        Pose2D::new(self.x + c * dx - s * dy, self.y + s * dx + c * dy, self.theta + dtheta)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Exact constant-twist arc update.
pub fn integrate_pose(pose: Pose2D, v: f64, omega: f64, dt: f64) -> Pose2D {
    let th = pose.theta;
    if omega.abs() < 1e-9 {
        let (s, c) = th.sin_cos();
        return Pose2D { x: pose.x + v * dt * c, y: pose.y + v * dt * s, theta: normalize_angle(th) };
    }
    let r = v / omega;
    let th2 = th + omega * dt;
    Pose2D {
        x: pose.x + r * (th2.sin() - th.sin()),
        y: pose.y - r * (th2.cos() - th.cos()),
        theta: normalize_angle(th2),
    }
}

/// Body twist → (left, right) wheel speeds.
pub fn inverse_kinematics(v: f64, omega: f64, wheel_separation: f64) -> (f64, f64) {
    let half = 0.5 * omega * wheel_separation;
    (v - half, v + half)
}

/// (left, right) wheel speeds → body twist.
pub fn forward_kinematics(left: f64, right: f64, wheel_separation: f64) -> (f64, f64) {
    (0.5 * (left + right), (right - left) / wheel_separation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_and_straight_line() {
        assert_eq!(integrate_pose(Pose2D::default(), 0.0, 0.0, 0.1), Pose2D::default());
        assert_eq!(integrate_pose(Pose2D::default(), 1.0, 0.0, 1.0), Pose2D::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_arc_against_euler() {
        let p = integrate_pose(Pose2D::default(), 1.0, FRAC_PI_2, 1.0);
        let k = 2.0 / PI;
        assert!((p.x - k).abs() < 1e-12 && (p.y - k).abs() < 1e-12);
        assert!((p.theta - FRAC_PI_2).abs() < 1e-12);

        // forward Euler at 1e-5
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        let dt = 1e-5;
        for _ in 0..100_000 {
            x += dt * th.cos();
            y += dt * th.sin();
            th += dt * FRAC_PI_2;
        }
        assert!((p.x - x).abs() < 1e-4 && (p.y - y).abs() < 1e-4);
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-FRAC_PI_2 - 2.0 * PI) + FRAC_PI_2).abs() < 1e-12);
        assert!((normalize_angle(7.0) - (7.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn wheel_mapping() {
        assert_eq!(inverse_kinematics(0.0, 0.0, 0.34), (0.0, 0.0));
        assert_eq!(inverse_kinematics(0.5, 0.0, 0.34), (0.5, 0.5));
        let (l, r) = inverse_kinematics(0.0, 1.0, 0.34);
        assert!((l + 0.17).abs() < 1e-15 && (r - 0.17).abs() < 1e-15);
        let (v, w) = forward_kinematics(l, r, 0.34);
        assert!(v.abs() < 1e-15 && (w - 1.0).abs() < 1e-12);
    }
}
