//! Coordinate transforms from the reference frame into the frame under test.
//!
//! `poly3` maps each output coordinate through a full bivariate cubic. The
//! ten coefficients are ordered by monomial:
//! `[1, x, y, x^2, x*y, y^2, x^3, x^2*y, x*y^2, y^3]`.

use serde::{Deserialize, Serialize};

use crate::model::{Covariance2, ObjectObservation};

/// Transform family. `reported_error_m` lives in the alignment config, not
/// here: the transform itself is exact, the error figure is documentation
/// that matching may optionally consume as threshold inflation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    Identity,
    Rigid2d {
        tx: f64,
        ty: f64,
        theta_rad: f64,
    },
    Poly3 {
        x_coeffs: [f64; 10],
        y_coeffs: [f64; 10],
    },
}

impl Default for Transform {
    fn default() -> Self {
        Transform::Identity
    }
}

fn poly3_eval(c: &[f64; 10], x: f64, y: f64) -> f64 {
    c[0] + c[1] * x
        + c[2] * y
        + c[3] * x * x
        + c[4] * x * y
        + c[5] * y * y
        + c[6] * x * x * x
        + c[7] * x * x * y
        + c[8] * x * y * y
        + c[9] * y * y * y
}

fn poly3_grad(c: &[f64; 10], x: f64, y: f64) -> [f64; 2] {
    [
        c[1] + 2.0 * c[3] * x + c[4] * y + 3.0 * c[6] * x * x + 2.0 * c[7] * x * y + c[8] * y * y,
        c[2] + c[4] * x + 2.0 * c[5] * y + c[7] * x * x + 2.0 * c[8] * x * y + 3.0 * c[9] * y * y,
    ]
}

impl Transform {
    /// Identity written as a cubic; useful as a template for fitted maps.
    pub fn poly3_identity() -> Self {
        let mut x_coeffs = [0.0; 10];
        let mut y_coeffs = [0.0; 10];
        x_coeffs[1] = 1.0;
        y_coeffs[2] = 1.0;
        Transform::Poly3 { x_coeffs, y_coeffs }
    }

    pub fn apply_point(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            Transform::Identity => [x, y],
            Transform::Rigid2d { tx, ty, theta_rad } => {
                let (s, c) = theta_rad.sin_cos();
                [tx + x * c - y * s, ty + x * s + y * c]
            }
            Transform::Poly3 { x_coeffs, y_coeffs } => {
                [poly3_eval(x_coeffs, x, y), poly3_eval(y_coeffs, x, y)]
            }
        }
    }

    /// Local Jacobian `[[dx'/dx, dx'/dy], [dy'/dx, dy'/dy]]`.
    pub fn jacobian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        match self {
            Transform::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Transform::Rigid2d { theta_rad, .. } => {
                let (s, c) = theta_rad.sin_cos();
                [[c, -s], [s, c]]
            }
            Transform::Poly3 { x_coeffs, y_coeffs } => {
                [poly3_grad(x_coeffs, x, y), poly3_grad(y_coeffs, x, y)]
            }
        }
    }

    /// Maps an observation: position through the transform, yaw and
    /// velocities through the local Jacobian, covariance by congruence.
    /// Extent is carried over unchanged.
    pub fn apply_obs(&self, obs: &ObjectObservation) -> ObjectObservation {
        if matches!(self, Transform::Identity) {
            return obs.clone();
        }
        let [x, y] = self.apply_point(obs.x, obs.y);
        let j = self.jacobian(obs.x, obs.y);
        let heading = [obs.yaw.cos(), obs.yaw.sin()];
        let mapped_heading = [
            j[0][0] * heading[0] + j[0][1] * heading[1],
            j[1][0] * heading[0] + j[1][1] * heading[1],
        ];
        let yaw = mapped_heading[1].atan2(mapped_heading[0]);
        let vx = j[0][0] * obs.vx + j[0][1] * obs.vy;
        let vy = j[1][0] * obs.vx + j[1][1] * obs.vy;
        let pos_cov = obs.pos_cov.map(|cov| {
            let sym = super::Sym2::new(cov.xx(), cov.xy(), cov.yy());
            let mapped = sym.congruence(j);
            Covariance2::from_sym(mapped.xx, mapped.xy, mapped.yy)
        });
        ObjectObservation {
            x,
            y,
            yaw,
            vx,
            vy,
            pos_cov,
            ..obs.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn obs(x: f64, y: f64, yaw: f64) -> ObjectObservation {
        let mut o = ObjectObservation::basic(0.0, "a", "car", x, y, 4.0, 2.0, yaw);
        o.vx = 1.0;
        o.vy = 0.0;
        o
    }

    #[test]
    fn identity_leaves_observation_unchanged() {
        let o = obs(3.0, 4.0, 0.3);
        assert_eq!(Transform::Identity.apply_obs(&o), o);
    }

    #[test]
    fn pure_translation() {
        let t = Transform::Rigid2d {
            tx: 1.0,
            ty: 0.0,
            theta_rad: 0.0,
        };
        let mapped = t.apply_obs(&obs(0.0, 0.0, 0.0));
        assert_relative_eq!(mapped.x, 1.0);
        assert_relative_eq!(mapped.y, 0.0);
        assert_relative_eq!(mapped.yaw, 0.0);
    }

    #[test]
    fn quarter_turn_rotates_position_yaw_and_velocity() {
        // R(pi/2) * (1, 0) = (0, 1) by the rotation matrix [[0, -1], [1, 0]]
        let t = Transform::Rigid2d {
            tx: 0.0,
            ty: 0.0,
            theta_rad: FRAC_PI_2,
        };
        let mapped = t.apply_obs(&obs(1.0, 0.0, 0.0));
        assert_relative_eq!(mapped.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mapped.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(mapped.yaw, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(mapped.vx, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mapped.vy, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn poly3_identity_matches_identity() {
        let t = Transform::poly3_identity();
        let o = obs(-2.0, 5.0, 1.0);
        let mapped = t.apply_obs(&o);
        assert_relative_eq!(mapped.x, o.x, epsilon = 1e-12);
        assert_relative_eq!(mapped.y, o.y, epsilon = 1e-12);
        assert_relative_eq!(mapped.yaw, o.yaw, epsilon = 1e-12);
    }

    #[test]
    fn rigid_transform_preserves_pairwise_distances() {
        let t = Transform::Rigid2d {
            tx: -3.2,
            ty: 8.1,
            theta_rad: 2.4,
        };
        let pts = [[0.0, 0.0], [12.0, -7.0], [3.5, 3.5], [-20.0, 4.0]];
        for a in pts {
            for b in pts {
                let [ax, ay] = t.apply_point(a[0], a[1]);
                let [bx, by] = t.apply_point(b[0], b[1]);
                let before = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                let after = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
                assert_relative_eq!(before, after, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn poly3_jacobian_matches_finite_differences() {
        let mut x_coeffs = [0.0; 10];
        let mut y_coeffs = [0.0; 10];
        // mildly warped map
        x_coeffs[1] = 1.0;
        x_coeffs[4] = 0.01;
        x_coeffs[6] = 0.001;
        y_coeffs[2] = 1.0;
        y_coeffs[3] = -0.02;
        y_coeffs[9] = 0.002;
        let t = Transform::Poly3 { x_coeffs, y_coeffs };
        let (x, y) = (1.7, -2.3);
        let j = t.jacobian(x, y);
        let h = 1e-6;
        let fx = t.apply_point(x + h, y);
        let fx0 = t.apply_point(x - h, y);
        let fy = t.apply_point(x, y + h);
        let fy0 = t.apply_point(x, y - h);
        assert_relative_eq!(j[0][0], (fx[0] - fx0[0]) / (2.0 * h), epsilon = 1e-6);
        assert_relative_eq!(j[1][0], (fx[1] - fx0[1]) / (2.0 * h), epsilon = 1e-6);
        assert_relative_eq!(j[0][1], (fy[0] - fy0[0]) / (2.0 * h), epsilon = 1e-6);
        assert_relative_eq!(j[1][1], (fy[1] - fy0[1]) / (2.0 * h), epsilon = 1e-6);
    }
}
