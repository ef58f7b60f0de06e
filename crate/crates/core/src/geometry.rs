//! Rigid motions in SE(3) and their twist coordinates in se(3).
//!
//! A [`RigidMotion`] maps a point `p` to `R·p + t`. Composition `a.compose(&b)`
//! applies `b` first, then `a`. Twists pack as `[omega; nu]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use thiserror::Error;

pub type Point3 = Vector3<f64>;

/// Frobenius-norm drift of `RᵀR − I` above which a composed rotation is
/// projected back onto SO(3).
const ORTHONORMAL_DRIFT: f64 = 1e-12;
/// Rotations whose angle lies within this distance of π have no unique log.
const BRANCH_CUT_MARGIN: f64 = 1e-6;
/// Below this angle the trigonometric coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {angle} is within {BRANCH_CUT_MARGIN} of pi; logarithm is not unique")]
    AngleAtBranchCut { angle: f64 },
    #[error("malformed transform: {0}")]
    MalformedTransform(String),
}

/// Element of SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Element of se(3): rotation vector `omega` (radians) and translational part `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub nu: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a motion from raw parts, projecting `rotation` onto SO(3) if it
    /// has drifted.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: orthonormalize(rotation),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about `axis` (need not be normalized) by `angle` radians.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self {
            rotation: rotation_exp(&(axis * (angle / n))),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn rotation_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    pub fn with_translation(mut self, translation: Vector3<f64>) -> Self {
        self.translation = translation;
        self
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidMotion) -> RigidMotion {
        let rotation = self.rotation * other.rotation;
        RigidMotion {
            rotation: orthonormalize(rotation),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidMotion {
        let rt = self.rotation.transpose();
        RigidMotion {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn transform_points(&self, points: &[Point3]) -> Vec<Point3> {
        points.iter().map(|p| self.transform_point(p)).collect()
    }

    /// Geodesic rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    pub fn log(&self) -> Result<Twist, GeometryError> {
        log_map(self)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }

    /// Takes the upper 3×4 block as-is; the bottom row is ignored.
    pub fn from_homogeneous(h: &Matrix4<f64>) -> Self {
        Self {
            rotation: h.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: h.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Largest absolute elementwise difference of the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &RigidMotion) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).amax()
    }
}

/// Four rows of four whitespace-separated numbers, row-major, one row per
/// line. Values are printed in shortest round-trip form so reading back
/// reproduces the matrix bit for bit.
impl fmt::Display for RigidMotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.to_homogeneous();
        for r in 0..4 {
            writeln!(
                f,
                "{} {} {} {}",
                h[(r, 0)],
                h[(r, 1)],
                h[(r, 2)],
                h[(r, 3)]
            )?;
        }
        Ok(())
    }
}

impl FromStr for RigidMotion {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rows: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != 4 {
            return Err(GeometryError::MalformedTransform(format!(
                "expected 4 rows, found {}",
                rows.len()
            )));
        }
        let mut h = Matrix4::zeros();
        for (r, line) in rows.iter().enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        GeometryError::MalformedTransform(format!("row {}: bad number {tok:?}", r + 1))
                    })
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != 4 {
                return Err(GeometryError::MalformedTransform(format!(
                    "row {} has {} entries, expected 4",
                    r + 1,
                    vals.len()
                )));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::MalformedTransform(format!(
                    "row {} has non-finite entries",
                    r + 1
                )));
            }
            for (c, v) in vals.into_iter().enumerate() {
                h[(r, c)] = v;
            }
        }
        let bottom = [h[(3, 0)], h[(3, 1)], h[(3, 2)], h[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::MalformedTransform(
                "bottom row must be 0 0 0 1".into(),
            ));
        }
        let m = RigidMotion::from_homogeneous(&h);
        if m.orthonormality_error() > 1e-6 || (m.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(GeometryError::MalformedTransform(
                "rotation block is not a proper rotation".into(),
            ));
        }
        Ok(m)
    }
}

impl Twist {
    pub fn new(omega: Vector3<f64>, nu: Vector3<f64>) -> Self {
        Self { omega, nu }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn exp(&self) -> RigidMotion {
        exp_map(self)
    }

    /// Packs as `[omega; nu]`.
    pub fn vec(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.nu.x,
            self.nu.y,
            self.nu.z,
        )
    }

    /// Inverse of [`Twist::vec`].
    pub fn cev(v: &Vector6<f64>) -> Self {
        Self {
            omega: Vector3::new(v[0], v[1], v[2]),
            nu: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            omega: self.omega * s,
            nu: self.nu * s,
        }
    }

    pub fn norm(&self) -> f64 {
        self.vec().norm()
    }
}

pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// `(sin θ)/θ`, `(1 − cos θ)/θ²`, `(θ − sin θ)/θ³`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

fn rotation_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    let (a, b, _) = exp_coefficients(theta);
    let w = hat(omega);
    Matrix3::identity() + w * a + w * w * b
}

fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = (r.trace() - 1.0) / 2.0;
    let sin = vee(&(r - r.transpose())).norm() / 2.0;
    sin.atan2(cos)
}

/// Rodrigues rotation plus left-Jacobian translation.
pub fn exp_map(tw: &Twist) -> RigidMotion {
    let theta = tw.omega.norm();
    let (a, b, c) = exp_coefficients(theta);
    let w = hat(&tw.omega);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let v = Matrix3::identity() + w * b + w2 * c;
    RigidMotion {
        rotation,
        translation: v * tw.nu,
    }
}

/// Closed-form SE(3) logarithm on the principal branch.
pub fn log_map(m: &RigidMotion) -> Result<Twist, GeometryError> {
    let r = &m.rotation;
    let theta = rotation_angle(r);
    if std::f64::consts::PI - theta < BRANCH_CUT_MARGIN {
        return Err(GeometryError::AngleAtBranchCut { angle: theta });
    }
    let skew = vee(&(r - r.transpose()));
    let omega = if theta < SMALL_ANGLE {
        // θ/(2 sin θ) ≈ 1/2 + θ²/12
        skew * (0.5 + theta * theta / 12.0)
    } else {
        skew * (theta / (2.0 * theta.sin()))
    };
    let w = hat(&omega);
    // V⁻¹ = I − W/2 + k·W², k = (1 − θ sin θ / (2(1 − cos θ))) / θ²
    let k = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let (s, c) = theta.sin_cos();
        (1.0 - theta * s / (2.0 * (1.0 - c))) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w * w * k;
    Ok(Twist {
        omega,
        nu: v_inv * m.translation,
    })
}

/// Nearest rotation (polar factor) when `RᵀR` drifts from identity.
pub fn orthonormalize(r: Matrix3<f64>) -> Matrix3<f64> {
    let drift = (r.transpose() * r - Matrix3::identity()).norm();
    if drift <= ORTHONORMAL_DRIFT {
        return r;
    }
    nearest_rotation(&r)
}

pub(crate) fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        d[(imin, imin)] = -1.0;
    }
    u * d * v_t
}
