use nalgebra::Matrix3;

use super::{Correspondence, PointCloud, RegistrationError};
use crate::geometry::{Point3, RigidMotion};

/// Relative size below which a singular value counts as zero (or two
/// singular values count as equal).
const RANK_TOL: f64 = 1e-10;

/// Least-squares rigid motion taking each matched source point onto its
/// target point.
pub fn fit_rigid(
    corrs: &[Correspondence],
    source: &PointCloud,
    target: &PointCloud,
) -> Result<RigidMotion, RegistrationError> {
    let src: Vec<Point3> = corrs.iter().map(|c| source.points()[c.source_index]).collect();
    let dst: Vec<Point3> = corrs.iter().map(|c| target.points()[c.target_index]).collect();
    fit_rigid_points(&src, &dst)
}

/// Kabsch fit on paired point lists: minimizes `Σ‖R·p_i + t − q_i‖²`.
pub fn fit_rigid_points(src: &[Point3], dst: &[Point3]) -> Result<RigidMotion, RegistrationError> {
    assert_eq!(src.len(), dst.len(), "paired point lists differ in length");
    let n = src.len();
    if n < 3 {
        return Err(RegistrationError::TooFewPoints { needed: 3, found: n });
    }
    let inv_n = 1.0 / n as f64;
    let src_mean = src.iter().sum::<Point3>() * inv_n;
    let dst_mean = dst.iter().sum::<Point3>() * inv_n;
    let mut cross = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        cross += (p - src_mean) * (q - dst_mean).transpose();
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(RegistrationError::DegenerateConfiguration)?;
    let v_t = svd.v_t.ok_or(RegistrationError::DegenerateConfiguration)?;
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let (s0, s1, s2) = (sv[order[0]], sv[order[1]], sv[order[2]]);
    if !(s0 > 0.0) || s1 <= RANK_TOL * s0 {
        return Err(RegistrationError::DegenerateConfiguration);
    }

    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // A sign flip is only well defined when the smallest singular value
        // is isolated.
        if (s1 - s2) <= RANK_TOL * s0 {
            return Err(RegistrationError::DegenerateConfiguration);
        }
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidMotion::new(rotation, translation))
}

/// Sum of squared distances between `motion · src` and `dst`, pairwise.
pub fn sum_squared_residual(motion: &RigidMotion, src: &[Point3], dst: &[Point3]) -> f64 {
    src.iter()
        .zip(dst)
        .map(|(p, q)| (motion.transform_point(p) - q).norm_squared())
        .sum()
}
