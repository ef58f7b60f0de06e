use std::sync::OnceLock;

use rayon::prelude::*;

use super::RegistrationError;
use crate::geometry::{Point3, RigidMotion};
use crate::spatial::KdTree;

/// Point set with a prebuilt spatial index. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct PointCloud {
    index: KdTree,
    resolution: OnceLock<Result<f64, RegistrationError>>,
}

/// A matched pair between a source point and its nearest target point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: usize,
    pub distance: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            index: KdTree::build(&points),
            resolution: OnceLock::new(),
        }
    }

    pub fn points(&self) -> &[Point3] {
        self.index.points()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn transformed(&self, motion: &RigidMotion) -> PointCloud {
        PointCloud::new(motion.transform_points(self.points()))
    }

    /// Horizontal resolution `L_r`: mean distance from each point to its
    /// closest other point. Computed once and cached.
    pub fn resolution(&self) -> Result<f64, RegistrationError> {
        self.resolution
            .get_or_init(|| estimate_resolution(self))
            .clone()
    }

    /// Fails when fewer than three points exist or all are collinear.
    pub fn check_registrable(&self) -> Result<(), RegistrationError> {
        let pts = self.points();
        if pts.len() < 3 {
            return Err(RegistrationError::TooFewPoints {
                needed: 3,
                found: pts.len(),
            });
        }
        let centroid = pts.iter().sum::<Point3>() / pts.len() as f64;
        let cov = pts.iter().fold(nalgebra::Matrix3::zeros(), |acc, p| {
            let d = p - centroid;
            acc + d * d.transpose()
        });
        let mut sv = cov.symmetric_eigenvalues();
        sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
        if sv[0] <= 0.0 || sv[1] <= 1e-12 * sv[0] {
            return Err(RegistrationError::DegenerateConfiguration);
        }
        Ok(())
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        PointCloud::new(points)
    }
}

pub fn estimate_resolution(cloud: &PointCloud) -> Result<f64, RegistrationError> {
    let n = cloud.len();
    if n < 2 {
        return Err(RegistrationError::TooFewPoints { needed: 2, found: n });
    }
    let tree = cloud.index();
    let total: f64 = cloud
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            tree.nearest_excluding(p, i)
                .map(|nn| nn.dist_sq.sqrt())
                .unwrap_or(0.0)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let mean = total / n as f64;
    if mean > 0.0 {
        Ok(mean)
    } else {
        Err(RegistrationError::ZeroResolution)
    }
}

/// Nearest target point for every source point.
pub fn nearest_neighbors(
    source: &PointCloud,
    target: &PointCloud,
) -> Result<Vec<Correspondence>, RegistrationError> {
    match_points(source.points(), target)
}

pub(crate) fn match_points(
    points: &[Point3],
    target: &PointCloud,
) -> Result<Vec<Correspondence>, RegistrationError> {
    if target.is_empty() {
        return Err(RegistrationError::EmptyTarget);
    }
    let tree = target.index();
    Ok(points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = tree.nearest(p).expect("non-empty target");
            Correspondence {
                source_index: i,
                target_index: nn.index,
                distance: nn.dist_sq.sqrt(),
            }
        })
        .collect())
}

/// `N_p`: correspondences within `factor · resolution`.
pub fn count_coincident(corrs: &[Correspondence], resolution: f64, factor: f64) -> usize {
    let cutoff = factor * resolution;
    corrs.iter().filter(|c| c.distance <= cutoff).count()
}

pub fn overlap_rate(corrs: &[Correspondence], resolution: f64, factor: f64) -> f64 {
    if corrs.is_empty() {
        return 0.0;
    }
    count_coincident(corrs, resolution, factor) as f64 / corrs.len() as f64
}
