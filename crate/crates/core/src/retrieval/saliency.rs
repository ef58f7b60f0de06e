use rayon::prelude::*;

use super::{RetrievalConfig, RetrievalError, TriangleMesh};

/// Scale multipliers applied to the base scale `ξ`.
pub const SCALE_MULTIPLIERS: [f64; 5] = [2.0, 3.0, 4.0, 5.0, 6.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyField {
    pub values: Vec<f64>,
    /// `ξ`, a fixed fraction of the bounding-box diagonal.
    pub scale_base: f64,
    pub scales: [f64; 5],
}

fn gaussian_average(curvature: &[f64], neighbors: &[(usize, f64)], sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let (mut num, mut den) = (0.0, 0.0);
    for &(j, d2) in neighbors {
        if d2 < sigma * sigma {
            let w = (-d2 * inv).exp();
            num += curvature[j] * w;
            den += w;
        }
    }
    num / den
}

fn ball(mesh: &TriangleMesh, v: usize, radius: f64) -> Vec<(usize, f64)> {
    let center = mesh.vertices()[v];
    let mut hits: Vec<(usize, f64)> = mesh
        .spatial_index()
        .within_radius(&center, radius)
        .into_iter()
        .map(|j| (j, (mesh.vertices()[j] - center).norm_squared()))
        .collect();
    if hits.is_empty() {
        hits.push((v, 0.0));
    }
    hits
}

fn curvature_of(mesh: &TriangleMesh) -> Result<&[f64], RetrievalError> {
    mesh.curvature().ok_or(RetrievalError::CurvatureMissing)
}

/// Gaussian-weighted mean of the curvature over the open ball of radius
/// `sigma` around vertex `v` (the vertex itself always included).
pub fn weighted_curvature(mesh: &TriangleMesh, v: usize, sigma: f64) -> Result<f64, RetrievalError> {
    let curvature = curvature_of(mesh)?;
    if !(sigma > 0.0) {
        return Err(RetrievalError::InvalidConfig("sigma must be positive".into()));
    }
    Ok(gaussian_average(curvature, &ball(mesh, v, sigma), sigma))
}

/// Multi-scale center-surround saliency. Each per-scale map
/// `|G(σ) − G(2σ)|` is weighted by `((M − m̄)/M)²`, where `M` is its
/// maximum and `m̄` the mean of its other local maxima, then the five maps
/// are summed.
pub fn saliency(mesh: &TriangleMesh, cfg: &RetrievalConfig) -> Result<SaliencyField, RetrievalError> {
    let curvature = curvature_of(mesh)?;
    let diag = mesh.bounding_box_diagonal();
    if !(diag > 0.0) || !diag.is_finite() {
        return Err(RetrievalError::DegenerateBoundingBox);
    }
    let xi = cfg.scale_fraction * diag;
    let scales = SCALE_MULTIPLIERS.map(|m| m * xi);
    let max_radius = 2.0 * scales[4];

    // per vertex: [G(σ_1..σ_5), G(2σ_1..2σ_5)]
    let smoothed: Vec<[f64; 10]> = (0..mesh.vertices().len())
        .into_par_iter()
        .map(|v| {
            let nb = ball(mesh, v, max_radius);
            let mut g = [0.0; 10];
            for (k, &s) in scales.iter().enumerate() {
                g[k] = gaussian_average(curvature, &nb, s);
                g[k + 5] = gaussian_average(curvature, &nb, 2.0 * s);
            }
            g
        })
        .collect();

    let adjacency = mesh.adjacency();
    let mut values = vec![0.0; mesh.vertices().len()];
    for k in 0..5 {
        let phi: Vec<f64> = smoothed.iter().map(|g| (g[k] - g[k + 5]).abs()).collect();
        let weight = normalization_weight(&phi, &adjacency);
        if weight > 0.0 {
            for (acc, p) in values.iter_mut().zip(&phi) {
                *acc += weight * p;
            }
        }
    }
    Ok(SaliencyField {
        values,
        scale_base: xi,
        scales,
    })
}

/// `((M − m̄)/M)²`, zero for an all-zero map.
fn normalization_weight(phi: &[f64], adjacency: &[Vec<usize>]) -> f64 {
    let (argmax, max) = phi
        .iter()
        .copied()
        .enumerate()
        .fold((usize::MAX, 0.0), |b, (i, p)| if p > b.1 { (i, p) } else { b });
    if !(max > 0.0) {
        return 0.0;
    }
    let (sum, count) = phi
        .iter()
        .enumerate()
        .filter(|&(i, &p)| {
            i != argmax && p > 0.0 && adjacency[i].iter().all(|&j| phi[j] <= p)
        })
        .fold((0.0, 0usize), |(s, c), (_, &p)| (s + p, c + 1));
    let mean_local = if count == 0 { 0.0 } else { sum / count as f64 };
    let r = (max - mean_local) / max;
    r * r
}
