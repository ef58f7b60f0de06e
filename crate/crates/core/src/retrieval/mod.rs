//! Saliency-driven face retrieval: mean curvature, multi-scale saliency,
//! salient-region clustering and facial-triangle matching.

mod cluster;
mod mesh;
mod saliency;
mod triangle;

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

pub use cluster::{cluster_salient, SalientCluster, MIN_CLUSTER_SIZE};
pub use mesh::{mean_curvature, TriangleMesh};
pub use saliency::{saliency, weighted_curvature, SaliencyField, SCALE_MULTIPLIERS};
pub use triangle::{match_triangle, FacialTriangle, TRIANGLE_LABELS};

use crate::geometry::Point3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("face {face} references a vertex out of range")]
    IndexOutOfRange { face: usize },
    #[error("face {face} repeats a vertex index")]
    DegenerateFace { face: usize },
    #[error("vertex {0} belongs to no face")]
    UnreferencedVertex(usize),
    #[error("curvature field has {found} values for {expected} vertices")]
    CurvatureLength { expected: usize, found: usize },
    #[error("curvature has not been computed for this mesh")]
    CurvatureMissing,
    #[error("mesh bounding box has zero extent")]
    DegenerateBoundingBox,
    #[error("triangle vertices are collinear")]
    DegenerateTriangle,
    #[error("malformed facial triangle file: {0}")]
    MalformedTriangleFile(String),
    #[error("invalid retrieval configuration: {0}")]
    InvalidConfig(String),
}

/// How the saliency cut-off is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SaliencyThreshold {
    /// Fixed saliency value.
    Absolute(f64),
    /// Quantile of the per-mesh saliency distribution, in `[0, 1]`.
    Percentile(f64),
}

impl SaliencyThreshold {
    pub fn resolve(&self, values: &[f64]) -> f64 {
        match *self {
            SaliencyThreshold::Absolute(v) => v,
            SaliencyThreshold::Percentile(q) => {
                if values.is_empty() {
                    return f64::INFINITY;
                }
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let pos = (q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64).floor() as usize;
                sorted[pos]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalConfig {
    pub saliency_threshold: SaliencyThreshold,
    /// Single-linkage distance; `None` means five times the base scale.
    pub th_dist: Option<f64>,
    /// A model is a face when its best matching error is below this.
    pub thres_ft: f64,
    /// Base scale as a fraction of the bounding-box diagonal.
    pub scale_fraction: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            saliency_threshold: SaliencyThreshold::Percentile(0.7),
            th_dist: None,
            thres_ft: 0.05,
            scale_fraction: 0.003,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.into()));
        if let SaliencyThreshold::Percentile(q) = self.saliency_threshold {
            if !(0.0..=1.0).contains(&q) {
                return bad("saliency percentile must lie in [0, 1]");
            }
        }
        if matches!(self.th_dist, Some(d) if !(d > 0.0)) {
            return bad("th_dist must be positive");
        }
        if !(self.thres_ft > 0.0) {
            return bad("thres_ft must be positive");
        }
        if !(self.scale_fraction > 0.0) {
            return bad("scale_fraction must be positive");
        }
        Ok(())
    }
}

/// Per-model verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOutcome {
    pub model: usize,
    pub clusters: usize,
    /// Best matching error, `None` when fewer than three clusters exist.
    pub best_error: Option<f64>,
    pub is_face: bool,
    /// Collinear candidate triangles that were skipped.
    pub degenerate_skipped: usize,
}

impl fmt::Display for RetrievalOutcome {
    /// `id clusters best_error verdict`, with `none` for a missing candidate.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let err = match self.best_error {
            Some(e) => format!("{e:.6}"),
            None => "none".to_string(),
        };
        let verdict = if self.is_face { "face" } else { "non-face" };
        write!(f, "{} {} {} {}", self.model, self.clusters, err, verdict)
    }
}

/// Every candidate triangle over cluster centroids, wound so its normal
/// agrees with the surface normals near its corners.
pub fn candidate_triangles(
    mesh: &TriangleMesh,
    clusters: &[SalientCluster],
) -> (Vec<FacialTriangle>, usize) {
    let normals = mesh.vertex_normals();
    let cluster_normal: Vec<Point3> = clusters
        .iter()
        .map(|c| c.members.iter().map(|&i| normals[i]).sum::<Point3>())
        .collect();
    let mut out = Vec::new();
    let mut skipped = 0;
    let n = clusters.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                match FacialTriangle::new(
                    clusters[a].centroid,
                    clusters[b].centroid,
                    clusters[c].centroid,
                ) {
                    Ok(t) => {
                        let surface = cluster_normal[a] + cluster_normal[b] + cluster_normal[c];
                        out.push(if t.normal().dot(&surface) < 0.0 { t.flipped() } else { t });
                    }
                    Err(_) => skipped += 1,
                }
            }
        }
    }
    (out, skipped)
}

/// Runs the full retrieval chain on one mesh.
pub fn retrieve_one(
    model: usize,
    mesh: &TriangleMesh,
    standard: &FacialTriangle,
    cfg: &RetrievalConfig,
) -> Result<RetrievalOutcome, RetrievalError> {
    let mut mesh = mesh.clone();
    if mesh.curvature().is_none() {
        mesh.compute_curvature()?;
    }
    let field = saliency(&mesh, cfg)?;
    let clusters = cluster_salient(&field, &mesh, cfg);
    if clusters.len() < 3 {
        return Ok(RetrievalOutcome {
            model,
            clusters: clusters.len(),
            best_error: None,
            is_face: false,
            degenerate_skipped: 0,
        });
    }
    let (candidates, skipped) = candidate_triangles(&mesh, &clusters);
    let best = candidates
        .iter()
        .map(|t| match_triangle(t, standard))
        .fold(f64::INFINITY, f64::min);
    let best_error = best.is_finite().then_some(best);
    Ok(RetrievalOutcome {
        model,
        clusters: clusters.len(),
        best_error,
        is_face: best_error.is_some_and(|e| e < cfg.thres_ft),
        degenerate_skipped: skipped,
    })
}

/// Classifies every model as face or non-face against the standard
/// triangle. Models are processed in parallel; output order follows input.
pub fn retrieve_faces(
    models: &[TriangleMesh],
    standard: &FacialTriangle,
    cfg: &RetrievalConfig,
) -> Result<Vec<RetrievalOutcome>, RetrievalError> {
    cfg.validate()?;
    models
        .par_iter()
        .enumerate()
        .map(|(i, m)| retrieve_one(i, m, standard, cfg))
        .collect()
}
