//! Multi-view registration loop: overlap gating, all-pairs adaptive ICP,
//! motion averaging and outer convergence on the rotational change.

use std::time::Instant;

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::averaging::{self, connected, AveragingError, ViewGraph};
use crate::geometry::{RigidMotion, Twist};
use crate::registration::{
    count_coincident, icp_adaptive, icp_classic, match_points, ClassicIcpConfig, IcpConfig,
    PointCloud, RegistrationError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("need at least two clouds, got {0}")]
    TooFewClouds(usize),
    #[error("{clouds} clouds but the initial graph has {views} views")]
    ShapeMismatch { clouds: usize, views: usize },
    #[error("no connected set of view pairs passes the overlap gate")]
    DisconnectedAfterGating,
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// `ξ₀`: ordered pairs with overlap strictly above this are registered.
    pub overlap_gate: f64,
    /// `K`, maximum number of outer iterations.
    pub outer_iterations: usize,
    /// Stop once the largest per-view rotation change (radians) is at most this.
    pub outer_tolerance: f64,
    pub icp: IcpConfig,
    pub averaging_epsilon: f64,
    pub averaging_max_rounds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            overlap_gate: 0.5,
            outer_iterations: 10,
            outer_tolerance: 1e-5,
            icp: IcpConfig::default(),
            averaging_epsilon: averaging::DEFAULT_EPSILON,
            averaging_max_rounds: averaging::DEFAULT_MAX_ROUNDS,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::InvalidConfig(m.into()));
        if !(self.overlap_gate > 0.0 && self.overlap_gate <= 1.0) {
            return bad("overlap_gate must lie in (0, 1]");
        }
        if self.outer_iterations == 0 {
            return bad("outer_iterations must be positive");
        }
        if !(self.outer_tolerance > 0.0) {
            return bad("outer_tolerance must be positive");
        }
        if !(self.averaging_epsilon > 0.0) {
            return bad("averaging_epsilon must be positive");
        }
        if self.averaging_max_rounds == 0 {
            return bad("averaging_max_rounds must be positive");
        }
        self.icp.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    pub graph: ViewGraph,
    /// Rotation change `e^k` after each outer iteration.
    pub error_history: Vec<f64>,
    pub objective: f64,
    /// Objective after each outer iteration.
    pub objective_history: Vec<f64>,
    /// `ξ_ij` from the last gating pass; the diagonal is 1.
    pub overlap: DMatrix<f64>,
    pub wall_seconds: f64,
}

/// Fraction of `clouds[i]` points whose nearest neighbor in `clouds[j]`,
/// with both placed by their global motions, lies within `c · L_r(j)`.
pub fn compute_overlap(
    clouds: &[PointCloud],
    i: usize,
    j: usize,
    graph: &ViewGraph,
    coincidence_factor: f64,
) -> Result<f64, RegistrationError> {
    let source = &clouds[i];
    let target = &clouds[j];
    if source.is_empty() {
        return Ok(0.0);
    }
    let resolution = target.resolution()?;
    // express P_i in view j instead of moving both into the reference frame
    let to_j = graph.predicted_relative(j, i);
    let moved = to_j.transform_points(source.points());
    let corrs = match_points(&moved, target)?;
    Ok(count_coincident(&corrs, resolution, coincidence_factor) as f64 / corrs.len() as f64)
}

/// Largest rotation angle of `R_next · R_prevᵀ` over all views.
pub fn iteration_error(prev: &ViewGraph, next: &ViewGraph) -> Result<f64, PipelineError> {
    if prev.n_views() != next.n_views() {
        return Err(PipelineError::ShapeMismatch {
            clouds: next.n_views(),
            views: prev.n_views(),
        });
    }
    Ok(prev
        .global_motions()
        .iter()
        .zip(next.global_motions())
        .map(|(p, n)| {
            RigidMotion {
                rotation: n.rotation * p.rotation.transpose(),
                translation: Vector3::zeros(),
            }
            .rotation_angle()
        })
        .fold(0.0, f64::max))
}

/// `ξ_ij` for every ordered pair under the global motions of `graph`;
/// the diagonal is 1.
pub fn overlap_matrix(
    clouds: &[PointCloud],
    graph: &ViewGraph,
    factor: f64,
) -> Result<DMatrix<f64>, RegistrationError> {
    let n = clouds.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| compute_overlap(clouds, i, j, graph, factor))
        .collect::<Result<Vec<_>, _>>()?;
    let mut m = DMatrix::identity(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[(i, j)] = v;
    }
    Ok(m)
}

/// Ordered pairs `(i, j)` with `ξ_ij` strictly above `gate`.
pub fn gated_pairs(overlap: &DMatrix<f64>, gate: f64) -> Vec<(usize, usize)> {
    let n = overlap.nrows();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && overlap[(i, j)] > gate)
        .collect()
}

/// Mean over gated ordered pairs of the mean squared distance of coincident
/// correspondences, with every cloud placed by its global motion. Zero when
/// no pair passes the gate.
pub fn objective_value(
    clouds: &[PointCloud],
    graph: &ViewGraph,
    cfg: &PipelineConfig,
) -> Result<f64, RegistrationError> {
    let factor = cfg.icp.coincidence_factor;
    let overlap = overlap_matrix(clouds, graph, factor)?;
    let pairs = gated_pairs(&overlap, cfg.overlap_gate);
    pair_objective(clouds, graph, &pairs, factor)
}

/// Objective restricted to a fixed list of ordered pairs.
pub fn pair_objective(
    clouds: &[PointCloud],
    graph: &ViewGraph,
    pairs: &[(usize, usize)],
    factor: f64,
) -> Result<f64, RegistrationError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let per_pair = pairs
        .par_iter()
        .map(|&(i, j)| {
            let target = &clouds[j];
            let cutoff = factor * target.resolution()?;
            let moved = graph.predicted_relative(j, i).transform_points(clouds[i].points());
            let corrs = match_points(&moved, target)?;
            let (sum, n) = corrs
                .iter()
                .filter(|c| c.distance <= cutoff)
                .fold((0.0, 0usize), |(s, n), c| (s + c.distance * c.distance, n + 1));
            Ok(if n == 0 { 0.0 } else { sum / n as f64 })
        })
        .collect::<Result<Vec<f64>, RegistrationError>>()?;
    Ok(per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}

/// Full multi-view registration starting from the global motions in `init`
/// (its edges are ignored).
pub fn register_multiview(
    clouds: &[PointCloud],
    init: &ViewGraph,
    cfg: &PipelineConfig,
) -> Result<RegistrationReport, PipelineError> {
    let start = Instant::now();
    cfg.validate()?;
    if clouds.len() < 2 {
        return Err(PipelineError::TooFewClouds(clouds.len()));
    }
    if clouds.len() != init.n_views() {
        return Err(PipelineError::ShapeMismatch {
            clouds: clouds.len(),
            views: init.n_views(),
        });
    }
    let factor = cfg.icp.coincidence_factor;
    let mut graph = init.without_edges();
    let mut history = Vec::new();
    let mut objective_history = Vec::new();
    let mut overlap = DMatrix::identity(clouds.len(), clouds.len());

    for _ in 0..cfg.outer_iterations {
        overlap = overlap_matrix(clouds, &graph, factor)?;
        let pairs = gated_pairs(&overlap, cfg.overlap_gate);
        if !connected(clouds.len(), pairs.iter().copied()) {
            return Err(PipelineError::DisconnectedAfterGating);
        }
        // M_ij maps view j into view i: register P_j onto P_i
        let results = pairs
            .par_iter()
            .map(|&(i, j)| {
                let init_ij = graph.predicted_relative(i, j);
                icp_adaptive(&clouds[j], &clouds[i], &init_ij, &cfg.icp).map(|r| (i, j, r))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut measured = graph.without_edges();
        let mut kept = Vec::new();
        for (i, j, r) in results {
            if r.overlap_rate >= cfg.icp.min_overlap {
                measured.add_edge(i, j, r.motion)?;
                kept.push((i, j));
            }
        }
        if !connected(clouds.len(), kept.iter().copied()) {
            return Err(PipelineError::DisconnectedAfterGating);
        }
        let averaged =
            averaging::motion_average(&measured, cfg.averaging_epsilon, cfg.averaging_max_rounds)?;
        let e_k = iteration_error(&graph, &averaged.graph)?;
        graph = averaged.graph;
        history.push(e_k);
        objective_history.push(pair_objective(clouds, &graph, &pairs, factor)?);
        if e_k <= cfg.outer_tolerance {
            break;
        }
    }

    let objective = *objective_history.last().expect("at least one outer iteration");
    Ok(RegistrationReport {
        graph,
        error_history: history,
        objective,
        objective_history,
        overlap,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Sequential baseline: each view `k ≥ 1` is registered onto view `k − 1`
/// with classic ICP and the results are chained, starting from the
/// relative motions predicted by `init`.
pub fn register_chained(
    clouds: &[PointCloud],
    init: &ViewGraph,
    icp: &ClassicIcpConfig,
) -> Result<ViewGraph, PipelineError> {
    if clouds.len() != init.n_views() {
        return Err(PipelineError::ShapeMismatch {
            clouds: clouds.len(),
            views: init.n_views(),
        });
    }
    let mut graph = init.without_edges();
    for k in 1..clouds.len() {
        let guess = init.predicted_relative(k - 1, k);
        let (rel, _) = icp_classic(&clouds[k], &clouds[k - 1], &guess, icp)?;
        let global = graph.global_motion(k - 1).compose(&rel);
        graph.set_global_motion(k, global);
    }
    Ok(graph)
}

/// Rotates every non-anchor view by a random rotation vector with
/// components uniform in `[−level, level]`; translations are untouched.
pub fn perturb_graph(graph: &ViewGraph, level: f64, seed: u64) -> ViewGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = graph.without_edges();
    for k in 1..graph.n_views() {
        let omega = if level > 0.0 {
            Vector3::from_fn(|_, _| rng.random_range(-level..=level))
        } else {
            Vector3::zeros()
        };
        let m = graph.global_motion(k);
        let rotation = Twist::new(omega, Vector3::zeros()).exp().rotation * m.rotation;
        out.set_global_motion(k, RigidMotion::new(rotation, m.translation));
    }
    for e in graph.edges() {
        out.add_edge(e.i, e.j, e.motion).expect("edges were valid");
    }
    out
}

/// Largest rotation angle between corresponding global motions.
pub fn max_rotation_error(a: &ViewGraph, b: &ViewGraph) -> f64 {
    iteration_error(a, b).unwrap_or(f64::INFINITY)
}
