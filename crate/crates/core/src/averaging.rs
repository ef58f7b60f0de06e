//! Motion averaging over a view graph.
//!
//! Global motion `M_k` maps view-k coordinates into the reference frame
//! (view 0). A measured relative motion `M_ij` maps view-j coordinates into
//! view i, so a graph is consistent when `M_i · M_ij · M_j⁻¹ = I` for every
//! edge. Each round takes the log of that discrepancy per edge, solves the
//! linearized system `x_j − x_i = Δm_ij` in least squares with view 0 held
//! fixed, and left-multiplies every other global motion by `exp(x_k)`.

use nalgebra::{DMatrix, DVector, Matrix6};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeometryError, RigidMotion, Twist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragingError {
    #[error("view graph needs at least two views, got {0}")]
    TooFewViews(usize),
    #[error("edge ({i}, {j}) is invalid for {n} views")]
    InvalidEdge { i: usize, j: usize, n: usize },
    #[error("edge ({i}, {j}) appears more than once")]
    DuplicateEdge { i: usize, j: usize },
    #[error("global motion of view 0 must be the identity")]
    AnchorNotIdentity,
    #[error("expected {expected} corrections, got {found}")]
    CorrectionCount { expected: usize, found: usize },
    #[error("view graph is disconnected; least-squares system is rank deficient")]
    RankDeficient,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// Maps view-j coordinates into view i.
    pub motion: RigidMotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    global_motions: Vec<RigidMotion>,
    edges: Vec<Edge>,
}

impl ViewGraph {
    /// Starts a graph with the given global motions and no edges. View 0
    /// must be the identity.
    pub fn new(global_motions: Vec<RigidMotion>) -> Result<Self, AveragingError> {
        if global_motions.len() < 2 {
            return Err(AveragingError::TooFewViews(global_motions.len()));
        }
        if global_motions[0] != RigidMotion::identity() {
            return Err(AveragingError::AnchorNotIdentity);
        }
        Ok(Self {
            global_motions,
            edges: Vec::new(),
        })
    }

    /// All views at the identity.
    pub fn identity(n_views: usize) -> Result<Self, AveragingError> {
        Self::new(vec![RigidMotion::identity(); n_views])
    }

    pub fn with_edges(mut self, edges: impl IntoIterator<Item = Edge>) -> Result<Self, AveragingError> {
        for e in edges {
            self.add_edge(e.i, e.j, e.motion)?;
        }
        Ok(self)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, motion: RigidMotion) -> Result<(), AveragingError> {
        let n = self.n_views();
        if i == j || i >= n || j >= n {
            return Err(AveragingError::InvalidEdge { i, j, n });
        }
        if self.edges.iter().any(|e| e.i == i && e.j == j) {
            return Err(AveragingError::DuplicateEdge { i, j });
        }
        self.edges.push(Edge { i, j, motion });
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.global_motions.len()
    }

    pub fn global_motions(&self) -> &[RigidMotion] {
        &self.global_motions
    }

    pub fn global_motion(&self, k: usize) -> &RigidMotion {
        &self.global_motions[k]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Same global motions, no edges.
    pub fn without_edges(&self) -> Self {
        Self {
            global_motions: self.global_motions.clone(),
            edges: Vec::new(),
        }
    }

    /// Replaces the motions of views `1..n`. View 0 stays the identity.
    pub fn set_global_motion(&mut self, k: usize, motion: RigidMotion) {
        assert!(k > 0, "view 0 anchors the gauge");
        self.global_motions[k] = motion;
    }

    /// Relative motion `M_i⁻¹ · M_j` predicted by the current global motions.
    pub fn predicted_relative(&self, i: usize, j: usize) -> RigidMotion {
        self.global_motions[i].inverse().compose(&self.global_motions[j])
    }

    /// Whether the edges (ignoring direction) connect every view.
    pub fn is_connected(&self) -> bool {
        connected(self.n_views(), self.edges.iter().map(|e| (e.i, e.j)))
    }

    /// `Σ ‖log(M_i · M_ij · M_j⁻¹)‖²` over all edges.
    pub fn consistency_error(&self) -> Result<f64, AveragingError> {
        self.edges
            .iter()
            .map(|e| Ok(edge_correction(self, e)?.vec().norm_squared()))
            .sum()
    }
}

pub(crate) fn connected(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> bool {
    let mut adj = vec![Vec::new(); n];
    for (i, j) in pairs {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// `log(M_i · M_ij · M_j⁻¹)`.
pub fn edge_correction(graph: &ViewGraph, edge: &Edge) -> Result<Twist, AveragingError> {
    let mi = graph.global_motion(edge.i);
    let mj = graph.global_motion(edge.j);
    let delta = mi.compose(&edge.motion).compose(&mj.inverse());
    Ok(delta.log()?)
}

/// Stacked linear system `D·x = ΔV` for one averaging round. Column block
/// `k − 1` holds the unknown correction of view `k`; view 0 has no column.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSystem {
    pub d: DMatrix<f64>,
    pub delta_v: DVector<f64>,
    pub n_views: usize,
}

impl IncidenceSystem {
    /// Incidence blocks for `edges` with zero right-hand side.
    pub fn from_edges(n_views: usize, edges: &[(usize, usize)]) -> Self {
        let mut d = DMatrix::zeros(6 * edges.len(), 6 * (n_views - 1));
        let eye = Matrix6::<f64>::identity();
        for (row, &(i, j)) in edges.iter().enumerate() {
            if i > 0 {
                d.view_mut((6 * row, 6 * (i - 1)), (6, 6)).copy_from(&(-eye));
            }
            if j > 0 {
                d.view_mut((6 * row, 6 * (j - 1)), (6, 6)).copy_from(&eye);
            }
        }
        Self {
            d,
            delta_v: DVector::zeros(6 * edges.len()),
            n_views,
        }
    }

    pub fn build(graph: &ViewGraph, corrections: &[Twist]) -> Self {
        let pairs: Vec<(usize, usize)> = graph.edges().iter().map(|e| (e.i, e.j)).collect();
        let mut sys = Self::from_edges(graph.n_views(), &pairs);
        for (row, tw) in corrections.iter().enumerate() {
            sys.delta_v.fixed_rows_mut::<6>(6 * row).copy_from(&tw.vec());
        }
        sys
    }

    pub fn n_edges(&self) -> usize {
        self.d.nrows() / 6
    }

    /// Reads each edge's endpoints back from the nonzero blocks.
    fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let nb = self.n_views - 1;
        (0..self.n_edges())
            .map(|row| {
                let mut i = 0;
                let mut j = 0;
                for b in 0..nb {
                    let v = self.d[(6 * row, 6 * b)];
                    if v < 0.0 {
                        i = b + 1;
                    } else if v > 0.0 {
                        j = b + 1;
                    }
                }
                (i, j)
            })
            .collect()
    }
}

/// Least-squares solution of `D·x = ΔV` (the pseudo-inverse solution on a
/// full-rank system). `DᵀD` is the reduced graph Laplacian times `I₆`, so the
/// six twist components are solved independently through one Cholesky
/// factorization.
pub fn solve_corrections(system: &IncidenceSystem) -> Result<Vec<Twist>, AveragingError> {
    let n = system.n_views;
    let pairs = system.edge_pairs();
    if !connected(n, pairs.iter().copied()) {
        return Err(AveragingError::RankDeficient);
    }
    let nb = n - 1;
    let mut laplacian = DMatrix::<f64>::zeros(nb, nb);
    let mut rhs = DMatrix::<f64>::zeros(nb, 6);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        let v = system.delta_v.fixed_rows::<6>(6 * row);
        if i > 0 {
            laplacian[(i - 1, i - 1)] += 1.0;
            for c in 0..6 {
                rhs[(i - 1, c)] -= v[c];
            }
        }
        if j > 0 {
            laplacian[(j - 1, j - 1)] += 1.0;
            for c in 0..6 {
                rhs[(j - 1, c)] += v[c];
            }
        }
        if i > 0 && j > 0 {
            laplacian[(i - 1, j - 1)] -= 1.0;
            laplacian[(j - 1, i - 1)] -= 1.0;
        }
    }
    let chol = laplacian.cholesky().ok_or(AveragingError::RankDeficient)?;
    let x = chol.solve(&rhs);
    Ok((0..nb)
        .map(|k| {
            Twist::cev(&nalgebra::Vector6::from_iterator(x.row(k).iter().copied()))
        })
        .collect())
}

/// Left-multiplies the global motion of view `k ≥ 1` by `exp(corrections[k − 1])`.
pub fn apply_corrections(graph: &ViewGraph, corrections: &[Twist]) -> Result<ViewGraph, AveragingError> {
    let expected = graph.n_views() - 1;
    if corrections.len() != expected {
        return Err(AveragingError::CorrectionCount {
            expected,
            found: corrections.len(),
        });
    }
    let mut out = graph.clone();
    for (k, tw) in corrections.iter().enumerate() {
        let m = tw.exp().compose(&graph.global_motions[k + 1]);
        out.global_motions[k + 1] = m;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingOutcome {
    pub graph: ViewGraph,
    pub rounds: usize,
    /// `‖ΔJ‖` of the last round.
    pub correction_norm: f64,
}

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_MAX_ROUNDS: usize = 20;

/// Iterates correction rounds until the stacked correction norm drops below
/// `epsilon` or `max_rounds` is reached.
pub fn motion_average(
    graph: &ViewGraph,
    epsilon: f64,
    max_rounds: usize,
) -> Result<AveragingOutcome, AveragingError> {
    if !graph.is_connected() {
        return Err(AveragingError::RankDeficient);
    }
    let mut current = graph.clone();
    let mut norm = 0.0;
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let corrections: Vec<Twist> = current
            .edges()
            .par_iter()
            .map(|e| edge_correction(&current, e))
            .collect::<Result<_, _>>()?;
        let system = IncidenceSystem::build(&current, &corrections);
        let delta = solve_corrections(&system)?;
        norm = delta.iter().map(|t| t.vec().norm_squared()).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        current = apply_corrections(&current, &delta)?;
        if norm < epsilon {
            break;
        }
    }
    Ok(AveragingOutcome {
        graph: current,
        rounds,
        correction_norm: norm,
    })
}
