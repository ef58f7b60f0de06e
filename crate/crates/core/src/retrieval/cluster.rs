use super::{RetrievalConfig, SaliencyField, TriangleMesh};
use crate::geometry::Point3;
use crate::spatial::KdTree;

/// Connected group of high-saliency vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SalientCluster {
    /// Ascending vertex indices.
    pub members: Vec<usize>,
    pub centroid: Point3,
    pub peak_saliency: f64,
}

/// Smallest cluster kept; anything smaller is treated as noise.
pub const MIN_CLUSTER_SIZE: usize = 3;

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so labels stay deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Selects vertices at or above the saliency threshold and groups them by
/// single linkage at distance `th_dist`. Clusters are ordered by their
/// smallest member index.
pub fn cluster_salient(
    field: &SaliencyField,
    mesh: &TriangleMesh,
    cfg: &RetrievalConfig,
) -> Vec<SalientCluster> {
    let threshold = cfg.saliency_threshold.resolve(&field.values);
    let link = cfg.th_dist.unwrap_or(5.0 * field.scale_base);
    let selected: Vec<usize> = field
        .values
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s >= threshold)
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Vec::new();
    }
    let pts: Vec<Point3> = selected.iter().map(|&i| mesh.vertices()[i]).collect();
    let tree = KdTree::build(&pts);
    let mut sets = DisjointSet::new(pts.len());
    for (a, p) in pts.iter().enumerate() {
        for b in tree.within_radius(p, link) {
            if b > a {
                sets.union(a, b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); pts.len()];
    for a in 0..pts.len() {
        let root = sets.find(a);
        groups[root].push(a);
    }
    groups
        .into_iter()
        .filter(|g| g.len() >= MIN_CLUSTER_SIZE)
        .map(|g| {
            let members: Vec<usize> = g.iter().map(|&a| selected[a]).collect();
            let centroid =
                members.iter().map(|&i| mesh.vertices()[i]).sum::<Point3>() / members.len() as f64;
            let peak_saliency = members
                .iter()
                .map(|&i| field.values[i])
                .fold(f64::NEG_INFINITY, f64::max);
            SalientCluster {
                members,
                centroid,
                peak_saliency,
            }
        })
        .collect()
}
