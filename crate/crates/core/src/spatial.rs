//! Exact k-d tree over 3D points.
//!
//! Queries return the same answer as a linear scan: the closest point by
//! Euclidean distance, ties broken by the lowest point index.

use crate::geometry::Point3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3>,
    /// Permutation of point indices; leaves own contiguous ranges.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Result of a nearest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub index: usize,
    pub dist_sq: f64,
}

impl KdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] <= lo[axis] {
            // all points identical
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// Closest point to `query`, or `None` on an empty tree.
    pub fn nearest(&self, query: &Point3) -> Option<Nearest> {
        self.nearest_excluding(query, usize::MAX)
    }

    /// Closest point whose index differs from `skip`.
    pub fn nearest_excluding(&self, query: &Point3, skip: usize) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = Nearest {
            index: usize::MAX,
            dist_sq: f64::INFINITY,
        };
        self.search(0, query, skip, &mut best);
        (best.index != usize::MAX).then_some(best)
    }

    fn search(&self, node: usize, q: &Point3, skip: usize, best: &mut Nearest) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if i == skip {
                        continue;
                    }
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.dist_sq || (d == best.dist_sq && i < best.index) {
                        *best = Nearest { index: i, dist_sq: d };
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                // equality keeps tie candidates on the far side reachable
                if diff * diff <= best.dist_sq {
                    self.search(far, q, skip, best);
                }
            }
        }
    }

    /// Indices of all points with `‖p − center‖ < radius`, in ascending order.
    pub fn within_radius(&self, center: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() && radius > 0.0 {
            self.collect_radius(0, center, radius, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn collect_radius(&self, node: usize, c: &Point3, r: f64, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                out.extend(
                    self.order[start..end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - c).norm_squared() < r2),
                );
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = c[axis] - value;
                if diff < r {
                    self.collect_radius(left, c, r, r2, out);
                }
                if diff > -r {
                    self.collect_radius(right, c, r, r2, out);
                }
            }
        }
    }
}
