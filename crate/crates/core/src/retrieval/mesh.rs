use std::collections::HashMap;
use std::sync::OnceLock;

use super::RetrievalError;
use crate::geometry::Point3;
use crate::spatial::KdTree;

/// Indexed triangle mesh with an optional per-vertex curvature field.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
    curvature: Option<Vec<f64>>,
    index: OnceLock<KdTree>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, RetrievalError> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(RetrievalError::IndexOutOfRange { face: fi });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(RetrievalError::DegenerateFace { face: fi });
            }
        }
        Ok(Self {
            vertices,
            faces,
            curvature: None,
            index: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn curvature(&self) -> Option<&[f64]> {
        self.curvature.as_deref()
    }

    /// Attaches an externally computed curvature field.
    pub fn set_curvature(&mut self, values: Vec<f64>) -> Result<(), RetrievalError> {
        if values.len() != self.vertices.len() {
            return Err(RetrievalError::CurvatureLength {
                expected: self.vertices.len(),
                found: values.len(),
            });
        }
        self.curvature = Some(values);
        Ok(())
    }

    /// Computes and stores the discrete mean curvature.
    pub fn compute_curvature(&mut self) -> Result<&[f64], RetrievalError> {
        let h = mean_curvature(self)?;
        self.curvature = Some(h);
        Ok(self.curvature.as_deref().unwrap())
    }

    pub(crate) fn spatial_index(&self) -> &KdTree {
        self.index.get_or_init(|| KdTree::build(&self.vertices))
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        if self.vertices.is_empty() {
            return 0.0;
        }
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }

    /// Sorted 1-ring neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Area-weighted vertex normals following face winding (unnormalized
    /// where a vertex has no incident area).
    pub fn vertex_normals(&self) -> Vec<Point3> {
        let mut normals = vec![Point3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in f {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Vertices on an edge used by exactly one face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((a, b), count) in edge_count {
            if count == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        boundary
    }
}

fn cot(u: &Point3, v: &Point3) -> f64 {
    u.dot(v) / u.cross(v).norm()
}

/// Discrete mean curvature from the cotangent Laplacian with mixed Voronoi
/// areas. Positive where the surface bends away from its normal (a sphere
/// with outward normals gives `1/r`). Boundary vertices copy the value of
/// the closest interior vertex reachable through the mesh.
pub fn mean_curvature(mesh: &TriangleMesh) -> Result<Vec<f64>, RetrievalError> {
    let n = mesh.vertices.len();
    let verts = &mesh.vertices;
    let mut referenced = vec![false; n];
    let mut lap = vec![Point3::zeros(); n];
    let mut area = vec![0.0f64; n];

    for f in &mesh.faces {
        for &i in f {
            referenced[i] = true;
        }
        let p = f.map(|i| verts[i]);
        let double_area = (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        if double_area <= f64::EPSILON * (p[1] - p[0]).norm_squared().max(1e-300) {
            continue;
        }
        let tri_area = 0.5 * double_area;
        // cotangent of the angle at each corner
        let mut cots = [0.0; 3];
        let mut obtuse = None;
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let (u, v) = (b - a, c - a);
            cots[k] = cot(&u, &v);
            if u.dot(&v) < 0.0 {
                obtuse = Some(k);
            }
        }
        for k in 0..3 {
            let (i, j, o) = (f[(k + 1) % 3], f[(k + 2) % 3], k);
            // edge (i, j) is opposite corner k
            let w = cots[o];
            let d = verts[j] - verts[i];
            lap[i] += d * w;
            lap[j] -= d * w;
        }
        for k in 0..3 {
            let i = f[k];
            area[i] += match obtuse {
                None => {
                    let (b, c) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                    let a = p[k];
                    ((b - a).norm_squared() * cots[(k + 2) % 3]
                        + (c - a).norm_squared() * cots[(k + 1) % 3])
                        / 8.0
                }
                Some(o) if o == k => tri_area / 2.0,
                Some(_) => tri_area / 4.0,
            };
        }
    }

    if let Some(v) = referenced.iter().position(|r| !r) {
        return Err(RetrievalError::UnreferencedVertex(v));
    }

    let normals = mesh.vertex_normals();
    let boundary = mesh.boundary_vertices();
    let mut h = vec![0.0; n];
    let mut assigned = vec![false; n];
    for i in 0..n {
        if boundary[i] || area[i] <= 0.0 {
            continue;
        }
        let delta = lap[i] / (2.0 * area[i]);
        let sign = if delta.dot(&normals[i]) > 0.0 { -1.0 } else { 1.0 };
        h[i] = sign * delta.norm() / 2.0;
        assigned[i] = true;
    }
    fill_from_nearest_assigned(verts, &mesh.adjacency(), &mut h, &mut assigned);
    Ok(h)
}

/// Breadth-first propagation: every unassigned vertex takes the value of its
/// closest already-assigned ring neighbor, ring by ring.
fn fill_from_nearest_assigned(
    verts: &[Point3],
    adj: &[Vec<usize>],
    values: &mut [f64],
    assigned: &mut [bool],
) {
    loop {
        let mut updates = Vec::new();
        for i in 0..verts.len() {
            if assigned[i] {
                continue;
            }
            let best = adj[i]
                .iter()
                .filter(|&&j| assigned[j])
                .map(|&j| (j, (verts[j] - verts[i]).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((j, _)) = best {
                updates.push((i, values[j]));
            }
        }
        if updates.is_empty() {
            break;
        }
        for (i, v) in updates {
            values[i] = v;
            assigned[i] = true;
        }
    }
}
