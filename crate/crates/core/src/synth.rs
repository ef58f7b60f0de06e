//! Seeded synthetic data: point samplers, simple meshes, a multi-view scan
//! scene with known ground truth and a face/non-face retrieval battery.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{Point3, RigidMotion, Twist};
use crate::retrieval::{FacialTriangle, RetrievalConfig, SaliencyThreshold, TriangleMesh};

/// Uniformly distributed direction on the unit sphere.
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Radial profile of the bumpy sphere; no rotational symmetry.
pub fn bumpy_radius(dir: &Vector3<f64>) -> f64 {
    1.0 + 0.12 * (3.0 * dir.x + 1.0).sin() * (2.0 * dir.y).cos() + 0.08 * (4.0 * dir.z + dir.x).cos()
}

/// `n` points on a bumpy closed surface of nominal radius `radius`
/// centered at the origin.
pub fn bumpy_sphere_samples<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let d = unit_direction(rng);
            d * (radius * bumpy_radius(&d))
        })
        .collect()
}

/// `n` points on a wavy height field over `[x0, x1] × [0, 1]`.
pub fn wavy_strip<R: Rng + ?Sized>(rng: &mut R, x0: f64, x1: f64, n: usize) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(x0..x1);
            let y: f64 = rng.random_range(0.0..1.0);
            let z = 0.08 * (6.0 * x + 0.5).sin() * (5.0 * y).cos() + 0.05 * (3.0 * y + 2.0 * x).sin();
            Point3::new(x, y, z)
        })
        .collect()
}

/// Icosahedron subdivided `subdivisions` times and projected onto the
/// sphere of radius `radius`; faces wound outward.
pub fn icosphere(subdivisions: usize, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|v| Point3::from(*v).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Point3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) / 2.0).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let verts = verts.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(verts, faces).expect("icosphere is well formed")
}

fn height_field(
    nx: usize,
    ny: usize,
    origin: (f64, f64),
    spacing: f64,
    height: impl Fn(f64, f64) -> f64,
) -> TriangleMesh {
    let mut verts = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let x = origin.0 + i as f64 * spacing;
            let y = origin.1 + j as f64 * spacing;
            verts.push(Point3::new(x, y, height(x, y)));
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::new(verts, faces).expect("grid is well formed")
}

/// `nx × ny` grid with vertices at `(i·spacing, j·spacing, height(x, y))`,
/// wound so the normal points to +z.
pub fn grid_patch(
    nx: usize,
    ny: usize,
    spacing: f64,
    height: impl Fn(f64, f64) -> f64,
) -> TriangleMesh {
    height_field(nx, ny, (0.0, 0.0), spacing, height)
}

/// Open tube around the z axis, outward winding.
pub fn cylinder(radius: f64, height: f64, n_around: usize, n_along: usize) -> TriangleMesh {
    let mut verts = Vec::with_capacity(n_around * n_along);
    for j in 0..n_along {
        let z = height * j as f64 / (n_along - 1) as f64;
        for i in 0..n_around {
            let a = TAU * i as f64 / n_around as f64;
            verts.push(Point3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let id = |i: usize, j: usize| j * n_around + i % n_around;
    let mut faces = Vec::new();
    for j in 0..n_along - 1 {
        for i in 0..n_around {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::new(verts, faces).expect("cylinder is well formed")
}

/// Multi-view scan of a bumpy object seen from cameras spread in azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub n_views: usize,
    /// Size of the shared surface sample each view is cut from.
    pub surface_points: usize,
    /// Nominal object radius.
    pub radius: f64,
    /// Azimuth between consecutive views, radians.
    pub azimuth_step: f64,
    /// Points whose direction makes a cosine above this with the view axis
    /// are visible.
    pub visibility_cos: f64,
    /// Standard deviation of isotropic Gaussian sensor noise.
    pub noise_sigma: f64,
}

impl Default for SceneConfig {
    /// Desk-scale four-view scene.
    fn default() -> Self {
        Self {
            n_views: 4,
            surface_points: 1200,
            radius: 0.15,
            azimuth_step: 35f64.to_radians(),
            visibility_cos: 0.0,
            noise_sigma: 2e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanScene {
    /// Points of each view in its own sensor frame.
    pub views: Vec<Vec<Point3>>,
    /// Ground-truth global motions (sensor frame → view-0 frame).
    pub truth: Vec<RigidMotion>,
}

/// Views cut from one shared surface sample, each with its own sensor
/// noise, plus ground truth; deterministic in `seed`.
pub fn scan_scene(cfg: &SceneConfig, seed: u64) -> ScanScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let surface: Vec<(Vector3<f64>, Point3)> = (0..cfg.surface_points)
        .map(|_| {
            let d = unit_direction(&mut rng);
            (d, d * (cfg.radius * bumpy_radius(&d)))
        })
        .collect();
    let mut views = Vec::with_capacity(cfg.n_views);
    let mut truth = Vec::with_capacity(cfg.n_views);
    for k in 0..cfg.n_views {
        let azimuth = k as f64 * cfg.azimuth_step;
        let elevation = if k % 2 == 1 { 0.15 } else { 0.0 };
        let rotation = RigidMotion::rotation_z(azimuth).compose(&RigidMotion::rotation_y(-elevation));
        let motion = if k == 0 {
            RigidMotion::identity()
        } else {
            let kf = k as f64;
            rotation.with_translation(cfg.radius * Vector3::new(0.05 * kf, -0.03 * kf, 0.02 * kf))
        };
        let axis = rotation.transform_point(&Vector3::x());
        let to_local = motion.inverse();
        let pts = surface
            .iter()
            .filter(|(d, _)| d.dot(&axis) > cfg.visibility_cos)
            .map(|(_, p)| {
                let mut p = *p;
                if cfg.noise_sigma > 0.0 {
                    p += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                }
                to_local.transform_point(&p)
            })
            .collect();
        views.push(pts);
        truth.push(motion);
    }
    ScanScene { views, truth }
}

/// Reference facial triangle: both eyes level above the nose, wound so the
/// normal faces out of the face (+z).
pub fn standard_face_triangle() -> FacialTriangle {
    FacialTriangle::new(
        Point3::new(0.35, 0.25, 0.0),
        Point3::new(-0.35, 0.25, 0.0),
        Point3::new(0.0, -0.15, 0.0),
    )
    .expect("standard triangle is not degenerate")
}

/// Height-field model with Gaussian bumps at chosen positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModelSpec {
    /// Bump centers in the `[-1, 1]²` base square.
    pub bumps: Vec<[f64; 2]>,
    pub amplitude: f64,
    pub width: f64,
    /// Uniform jitter applied to each bump coordinate.
    pub jitter: f64,
    /// Grid vertices per side.
    pub resolution: usize,
}

impl FaceModelSpec {
    pub fn with_bumps(bumps: Vec<[f64; 2]>) -> Self {
        Self {
            bumps,
            amplitude: 0.12,
            width: 0.08,
            jitter: 0.0,
            resolution: 64,
        }
    }

    /// Two eyes and a nose laid out like the standard triangle.
    pub fn face() -> Self {
        Self::with_bumps(vec![[0.35, 0.25], [-0.35, 0.25], [0.0, -0.15]])
    }
}

/// Builds the model, then applies a random similarity transform.
pub fn face_model(spec: &FaceModelSpec, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; 2]> = spec
        .bumps
        .iter()
        .map(|&[x, y]| {
            if spec.jitter > 0.0 {
                [
                    x + rng.random_range(-spec.jitter..=spec.jitter),
                    y + rng.random_range(-spec.jitter..=spec.jitter),
                ]
            } else {
                [x, y]
            }
        })
        .collect();
    let n = spec.resolution.max(2);
    let spacing = 2.0 / (n - 1) as f64;
    let inv = 1.0 / (2.0 * spec.width * spec.width);
    let mesh = height_field(n, n, (-1.0, -1.0), spacing, |x, y| {
        centers
            .iter()
            .map(|c| spec.amplitude * (-((x - c[0]).powi(2) + (y - c[1]).powi(2)) * inv).exp())
            .sum()
    });
    let omega = Vector3::from_fn(|_, _| rng.random_range(-PI..PI)) / 3f64.sqrt();
    let nu = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
    let motion = Twist::new(omega, nu).exp();
    let scale = rng.random_range(0.5..2.0);
    let verts = mesh.vertices().iter().map(|p| motion.transform_point(&(p * scale))).collect();
    TriangleMesh::new(verts, mesh.faces().to_vec()).expect("transformed grid is well formed")
}

/// Retrieval settings matched to the resolution of the synthetic battery.
pub fn battery_retrieval_config() -> RetrievalConfig {
    RetrievalConfig {
        saliency_threshold: SaliencyThreshold::Percentile(0.98),
        th_dist: None,
        thres_ft: 0.03,
        scale_fraction: 0.008,
    }
}

/// Bump layouts for the non-face half of the battery.
pub fn non_face_layouts() -> Vec<Vec<[f64; 2]>> {
    vec![
        // equilateral
        vec![[-0.35, -0.2], [0.35, -0.2], [0.0, 0.406]],
        // collinear
        vec![[-0.5, 0.0], [0.0, 0.0], [0.5, 0.0]],
        // flat obtuse
        vec![[-0.5, 0.0], [0.5, 0.0], [0.0, 0.1]],
        // scalene obtuse
        vec![[-0.7, -0.2], [0.5, 0.0], [0.6, 0.3]],
        // tall isosceles
        vec![[-0.15, -0.4], [0.15, -0.4], [0.0, 0.5]],
        // two features
        vec![[-0.35, 0.0], [0.35, 0.0]],
        // single feature
        vec![[0.0, 0.0]],
        // row of five
        vec![[-0.8, 0.0], [-0.4, 0.0], [0.0, 0.0], [0.4, 0.0], [0.8, 0.0]],
        // scalene
        vec![[-0.6, -0.3], [0.2, -0.1], [0.5, 0.45]],
    ]
}

/// 36 labelled models: 18 jittered faces then 18 non-faces.
pub fn retrieval_battery(seed: u64) -> Vec<(TriangleMesh, bool)> {
    let mut out = Vec::with_capacity(36);
    for k in 0..18u64 {
        let spec = FaceModelSpec {
            jitter: 0.02,
            ..FaceModelSpec::face()
        };
        out.push((face_model(&spec, seed.wrapping_mul(1000).wrapping_add(k)), true));
    }
    let layouts = non_face_layouts();
    for k in 0..18usize {
        let spec = FaceModelSpec {
            jitter: 0.02,
            ..FaceModelSpec::with_bumps(layouts[k % layouts.len()].clone())
        };
        out.push((face_model(&spec, seed.wrapping_mul(1000).wrapping_add(500 + k as u64)), false));
    }
    out
}
