//! End-to-end acceptance checks. Each test prints one verdict line to stderr
//! (bypassing the harness capture) and then asserts on the same verdict.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Quaternion, Rotation3, SymmetricEigen, Unit, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mvreg_core::averaging::{motion_average, solve_corrections, AveragingError, IncidenceSystem, ViewGraph};
use mvreg_core::geometry::{Point3, RigidMotion, Twist};
use mvreg_core::io::bench::{run_benchmark, BenchSpec, Strategy};
use mvreg_core::io::report::{registration_report_text, retrieval_report_text};
use mvreg_core::io::{encode_ply, parse_ply, read_ply, PlyDocument, PlyError, PlyFormat, Precision, RunConfig};
use mvreg_core::pipeline::{
    gated_pairs, overlap_matrix, pair_objective, perturb_graph, register_chained, register_multiview,
    PipelineConfig,
};
use mvreg_core::registration::{
    adaptive_threshold, estimate_resolution, icp_adaptive, ClassicIcpConfig, IcpConfig, PointCloud,
};
use mvreg_core::retrieval::{
    mean_curvature, match_triangle, retrieve_faces, saliency, FacialTriangle, RetrievalConfig,
};
use mvreg_core::synth;

enum Verdict {
    Pass,
    Fail,
    Skip,
}

/// Writes the verdict line straight to stderr so it shows up even when the
/// test harness captures output, then fails the test on `Fail`.
fn report(id: u32, name: &str, verdict: Verdict, detail: &str) {
    let tag = match verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::Skip => "SKIP",
    };
    let line = format!("\nacceptance {id:02} {name:<32} {tag}  {detail}\n");
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    if let Verdict::Fail = verdict {
        panic!("acceptance {id:02} {name} failed: {detail}");
    }
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

// ---------------------------------------------------------------- 1

#[test]
fn threshold_table() {
    // (N_p, N_t, L_r, R_e, expected), expected values from exact rational
    // arithmetic on ((1 − N_p/N_t)·L_r)²/2 + R_e².
    let table: [(usize, usize, f64, f64, f64); 20] = [
        (0, 100, 1.0, 0.0, 0.5),
        (100, 100, 1.0, 0.1, 0.01),
        (100, 100, 0.37, 0.0, 0.0),
        (50, 100, 1.0, 0.0, 0.125),
        (50, 100, 2.0, 0.5, 0.75),
        (0, 1, 0.001, 0.0001, 5.1e-07),
        (1, 3, 0.25, 0.01, 0.01398888888888889),
        (2, 3, 0.25, 0.01, 0.0035722222222222223),
        (999, 1000, 0.05, 0.0, 1.25e-09),
        (1, 1000, 0.05, 0.0, 0.00124750125),
        (600, 1000, 0.002, 0.0001, 3.3e-07),
        (750, 1200, 0.0035, 0.0002, 9.01328125e-07),
        (17, 29, 12.5, 0.75, 13.9394322235434),
        (0, 7, 3.0, 0.0, 4.5),
        (7, 7, 3.0, 2.5, 6.25),
        (123, 456, 0.0123, 0.000456, 4.0548225343836566e-05),
        (4000, 5000, 1e-3, 1e-5, 2.01e-08),
        (1, 2, 1e6, 1e3, 125001000000.0),
        (333, 1000, 0.3, 0.03, 0.020920005),
        (5, 8, 7.25, 0.0, 3.69580078125),
    ];
    let worst = table
        .iter()
        .map(|&(np, nt, l, r, want)| rel_err(adaptive_threshold(np, nt, l, r), want))
        .fold(0.0, f64::max);
    // full overlap leaves only the range accuracy term
    let full = (0..20).all(|k| {
        let r = 1e-3 * (k as f64 + 1.0);
        rel_err(adaptive_threshold(37, 37, 0.5, r), r * r) <= 1e-12
    });
    report(
        1,
        "adaptive threshold table",
        verdict(worst <= 1e-12 && full),
        &format!("20 cases, worst relative error {worst:.2e}"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn lie_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_log = 0.0f64;
    let mut worst_exp = 0.0f64;
    let mut exact = true;
    for _ in 0..1000 {
        let angle = rng.random_range(0.0..=3.0);
        let omega = synth::unit_direction(&mut rng) * angle;
        let nu = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let tw = Twist::new(omega, nu);
        let m = tw.exp();
        match m.log() {
            Ok(back) => worst_log = worst_log.max((back.vec() - tw.vec()).norm()),
            Err(_) => worst_log = f64::INFINITY,
        }
        if let Ok(back) = m.log() {
            worst_exp = worst_exp.max(back.exp().max_abs_diff(&m));
        }
        let v = Vector6::from_fn(|_, _| rng.random_range(-10.0..10.0));
        exact &= Twist::cev(&v).vec() == v && Twist::cev(&tw.vec()) == tw;
    }
    let ok = worst_log <= 1e-8 && worst_exp <= 1e-8 && exact;
    report(
        2,
        "exp/log round trips",
        verdict(ok),
        &format!("1000 twists, |w| <= 3: log∘exp {worst_log:.2e}, exp∘log {worst_exp:.2e}, vec/cev exact {exact}"),
    );
}

// ---------------------------------------------------------------- 3

struct PairOutcome {
    rotation_deg: f64,
    translation_in_lr: f64,
    overlap: f64,
}

/// Two crops of one noisy surface sample, the target moved by a random rigid
/// motion of at most 30°, registered from identity. The surface is the bumpy
/// sphere stretched by `axes`.
fn pairwise_trial(seed: u64, axes: Vector3<f64>) -> PairOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(500..=2000);
    let surface: Vec<Point3> = synth::bumpy_sphere_samples(&mut rng, n, 1.0)
        .into_iter()
        .map(|p| p.component_mul(&axes))
        .collect();
    let cap_a = synth::unit_direction(&mut rng);
    let cap_b = synth::unit_direction(&mut rng);
    // each crop removes the cap beyond cos = 0.6, about a fifth of the sphere
    let keep = |cap: &Vector3<f64>| -> Vec<usize> {
        (0..n).filter(|&k| surface[k].normalize().dot(cap) <= 0.6).collect()
    };
    let (src_idx, dst_idx) = (keep(&cap_a), keep(&cap_b));
    let shared = src_idx.iter().filter(|k| dst_idx.contains(k)).count();
    let overlap = (shared as f64 / src_idx.len() as f64).min(shared as f64 / dst_idx.len() as f64);

    let angle = rng.random_range(0.0..=30f64.to_radians());
    let axis = synth::unit_direction(&mut rng);
    let shift = synth::unit_direction(&mut rng) * rng.random_range(0.0..0.2);
    let truth = RigidMotion::from_axis_angle(&axis, angle).with_translation(shift);

    let clean_target = PointCloud::new(dst_idx.iter().map(|&k| surface[k]).collect());
    let lr_clean = estimate_resolution(&clean_target).unwrap();
    let sigma = rng.random_range(0.0..=0.5) * lr_clean;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut jitter = |p: Point3| p + Vector3::from_fn(|_, _| noise.sample(&mut rng));
    let source: Vec<Point3> = src_idx.iter().map(|&k| jitter(surface[k])).collect();
    let target: Vec<Point3> = dst_idx.iter().map(|&k| truth.transform_point(&jitter(surface[k]))).collect();
    let (source, target) = (PointCloud::new(source), PointCloud::new(target));
    let lr = target.resolution().unwrap();

    // recovery stops improving well before this budget
    let cfg = IcpConfig {
        max_iterations: 500,
        ..IcpConfig::default()
    };
    let est = icp_adaptive(&source, &target, &RigidMotion::identity(), &cfg).unwrap().motion;
    PairOutcome {
        rotation_deg: est.compose(&truth.inverse()).rotation_angle().to_degrees(),
        translation_in_lr: (est.translation - truth.translation).norm() / lr,
        overlap,
    }
}

#[test]
fn pairwise_recovery() {
    let run = |axes: Vector3<f64>| {
        let outcomes: Vec<PairOutcome> = (0..50).map(|s| pairwise_trial(1000 + s, axes)).collect();
        let min_overlap = outcomes.iter().map(|o| o.overlap).fold(1.0, f64::min);
        let good = outcomes
            .iter()
            .filter(|o| o.rotation_deg <= 2.0 && o.translation_in_lr <= 2.0)
            .count();
        (good, min_overlap)
    };
    let (good, min_overlap) = run(Vector3::new(1.0, 0.75, 0.55));
    // near-spherical shapes leave rotation almost unobservable; reported only
    let (round, _) = run(Vector3::new(1.0, 1.0, 1.0));
    let ok = min_overlap >= 0.6 && good * 10 >= 50 * 9;
    report(
        3,
        "pairwise recovery",
        verdict(ok),
        &format!(
            "{good}/50 within 2 deg and 2 L_r (min overlap {min_overlap:.2}); near-sphere surface {round}/50"
        ),
    );
}

// ---------------------------------------------------------------- 4

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x == v && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn random_motion(rng: &mut ChaCha8Rng) -> RigidMotion {
    let omega = synth::unit_direction(rng) * rng.random_range(0.0..2.5);
    let nu = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    Twist::new(omega, nu).exp()
}

/// Moore-Penrose inverse `(DᵀD)⁺·Dᵀ` from a symmetric eigendecomposition.
/// nalgebra's SVD loses up to 1e-2 on these block-structured matrices with
/// repeated singular values, so it is not used here.
fn dense_pinv(d: &DMatrix<f64>) -> DMatrix<f64> {
    let dtd = d.transpose() * d;
    let eig = SymmetricEigen::new(dtd.clone());
    let tol = 1e-10 * eig.eigenvalues.amax().max(1.0);
    let mut inv = DMatrix::zeros(dtd.nrows(), dtd.ncols());
    for (k, &l) in eig.eigenvalues.iter().enumerate() {
        if l > tol {
            let v = eig.eigenvectors.column(k);
            inv += v * v.transpose() / l;
        }
    }
    inv * d.transpose()
}

#[test]
fn averaging_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut graphs = 0usize;
    let mut worst = 0.0f64;
    let mut rank_ok = true;
    // every simple graph on 2..=6 views with at most 10 edges, random
    // edge directions and right-hand sides
    for n in 2..=6usize {
        let all: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        for mask in 1u32..(1 << all.len()) {
            if mask.count_ones() > 10 {
                continue;
            }
            let edges: Vec<(usize, usize)> = all
                .iter()
                .enumerate()
                .filter(|(b, _)| mask & (1 << b) != 0)
                .map(|(_, &(i, j))| if rng.random_bool(0.5) { (i, j) } else { (j, i) })
                .collect();
            let mut sys = IncidenceSystem::from_edges(n, &edges);
            sys.delta_v = DVector::from_fn(sys.delta_v.len(), |_, _| rng.random_range(-1.0..1.0));
            graphs += 1;
            match (solve_corrections(&sys), connected(n, &edges)) {
                (Ok(x), true) => {
                    let oracle = dense_pinv(&sys.d) * &sys.delta_v;
                    let got = DVector::from_iterator(
                        oracle.len(),
                        x.iter().flat_map(|t| t.vec().iter().copied().collect::<Vec<_>>()),
                    );
                    worst = worst.max((got - oracle).amax());
                }
                (Err(AveragingError::RankDeficient), false) => {}
                _ => rank_ok = false,
            }
        }
    }

    let mut fixed_worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=6usize);
        let mut motions = vec![RigidMotion::identity()];
        motions.extend((1..n).map(|_| random_motion(&mut rng)));
        let mut graph = ViewGraph::new(motions).unwrap();
        let mut pairs: Vec<(usize, usize)> = (1..n).map(|k| (rng.random_range(0..k), k)).collect();
        while pairs.len() < 10 && rng.random_bool(0.7) {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j && !pairs.contains(&(i, j)) {
                pairs.push((i, j));
            }
        }
        for &(i, j) in &pairs {
            let rel = graph.predicted_relative(i, j);
            graph.add_edge(i, j, rel).unwrap();
        }
        let out = motion_average(&graph, 1e-12, 20).unwrap().graph;
        for k in 0..n {
            fixed_worst = fixed_worst.max(out.global_motion(k).max_abs_diff(graph.global_motion(k)));
        }
    }
    let ok = worst <= 1e-9 && rank_ok && fixed_worst <= 1e-9;
    report(
        4,
        "motion averaging oracle",
        verdict(ok),
        &format!(
            "{graphs} graphs, pinv gap {worst:.2e}, rank handling ok {rank_ok}, \
             fixed-point drift {fixed_worst:.2e}"
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn noise_benchmark_ordering() {
    let spec = BenchSpec::default();
    let table = run_benchmark(&spec, &PipelineConfig::default(), &ClassicIcpConfig::default(), 2024).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for &level in &spec.noise_levels {
        let ma = table.row(level, Strategy::MotionAveraged).unwrap();
        let ch = table.row(level, Strategy::Chained).unwrap();
        ok &= ma.mean_objective <= ch.mean_objective;
        parts.push(format!(
            "{level}: MA {:.3e}±{:.1e} ({} fail) vs chained {:.3e}±{:.1e} ({} fail)",
            ma.mean_objective, ma.std_objective, ma.failures, ch.mean_objective, ch.std_objective, ch.failures
        ));
    }
    let lo = table.row(0.02, Strategy::MotionAveraged).unwrap().std_objective;
    let hi = table.row(0.06, Strategy::MotionAveraged).unwrap().std_objective;
    ok &= hi <= 2.0 * lo;
    report(
        5,
        "benchmark mean/std ordering",
        verdict(ok),
        &format!("{} trials/level; {}; std 0.06/0.02 = {:.2}", spec.trials, parts.join("; "), hi / lo),
    );
}

// ---------------------------------------------------------------- 6

const BUNNY_ENV: &str = "MVREG_BUNNY_DIR";
const BUNNY_SCANS: [&str; 6] = ["bun000", "bun045", "bun090", "bun180", "bun270", "bun315"];
const BUNNY_MAX_POINTS: usize = 4000;

/// `bmesh NAME tx ty tz qx qy qz qw` lines of a range-scan `.conf` file.
fn conf_motion(conf: &str, scan: &str) -> Option<RigidMotion> {
    conf.lines().find_map(|line| {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 9 || toks[0] != "bmesh" || toks[1] != format!("{scan}.ply") {
            return None;
        }
        let v: Vec<f64> = toks[2..].iter().map(|t| t.parse().ok()).collect::<Option<_>>()?;
        let q = UnitQuaternion::from_quaternion(Quaternion::new(v[6], v[3], v[4], v[5]));
        Some(RigidMotion::new(*q.to_rotation_matrix().matrix(), Vector3::new(v[0], v[1], v[2])))
    })
}

fn load_bunny(dir: &Path) -> Result<(Vec<PointCloud>, ViewGraph), String> {
    let conf = std::fs::read_to_string(dir.join("bun.conf")).map_err(|e| format!("bun.conf: {e}"))?;
    let mut clouds = Vec::new();
    let mut motions = Vec::new();
    for scan in BUNNY_SCANS {
        let path: PathBuf = dir.join(format!("{scan}.ply"));
        let doc = read_ply(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let stride = doc.vertices.len().div_ceil(BUNNY_MAX_POINTS).max(1);
        clouds.push(PointCloud::new(doc.vertices.iter().step_by(stride).copied().collect()));
        motions.push(conf_motion(&conf, scan).ok_or_else(|| format!("no bmesh line for {scan}"))?);
    }
    let anchor = motions[0].inverse();
    let motions = motions.iter().map(|m| anchor.compose(m)).collect();
    Ok((clouds, ViewGraph::new(motions).map_err(|e| e.to_string())?))
}

#[test]
fn bunny_scans() {
    let Some(dir) = std::env::var_os(BUNNY_ENV) else {
        report(6, "bunny scans", Verdict::Skip, &format!("set {BUNNY_ENV} to the scan directory to run"));
        return;
    };
    let (clouds, reference) = match load_bunny(Path::new(&dir)) {
        Ok(x) => x,
        Err(e) => {
            report(6, "bunny scans", Verdict::Fail, &e);
            return;
        }
    };
    let cfg = PipelineConfig::default();
    let factor = cfg.icp.coincidence_factor;
    let pairs = gated_pairs(&overlap_matrix(&clouds, &reference, factor).unwrap(), cfg.overlap_gate);
    let rough = perturb_graph(&reference, 0.04, 6);
    let score = |g: &ViewGraph| pair_objective(&clouds, g, &pairs, factor).unwrap();
    let o_rough = score(&rough);
    let o_ma = score(&register_multiview(&clouds, &rough, &cfg).unwrap().graph);
    let o_chain = match register_chained(&clouds, &rough, &ClassicIcpConfig::default()) {
        Ok(g) => score(&g),
        Err(_) => f64::INFINITY,
    };
    report(
        6,
        "bunny scans",
        verdict(o_ma < o_rough && o_ma < o_chain),
        &format!("objective rough {o_rough:.4e}, pipeline {o_ma:.4e}, chained {o_chain:.4e}"),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn saliency_analytics() {
    let r = 0.8;
    let cfg = RetrievalConfig::default();

    let mut sphere = synth::icosphere(4, r);
    sphere.set_curvature(vec![1.0 / r; sphere.vertices().len()]).unwrap();
    let sal = saliency(&sphere, &cfg).unwrap();
    let max_sal = sal.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let sphere_ok = max_sal < 1e-6 * (1.0 / r);

    let mut discrete = synth::icosphere(4, r);
    discrete.compute_curvature().unwrap();
    let max_sal_discrete = saliency(&discrete, &cfg)
        .unwrap()
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let h = mean_curvature(&synth::icosphere(3, r)).unwrap();
    let worst_curv = h.iter().map(|k| rel_err(*k, 1.0 / r)).fold(0.0, f64::max);

    let patch = synth::grid_patch(12, 9, 0.1, |_, _| 0.0);
    let boundary = patch.boundary_vertices();
    let flat = mean_curvature(&patch).unwrap();
    let worst_flat = flat
        .iter()
        .zip(&boundary)
        .filter(|(_, b)| !**b)
        .map(|(k, _)| k.abs())
        .fold(0.0, f64::max);

    let ok = sphere_ok && max_sal_discrete < 1e-6 * (1.0 / r) && worst_curv <= 0.15 && worst_flat < 1e-6;
    report(
        7,
        "saliency and curvature",
        verdict(ok),
        &format!(
            "sphere max saliency {max_sal:.1e} exact curvature, {max_sal_discrete:.1e} cotangent curvature, \
             icosphere curvature error {:.1}%, flat interior {worst_flat:.1e}",
            100.0 * worst_curv
        ),
    );
}

// ---------------------------------------------------------------- 8

fn random_triangle(rng: &mut ChaCha8Rng) -> [Point3; 3] {
    loop {
        let v: [Point3; 3] = std::array::from_fn(|_| Point3::from_fn(|_, _| rng.random_range(-1.0..1.0)));
        let area = (v[1] - v[0]).cross(&(v[2] - v[0])).norm() / 2.0;
        let longest = (0..3).map(|k| (v[k] - v[(k + 1) % 3]).norm()).fold(0.0, f64::max);
        // keep away from slivers
        if area > 0.1 * longest * longest {
            return v;
        }
    }
}

fn triangle(v: [Point3; 3]) -> FacialTriangle {
    FacialTriangle::new(v[0], v[1], v[2]).unwrap()
}

/// Brute-force alignment: normals aligned, then dense grids over in-plane
/// angle and log-scale, refined around the best cell, for the squared-distance
/// optimum; the mean vertex distance there is returned.
fn grid_oracle(test: &[Point3; 3], standard: &[Point3; 3]) -> f64 {
    let centered = |v: &[Point3; 3]| {
        let c = (v[0] + v[1] + v[2]) / 3.0;
        v.map(|p| p - c)
    };
    let normal = |v: &[Point3; 3]| (v[1] - v[0]).cross(&(v[2] - v[0])).normalize();
    let (p, q) = (centered(test), centered(standard));
    let (nt, ns) = (normal(test), normal(standard));
    let align = Rotation3::rotation_between(&nt, &ns).unwrap_or_else(|| {
        let perp = if nt.x.abs() < 0.9 { nt.cross(&Vector3::x()) } else { nt.cross(&Vector3::y()) };
        Rotation3::from_axis_angle(&Unit::new_normalize(perp), std::f64::consts::PI)
    });
    let p = p.map(|v| align * v);
    let axis = Unit::new_normalize(ns);

    let mut best = f64::INFINITY;
    for shift in 0..3 {
        let ps = [p[shift], p[(shift + 1) % 3], p[(shift + 2) % 3]];
        let sse = |theta: f64, log_s: f64| {
            let rot = Rotation3::from_axis_angle(&axis, theta);
            let s = log_s.exp();
            ps.iter().zip(&q).map(|(a, b)| (s * (rot * a) - b).norm_squared()).sum::<f64>()
        };
        let (mut t0, mut s0) = (0.0, 0.0);
        let mut e0 = f64::INFINITY;
        let (nt_grid, ns_grid) = (720, 400);
        let (s_lo, s_hi) = (0.01f64.ln(), 100f64.ln());
        for a in 0..nt_grid {
            let theta = std::f64::consts::TAU * a as f64 / nt_grid as f64;
            for b in 0..=ns_grid {
                let ls = s_lo + (s_hi - s_lo) * b as f64 / ns_grid as f64;
                let e = sse(theta, ls);
                if e < e0 {
                    (e0, t0, s0) = (e, theta, ls);
                }
            }
        }
        let (mut dt, mut ds) = (std::f64::consts::TAU / nt_grid as f64, (s_hi - s_lo) / ns_grid as f64);
        for _ in 0..6 {
            let (ct, cs) = (t0, s0);
            for a in -20..=20 {
                for b in -20..=20 {
                    let (theta, ls) = (ct + dt * a as f64 / 10.0, cs + ds * b as f64 / 10.0);
                    let e = sse(theta, ls);
                    if e < e0 {
                        (e0, t0, s0) = (e, theta, ls);
                    }
                }
            }
            dt /= 10.0;
            ds /= 10.0;
        }
        let rot = Rotation3::from_axis_angle(&axis, t0);
        let mean = ps
            .iter()
            .zip(&q)
            .map(|(a, b)| (s0.exp() * (rot * a) - b).norm())
            .sum::<f64>()
            / 3.0;
        best = best.min(mean);
    }
    best
}

#[test]
fn triangle_match_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base = random_triangle(&mut rng);
    let original = triangle(base);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let g = random_motion(&mut rng);
        let s = rng.random_range(0.2..=5.0);
        let moved = triangle(base.map(|p| g.transform_point(&(p * s))));
        worst = worst.max(match_triangle(&moved, &original));
    }

    // equilateral standard against an isosceles test, then random scalene pairs
    let h = (1.0f64 - 0.36).sqrt();
    let mut cases = vec![(
        [Point3::new(-0.6, 0.0, 0.0), Point3::new(0.6, 0.0, 0.0), Point3::new(0.0, h, 0.0)],
        [Point3::new(-0.5, 0.0, 0.0), Point3::new(0.5, 0.0, 0.0), Point3::new(0.0, 3f64.sqrt() / 2.0, 0.0)],
    )];
    while cases.len() < 20 {
        cases.push((random_triangle(&mut rng), random_triangle(&mut rng)));
    }
    let mut worst_gap = 0.0f64;
    for (t, s) in &cases {
        let got = match_triangle(&triangle(*t), &triangle(*s));
        worst_gap = worst_gap.max((got - grid_oracle(t, s)).abs());
    }
    report(
        8,
        "triangle match invariance",
        verdict(worst < 1e-8 && worst_gap <= 1e-3),
        &format!("1000 similarities: max E_FT {worst:.1e}; 20 grid-oracle cases: max gap {worst_gap:.1e}"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn retrieval_separability() {
    let battery = synth::retrieval_battery(9);
    let (meshes, labels): (Vec<_>, Vec<bool>) = battery.into_iter().unzip();
    let cfg = synth::battery_retrieval_config();
    let outcomes = retrieve_faces(&meshes, &synth::standard_face_triangle(), &cfg).unwrap();
    let correct = outcomes.iter().zip(&labels).filter(|(o, l)| o.is_face == **l).count();

    // best achievable single threshold, for context
    let errors: Vec<f64> = outcomes.iter().map(|o| o.best_error.unwrap_or(f64::INFINITY)).collect();
    let best_split = errors
        .iter()
        .map(|&t| {
            errors
                .iter()
                .zip(&labels)
                .filter(|(e, l)| (**e <= t && t.is_finite()) == **l)
                .count()
        })
        .max()
        .unwrap_or(0);
    let n = labels.len();
    let faces = labels.iter().filter(|l| **l).count();
    report(
        9,
        "retrieval separability",
        verdict(n == 36 && faces == 18 && correct * 10 >= n * 9),
        &format!(
            "{correct}/{n} correct at threshold {} (best single threshold {best_split}/{n})",
            cfg.thres_ft
        ),
    );
}

// ---------------------------------------------------------------- 10

fn bits_equal(a: &PlyDocument, b: &PlyDocument) -> bool {
    let same = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    let va: Vec<f64> = a.vertices.iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()).collect();
    let vb: Vec<f64> = b.vertices.iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()).collect();
    same(&va, &vb)
        && a.faces == b.faces
        && a.vertex_scalars.len() == b.vertex_scalars.len()
        && a.vertex_scalars
            .iter()
            .zip(&b.vertex_scalars)
            .all(|((na, sa), (nb, sb))| na == nb && same(sa, sb))
}

fn ply_checks() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut vertices: Vec<Point3> = (0..500)
        .map(|_| Point3::from_fn(|_, _| rng.random_range(-1e3..1e3) * 10f64.powi(rng.random_range(-12..12))))
        .collect();
    vertices.push(Point3::new(-0.0, f64::MIN_POSITIVE / 8.0, f64::MAX));
    vertices.push(Point3::new(std::f64::consts::PI, 1e-300, -1.0 / 3.0));
    let n = vertices.len();
    let mut doc = PlyDocument::from_points(vertices);
    doc.precision = Precision::F64;
    doc.faces = (0..n - 2).map(|k| [k, k + 1, k + 2]).collect();
    doc.vertex_scalars.push(("quality".into(), (0..n).map(|k| (k as f64).sqrt()).collect()));
    for format in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
        let bytes = encode_ply(&doc, format).map_err(|e| e.to_string())?;
        let back = parse_ply(&bytes).map_err(|e| e.to_string())?;
        if !bits_equal(&doc, &back) {
            return Err(format!("{format:?} round trip changed values"));
        }
        if encode_ply(&back, format).map_err(|e| e.to_string())? != bytes {
            return Err(format!("{format:?} re-encode differs"));
        }
    }

    let header = |count: usize, format: &str| {
        format!("ply\nformat {format} 1.0\nelement vertex {count}\nproperty double x\nproperty double y\nproperty double z\nend_header\n")
    };
    let body: String = (0..9).map(|k| format!("{k} 0 0\n")).collect();
    let short = format!("{}{body}", header(10, "ascii"));
    if !matches!(parse_ply(short.as_bytes()), Err(PlyError::CountMismatch { .. })) {
        return Err("10 declared / 9 present not reported as CountMismatch".into());
    }
    let big = format!("{}{}", header(1, "binary_big_endian"), "\0".repeat(24));
    if !matches!(parse_ply(big.as_bytes()), Err(PlyError::UnsupportedFormat(_))) {
        return Err("big-endian body not reported as UnsupportedFormat".into());
    }
    for bad in [
        "plx\nformat ascii 1.0\nend_header\n".to_string(),
        "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\n".to_string(),
        "ply\nformat ascii 1.0\nelement vertex many\nend_header\n".to_string(),
        "ply\nformat sideways 1.0\nelement vertex 0\nend_header\n".to_string(),
    ] {
        if !matches!(parse_ply(bad.as_bytes()), Err(PlyError::MalformedHeader(_))) {
            return Err(format!("not rejected as MalformedHeader: {bad:?}"));
        }
    }
    Ok(())
}

fn reports_for(seed: u64) -> Vec<String> {
    let cfg: RunConfig = format!("seed = {seed}\nscene.surface_points = 500\nbench.trials = 2\nbench.noise_levels = 0.03\n")
        .parse()
        .unwrap();
    let scene = synth::scan_scene(&cfg.bench.scene, cfg.seed);
    let clouds: Vec<PointCloud> = scene.views.into_iter().map(PointCloud::new).collect();
    let truth = ViewGraph::new(scene.truth).unwrap();
    let init = perturb_graph(&truth, 0.03, cfg.seed);
    let reg = register_multiview(&clouds, &init, &cfg.pipeline).unwrap();
    let bench = run_benchmark(&cfg.bench, &cfg.pipeline, &cfg.classic, cfg.seed).unwrap();
    let battery: Vec<_> = synth::retrieval_battery(cfg.seed)
        .into_iter()
        .step_by(9)
        .map(|(m, _)| m)
        .collect();
    let names: Vec<String> = (0..battery.len()).map(|k| format!("m{k}")).collect();
    let outcomes = retrieve_faces(&battery, &synth::standard_face_triangle(), &synth::battery_retrieval_config()).unwrap();
    vec![
        cfg.to_string(),
        registration_report_text(&reg),
        bench.to_csv(),
        retrieval_report_text(&outcomes, &names),
    ]
}

#[test]
fn io_contracts() {
    let ply = ply_checks();
    let first = reports_for(77);
    let identical = first == reports_for(77);
    let detail = match &ply {
        Ok(()) => format!("PLY bit-exact and malformed inputs rejected; repeated reports identical: {identical}"),
        Err(e) => format!("{e}; repeated reports identical: {identical}"),
    };
    report(10, "i/o contracts", verdict(ply.is_ok() && identical), &detail);
}
