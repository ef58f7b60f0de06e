use super::cloud::match_points;
use super::{count_coincident, fit_rigid_points, Correspondence, PointCloud, RegistrationError};
use crate::geometry::{Point3, RigidMotion};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    /// `R_e`, range accuracy of the scanner in model units.
    pub range_accuracy: f64,
    pub max_iterations: usize,
    /// Correspondences within `coincidence_factor · L_r` count as coincident.
    pub coincidence_factor: f64,
    /// Smallest final overlap for which a pairwise result is trusted.
    pub min_overlap: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            range_accuracy: 1e-4,
            max_iterations: 50,
            coincidence_factor: 2.0,
            min_overlap: 0.5,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |what: &str| Err(RegistrationError::InvalidConfig(what.to_string()));
        if !(self.range_accuracy > 0.0) || !self.range_accuracy.is_finite() {
            return bad("range_accuracy must be positive");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.coincidence_factor > 0.0) || !self.coincidence_factor.is_finite() {
            return bad("coincidence_factor must be positive");
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return bad("min_overlap must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the original source cloud into the target frame.
    pub motion: RigidMotion,
    /// Root mean squared distance over coincident correspondences.
    pub final_rms: f64,
    pub overlap_rate: f64,
    /// Adaptive threshold in effect at exit (squared distance units).
    pub threshold: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Mean squared distance of retained correspondences, one entry per
    /// evaluation.
    pub mse_history: Vec<f64>,
}

/// `e_thr = [(1 − N_p/N_t)·(√2/2)·L_r]² + R_e²`.
pub fn adaptive_threshold(coincident: usize, total: usize, resolution: f64, range_accuracy: f64) -> f64 {
    debug_assert!(total > 0 && coincident <= total);
    let miss = 1.0 - coincident as f64 / total as f64;
    let planar = miss * std::f64::consts::FRAC_1_SQRT_2 * resolution;
    planar * planar + range_accuracy * range_accuracy
}

struct Evaluation {
    corrs: Vec<Correspondence>,
    coincident: usize,
    threshold: f64,
    mse: f64,
}

fn evaluate(
    moved: &[Point3],
    target: &PointCloud,
    resolution: f64,
    cfg: &IcpConfig,
) -> Result<Evaluation, RegistrationError> {
    let corrs = match_points(moved, target)?;
    let coincident = count_coincident(&corrs, resolution, cfg.coincidence_factor);
    let threshold = adaptive_threshold(coincident, corrs.len(), resolution, cfg.range_accuracy);
    let cutoff = cfg.coincidence_factor * resolution;
    let (sum, n) = corrs
        .iter()
        .filter(|c| c.distance <= cutoff)
        .fold((0.0, 0usize), |(s, n), c| (s + c.distance * c.distance, n + 1));
    let mse = if n == 0 { f64::INFINITY } else { sum / n as f64 };
    Ok(Evaluation {
        corrs,
        coincident,
        threshold,
        mse,
    })
}

/// ICP whose stopping rule is the adaptive threshold `e_thr`, recomputed from
/// the current overlap each iteration. Only coincident correspondences take
/// part in the rigid fit and in the convergence test.
pub fn icp_adaptive(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidMotion,
    cfg: &IcpConfig,
) -> Result<IcpResult, RegistrationError> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(RegistrationError::EmptyTarget);
    }
    source.check_registrable()?;
    target.check_registrable()?;
    let resolution = target.resolution()?;
    let cutoff = cfg.coincidence_factor * resolution;

    let mut motion = *init;
    let mut history = Vec::with_capacity(cfg.max_iterations + 1);
    let finish = |motion, eval: &Evaluation, iterations_used, history: Vec<f64>| IcpResult {
        motion,
        final_rms: eval.mse.sqrt(),
        overlap_rate: eval.coincident as f64 / eval.corrs.len() as f64,
        threshold: eval.threshold,
        iterations_used,
        converged: eval.mse <= eval.threshold,
        mse_history: history,
    };

    for iteration in 1..=cfg.max_iterations {
        let moved = motion.transform_points(source.points());
        let eval = evaluate(&moved, target, resolution, cfg)?;
        history.push(eval.mse);
        if eval.mse <= eval.threshold {
            return Ok(finish(motion, &eval, iteration, history));
        }
        let (src, dst): (Vec<Point3>, Vec<Point3>) = eval
            .corrs
            .iter()
            .filter(|c| c.distance <= cutoff)
            .map(|c| (moved[c.source_index], target.points()[c.target_index]))
            .unzip();
        let step = fit_rigid_points(&src, &dst)?;
        motion = step.compose(&motion);
    }

    let moved = motion.transform_points(source.points());
    let eval = evaluate(&moved, target, resolution, cfg)?;
    history.push(eval.mse);
    Ok(finish(motion, &eval, cfg.max_iterations, history))
}

/// Settings for the classic point-to-point ICP used as a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicIcpConfig {
    pub max_iterations: usize,
    /// Stop once the mean squared distance improves by less than this.
    pub min_improvement: f64,
}

impl Default for ClassicIcpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            min_improvement: 1e-10,
        }
    }
}

/// Textbook ICP: every correspondence is used and iteration stops on a
/// fixed improvement threshold. Returns the motion and its final mean
/// squared distance.
pub fn icp_classic(
    source: &PointCloud,
    target: &PointCloud,
    init: &RigidMotion,
    cfg: &ClassicIcpConfig,
) -> Result<(RigidMotion, f64), RegistrationError> {
    source.check_registrable()?;
    let mut motion = *init;
    let mut prev = f64::INFINITY;
    for _ in 0..cfg.max_iterations {
        let moved = motion.transform_points(source.points());
        let corrs = match_points(&moved, target)?;
        let mse = corrs.iter().map(|c| c.distance * c.distance).sum::<f64>() / corrs.len() as f64;
        if prev - mse < cfg.min_improvement {
            return Ok((motion, mse));
        }
        prev = mse;
        let dst: Vec<Point3> = corrs.iter().map(|c| target.points()[c.target_index]).collect();
        motion = fit_rigid_points(&moved, &dst)?.compose(&motion);
    }
    let moved = motion.transform_points(source.points());
    let corrs = match_points(&moved, target)?;
    let mse = corrs.iter().map(|c| c.distance * c.distance).sum::<f64>() / corrs.len() as f64;
    Ok((motion, mse))
}
