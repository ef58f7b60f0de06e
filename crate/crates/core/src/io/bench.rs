//! Monte Carlo robustness benchmark: perturb the ground-truth motions of a
//! synthetic scan scene, register with each strategy, tabulate.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::averaging::ViewGraph;
use crate::pipeline::{
    gated_pairs, max_rotation_error, overlap_matrix, pair_objective, perturb_graph,
    register_chained, register_multiview, PipelineConfig, PipelineError,
};
use crate::registration::{ClassicIcpConfig, PointCloud};
use crate::synth::{scan_scene, SceneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub scene: SceneConfig,
    /// Rotation noise levels in radians.
    pub noise_levels: Vec<f64>,
    pub trials: usize,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            noise_levels: vec![0.02, 0.04, 0.06],
            trials: 50,
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.trials == 0 {
            return Err("bench.trials must be at least 1".into());
        }
        if self.noise_levels.is_empty() || self.noise_levels.iter().any(|l| !(*l >= 0.0)) {
            return Err("bench.noise_levels must be a non-empty list of non-negative values".into());
        }
        let s = &self.scene;
        if s.n_views < 2 || s.surface_points < 3 || !(s.radius > 0.0) || !(s.noise_sigma >= 0.0) {
            return Err("scene needs ≥ 2 views, ≥ 3 surface points, positive radius, non-negative noise".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Sequential classic ICP between consecutive views.
    Chained,
    /// Adaptive-threshold ICP on all gated pairs plus motion averaging.
    MotionAveraged,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Chained, Strategy::MotionAveraged];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Chained => "chained_icp",
            Strategy::MotionAveraged => "ma_aticp",
        }
    }
}

/// Outcome of one strategy on one perturbed start.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub objective: f64,
    pub rotation_error: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub noise_level: f64,
    pub strategy: Strategy,
    pub trials: usize,
    pub failures: usize,
    pub mean_objective: f64,
    pub std_objective: f64,
    pub mean_rotation_error: f64,
    pub mean_seconds: f64,
    /// Per-trial results in trial order; `None` where the strategy failed.
    pub results: Vec<Option<TrialResult>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn row(&self, level: f64, strategy: Strategy) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.noise_level == level && r.strategy == strategy)
    }

    /// Deterministic CSV; wall-clock columns live in [`timings_csv`](Self::timings_csv).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("noise_level,strategy,trials,failures,mean_o,std_o,mean_rotation_error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.9e},{:.9e},{:.9e}",
                r.noise_level,
                r.strategy.name(),
                r.trials,
                r.failures,
                r.mean_objective,
                r.std_objective,
                r.mean_rotation_error
            );
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("noise_level,strategy,mean_t\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6}", r.noise_level, r.strategy.name(), r.mean_seconds);
        }
        out
    }
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_strategy(
    strategy: Strategy,
    clouds: &[PointCloud],
    init: &ViewGraph,
    pipeline: &PipelineConfig,
    classic: &ClassicIcpConfig,
) -> Result<ViewGraph, PipelineError> {
    match strategy {
        Strategy::Chained => register_chained(clouds, init, classic),
        Strategy::MotionAveraged => register_multiview(clouds, init, pipeline).map(|r| r.graph),
    }
}

/// Runs every strategy on `spec.trials` perturbed starts per noise level.
/// The scene and all perturbations derive from `seed`. Both strategies are
/// scored with the objective over the pairs gated at ground truth, so a
/// poor result cannot shrink its own pair set.
pub fn run_benchmark(
    spec: &BenchSpec,
    pipeline: &PipelineConfig,
    classic: &ClassicIcpConfig,
    seed: u64,
) -> Result<BenchTable, PipelineError> {
    spec.validate().map_err(PipelineError::InvalidConfig)?;
    pipeline.validate()?;
    let scene = scan_scene(&spec.scene, seed);
    let clouds: Vec<PointCloud> = scene.views.into_iter().map(PointCloud::new).collect();
    let truth = ViewGraph::new(scene.truth)?;
    let factor = pipeline.icp.coincidence_factor;
    let pairs = gated_pairs(&overlap_matrix(&clouds, &truth, factor)?, pipeline.overlap_gate);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d76_7265_675f_6d63);
    let mut rows = Vec::new();
    for &level in &spec.noise_levels {
        let seeds: Vec<u64> = (0..spec.trials).map(|_| rng.random()).collect();
        let inits: Vec<ViewGraph> = seeds.iter().map(|&s| perturb_graph(&truth, level, s)).collect();
        for strategy in Strategy::ALL {
            let results: Vec<Option<TrialResult>> = inits
                .par_iter()
                .map(|init| {
                    let start = Instant::now();
                    let graph = run_strategy(strategy, &clouds, init, pipeline, classic).ok()?;
                    let seconds = start.elapsed().as_secs_f64();
                    let objective = pair_objective(&clouds, &graph, &pairs, factor).ok()?;
                    Some(TrialResult {
                        objective,
                        rotation_error: max_rotation_error(&graph, &truth),
                        seconds,
                    })
                })
                .collect();
            let ok: Vec<&TrialResult> = results.iter().flatten().collect();
            let objectives: Vec<f64> = ok.iter().map(|r| r.objective).collect();
            let (mean_objective, std_objective) = mean_std(&objectives);
            let (mean_rotation_error, _) =
                mean_std(&ok.iter().map(|r| r.rotation_error).collect::<Vec<_>>());
            let (mean_seconds, _) = mean_std(&ok.iter().map(|r| r.seconds).collect::<Vec<_>>());
            rows.push(BenchRow {
                noise_level: level,
                strategy,
                trials: spec.trials,
                failures: spec.trials - ok.len(),
                mean_objective,
                std_objective,
                mean_rotation_error,
                mean_seconds,
                results,
            });
        }
    }
    Ok(BenchTable { rows })
}
