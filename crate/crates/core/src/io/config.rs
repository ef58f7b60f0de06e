//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; omitted keys keep their defaults. Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::io::bench::BenchSpec;
use crate::pipeline::PipelineConfig;
use crate::registration::ClassicIcpConfig;
use crate::retrieval::{RetrievalConfig, SaliencyThreshold};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue { key: String, value: String, line: usize },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { key: String, line: usize },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub classic: ClassicIcpConfig,
    pub retrieval: RetrievalConfig,
    pub bench: BenchSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pipeline: PipelineConfig::default(),
            classic: ClassicIcpConfig::default(),
            retrieval: RetrievalConfig::default(),
            bench: BenchSpec::default(),
        }
    }
}

/// Every accepted key, in the order `Display` writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "icp.range_accuracy",
    "icp.max_iterations",
    "icp.coincidence_factor",
    "icp.min_overlap",
    "pipeline.overlap_gate",
    "pipeline.outer_iterations",
    "pipeline.outer_tolerance",
    "averaging.epsilon",
    "averaging.max_rounds",
    "classic.max_iterations",
    "classic.min_improvement",
    "retrieval.saliency_threshold",
    "retrieval.th_dist",
    "retrieval.thres_ft",
    "retrieval.scale_fraction",
    "bench.noise_levels",
    "bench.trials",
    "scene.n_views",
    "scene.surface_points",
    "scene.radius",
    "scene.azimuth_step",
    "scene.visibility_cos",
    "scene.noise_sigma",
];

fn threshold_text(t: &SaliencyThreshold) -> String {
    match t {
        SaliencyThreshold::Absolute(v) => format!("absolute:{v}"),
        SaliencyThreshold::Percentile(q) => format!("percentile:{q}"),
    }
}

fn parse_threshold(s: &str) -> Option<SaliencyThreshold> {
    let (kind, v) = s.split_once(':')?;
    let v: f64 = v.trim().parse().ok()?;
    match kind.trim() {
        "absolute" => Some(SaliencyThreshold::Absolute(v)),
        "percentile" => Some(SaliencyThreshold::Percentile(v)),
        _ => None,
    }
}

impl RunConfig {
    fn value_of(&self, key: &str) -> String {
        let p = &self.pipeline;
        let r = &self.retrieval;
        let s = &self.bench.scene;
        match key {
            "seed" => self.seed.to_string(),
            "icp.range_accuracy" => p.icp.range_accuracy.to_string(),
            "icp.max_iterations" => p.icp.max_iterations.to_string(),
            "icp.coincidence_factor" => p.icp.coincidence_factor.to_string(),
            "icp.min_overlap" => p.icp.min_overlap.to_string(),
            "pipeline.overlap_gate" => p.overlap_gate.to_string(),
            "pipeline.outer_iterations" => p.outer_iterations.to_string(),
            "pipeline.outer_tolerance" => p.outer_tolerance.to_string(),
            "averaging.epsilon" => p.averaging_epsilon.to_string(),
            "averaging.max_rounds" => p.averaging_max_rounds.to_string(),
            "classic.max_iterations" => self.classic.max_iterations.to_string(),
            "classic.min_improvement" => self.classic.min_improvement.to_string(),
            "retrieval.saliency_threshold" => threshold_text(&r.saliency_threshold),
            "retrieval.th_dist" => r.th_dist.map_or_else(|| "auto".into(), |d| d.to_string()),
            "retrieval.thres_ft" => r.thres_ft.to_string(),
            "retrieval.scale_fraction" => r.scale_fraction.to_string(),
            "bench.noise_levels" => self
                .bench
                .noise_levels
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "bench.trials" => self.bench.trials.to_string(),
            "scene.n_views" => s.n_views.to_string(),
            "scene.surface_points" => s.surface_points.to_string(),
            "scene.radius" => s.radius.to_string(),
            "scene.azimuth_step" => s.azimuth_step.to_string(),
            "scene.visibility_cos" => s.visibility_cos.to_string(),
            "scene.noise_sigma" => s.noise_sigma.to_string(),
            _ => unreachable!("key list and match arms agree"),
        }
    }

    /// Sets one key; `None` means the value did not parse.
    fn set(&mut self, key: &str, v: &str) -> Option<Option<()>> {
        fn num<T: FromStr>(v: &str) -> Option<T> {
            v.parse().ok()
        }
        let p = &mut self.pipeline;
        let r = &mut self.retrieval;
        let s = &mut self.bench.scene;
        let ok = match key {
            "seed" => num(v).map(|x| self.seed = x),
            "icp.range_accuracy" => num(v).map(|x| p.icp.range_accuracy = x),
            "icp.max_iterations" => num(v).map(|x| p.icp.max_iterations = x),
            "icp.coincidence_factor" => num(v).map(|x| p.icp.coincidence_factor = x),
            "icp.min_overlap" => num(v).map(|x| p.icp.min_overlap = x),
            "pipeline.overlap_gate" => num(v).map(|x| p.overlap_gate = x),
            "pipeline.outer_iterations" => num(v).map(|x| p.outer_iterations = x),
            "pipeline.outer_tolerance" => num(v).map(|x| p.outer_tolerance = x),
            "averaging.epsilon" => num(v).map(|x| p.averaging_epsilon = x),
            "averaging.max_rounds" => num(v).map(|x| p.averaging_max_rounds = x),
            "classic.max_iterations" => num(v).map(|x| self.classic.max_iterations = x),
            "classic.min_improvement" => num(v).map(|x| self.classic.min_improvement = x),
            "retrieval.saliency_threshold" => parse_threshold(v).map(|x| r.saliency_threshold = x),
            "retrieval.th_dist" => {
                if v == "auto" {
                    r.th_dist = None;
                    Some(())
                } else {
                    num(v).map(|x| r.th_dist = Some(x))
                }
            }
            "retrieval.thres_ft" => num(v).map(|x| r.thres_ft = x),
            "retrieval.scale_fraction" => num(v).map(|x| r.scale_fraction = x),
            "bench.noise_levels" => v
                .split(',')
                .map(|t| t.trim().parse::<f64>().ok())
                .collect::<Option<Vec<_>>>()
                .map(|x| self.bench.noise_levels = x),
            "bench.trials" => num(v).map(|x| self.bench.trials = x),
            "scene.n_views" => num(v).map(|x| s.n_views = x),
            "scene.surface_points" => num(v).map(|x| s.surface_points = x),
            "scene.radius" => num(v).map(|x| s.radius = x),
            "scene.azimuth_step" => num(v).map(|x| s.azimuth_step = x),
            "scene.visibility_cos" => num(v).map(|x| s.visibility_cos = x),
            "scene.noise_sigma" => num(v).map(|x| s.noise_sigma = x),
            _ => return None,
        };
        Some(ok)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn fmt::Display| ConfigError::Invalid(e.to_string());
        self.pipeline.validate().map_err(|e| invalid(&e))?;
        self.retrieval.validate().map_err(|e| invalid(&e))?;
        self.bench.validate().map_err(|e| invalid(&e))?;
        if self.classic.max_iterations == 0 {
            return Err(ConfigError::Invalid("classic.max_iterations must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        fs::read_to_string(path)?.parse()
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(ConfigError::DuplicateKey { key: key.into(), line });
            }
            match cfg.set(key, value) {
                None => return Err(ConfigError::UnknownKey { key: key.into(), line }),
                Some(None) => {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        value: value.into(),
                        line,
                    })
                }
                Some(Some(())) => seen.push(key),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for RunConfig {
    /// Writes every key, so the output reloads to an equal config.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in CONFIG_KEYS {
            writeln!(f, "{key} = {}", self.value_of(key))?;
        }
        Ok(())
    }
}
