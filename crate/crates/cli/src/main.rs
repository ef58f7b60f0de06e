//! `mvreg`: batch front end for registration, sections, saliency,
//! face retrieval and the Monte Carlo benchmark.
//!
//! Exit codes: 0 success, 1 input error, 2 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mvreg_core::averaging::{AveragingError, ViewGraph};
use mvreg_core::geometry::{GeometryError, RigidMotion};
use mvreg_core::io::report::{
    fuse_views, read_transform, registration_report_text, retrieval_report_text, transform_path,
    write_transforms, TransformFileError,
};
use mvreg_core::io::{
    cross_section, read_ply, run_benchmark, section_csv, write_ply, Axis, ConfigError, PlyDocument,
    PlyError, PlyFormat, RunConfig,
};
use mvreg_core::pipeline::{register_multiview, PipelineError};
use mvreg_core::registration::{icp_adaptive, PointCloud, RegistrationError};
use mvreg_core::retrieval::{
    cluster_salient, retrieve_faces, saliency, FacialTriangle, RetrievalError, TriangleMesh,
};
use mvreg_core::synth;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "mvreg", version, about = "Multi-view point cloud registration toolkit")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register SOURCE onto TARGET; writes pairwise.txt and pairwise_report.txt.
    Pairwise {
        source: PathBuf,
        target: PathBuf,
        /// Initial transform file.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Register N views; writes view_NNN.txt, fused.ply, report.txt, timings.txt.
    Register {
        #[arg(required = true, num_args = 2..)]
        clouds: Vec<PathBuf>,
        /// Directory of view_NNN.txt initial motions (identity when absent).
        #[arg(long)]
        init_dir: Option<PathBuf>,
    },
    /// Slice views placed by their motions; writes section.csv.
    Section {
        #[arg(required = true)]
        clouds: Vec<PathBuf>,
        /// Directory of view_NNN.txt motions (identity when absent).
        #[arg(long)]
        transforms: Option<PathBuf>,
        #[arg(long, default_value = "z")]
        axis: String,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        position: f64,
        #[arg(long)]
        thickness: f64,
    },
    /// Per-vertex saliency of a mesh; writes saliency.ply and clusters.txt.
    Saliency { mesh: PathBuf },
    /// Classify meshes against a standard facial triangle; writes retrieval.txt.
    Retrieve {
        standard: PathBuf,
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Monte Carlo noise benchmark on a synthetic scene; writes bench.csv and bench_timings.csv.
    Bench,
    /// Write synthetic inputs.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SynthKind {
    /// Scan views (view_NNN.ply) and ground truth (truth/view_NNN.txt).
    Scene,
    /// Face/non-face meshes (model_NN.ply), labels.txt, standard.txt and the tuned battery.cfg.
    Battery,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Ply { path: PathBuf, source: PlyError },
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Transform(#[from] TransformFileError),
    #[error("{0}")]
    Registration(#[from] RegistrationError),
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Retrieval(#[from] RetrievalError),
    #[error("{0}")]
    Averaging(#[from] AveragingError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }

    fn is_numerical(&self) -> bool {
        fn registration(e: &RegistrationError) -> bool {
            matches!(e, RegistrationError::DegenerateConfiguration | RegistrationError::ZeroResolution)
        }
        fn averaging(e: &AveragingError) -> bool {
            matches!(
                e,
                AveragingError::RankDeficient | AveragingError::Geometry(GeometryError::AngleAtBranchCut { .. })
            )
        }
        match self {
            CliError::Registration(e) => registration(e),
            CliError::Averaging(e) => averaging(e),
            CliError::Pipeline(e) => match e {
                PipelineError::DisconnectedAfterGating => true,
                PipelineError::Registration(r) => registration(r),
                PipelineError::Averaging(a) => averaging(a),
                _ => false,
            },
            CliError::Retrieval(e) => matches!(e, RetrievalError::DegenerateBoundingBox),
            _ => false,
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

fn load_ply(path: &Path) -> Result<PlyDocument, CliError> {
    read_ply(path).map_err(|source| CliError::Ply { path: path.into(), source })
}

fn save_ply(doc: &PlyDocument, path: &Path) -> Result<(), CliError> {
    write_ply(doc, path, PlyFormat::BinaryLittleEndian)
        .map_err(|source| CliError::Ply { path: path.into(), source })
}

fn load_cloud(path: &Path) -> Result<PointCloud, CliError> {
    Ok(PointCloud::new(load_ply(path)?.vertices))
}

fn load_mesh(path: &Path) -> Result<TriangleMesh, CliError> {
    let doc = load_ply(path)?;
    if doc.faces.is_empty() {
        return Err(CliError::Usage(format!("{}: mesh has no faces", path.display())));
    }
    Ok(TriangleMesh::new(doc.vertices, doc.faces)?)
}

fn load_graph(dir: Option<&Path>, n: usize) -> Result<ViewGraph, CliError> {
    let motions = match dir {
        None => vec![RigidMotion::identity(); n],
        Some(dir) => (0..n)
            .map(|k| read_transform(&transform_path(dir, k)))
            .collect::<Result<Vec<_>, _>>()?,
    };
    // the anchor is the reference frame; re-express everything relative to it
    let anchor = motions[0].inverse();
    let mut motions: Vec<RigidMotion> = motions.iter().map(|m| anchor.compose(m)).collect();
    motions[0] = RigidMotion::identity();
    Ok(ViewGraph::new(motions)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(|source| CliError::Io { path: out.into(), source })?;

    match cli.command {
        Command::Pairwise { source, target, init } => {
            let src = load_cloud(&source)?;
            let dst = load_cloud(&target)?;
            let init = match init {
                Some(p) => read_transform(&p)?,
                None => RigidMotion::identity(),
            };
            let r = icp_adaptive(&src, &dst, &init, &cfg.pipeline.icp)?;
            write_file(&out.join("pairwise.txt"), r.motion.to_string())?;
            let report = format!(
                "iterations {}\nconverged {}\nfinal_rms {:e}\noverlap_rate {}\nthreshold {:e}\n",
                r.iterations_used, r.converged, r.final_rms, r.overlap_rate, r.threshold
            );
            write_file(&out.join("pairwise_report.txt"), report)?;
        }
        Command::Register { clouds, init_dir } => {
            let views: Vec<PointCloud> = clouds.iter().map(|p| load_cloud(p)).collect::<Result<_, _>>()?;
            let init = load_graph(init_dir.as_deref(), views.len())?;
            let report = register_multiview(&views, &init, &cfg.pipeline)?;
            write_transforms(out, &report.graph).map_err(|source| CliError::Io { path: out.into(), source })?;
            let raw: Vec<Vec<_>> = views.iter().map(|c| c.points().to_vec()).collect();
            let fused = fuse_views(&raw, &report.graph);
            let mut doc = PlyDocument::from_points(fused.iter().flatten().copied().collect());
            let labels = fused
                .iter()
                .enumerate()
                .flat_map(|(k, v)| std::iter::repeat_n(k as f64, v.len()))
                .collect();
            doc.vertex_scalars.push(("view".into(), labels));
            save_ply(&doc, &out.join("fused.ply"))?;
            write_file(&out.join("report.txt"), registration_report_text(&report))?;
            write_file(&out.join("timings.txt"), format!("wall_seconds {:.6}\n", report.wall_seconds))?;
        }
        Command::Section {
            clouds,
            transforms,
            axis,
            position,
            thickness,
        } => {
            let axis: Axis = axis.parse().map_err(CliError::Usage)?;
            if !(thickness > 0.0) {
                return Err(CliError::Usage("--thickness must be positive".into()));
            }
            let views: Vec<Vec<_>> = clouds
                .iter()
                .map(|p| load_ply(p).map(|d| d.vertices))
                .collect::<Result<_, _>>()?;
            let graph = load_graph(transforms.as_deref(), views.len())?;
            let fused = fuse_views(&views, &graph);
            write_file(&out.join("section.csv"), section_csv(&cross_section(&fused, axis, position, thickness)))?;
        }
        Command::Saliency { mesh } => {
            let mut m = load_mesh(&mesh)?;
            m.compute_curvature()?;
            let field = saliency(&m, &cfg.retrieval)?;
            let clusters = cluster_salient(&field, &m, &cfg.retrieval);
            let mut doc = PlyDocument::from_points(m.vertices().to_vec());
            doc.faces = m.faces().to_vec();
            doc.vertex_scalars = vec![
                ("curvature".into(), m.curvature().expect("computed above").to_vec()),
                ("saliency".into(), field.values.clone()),
            ];
            save_ply(&doc, &out.join("saliency.ply"))?;
            let mut text = String::from("cluster size cx cy cz peak\n");
            for (k, c) in clusters.iter().enumerate() {
                text.push_str(&format!(
                    "{k} {} {} {} {} {}\n",
                    c.members.len(),
                    c.centroid.x,
                    c.centroid.y,
                    c.centroid.z,
                    c.peak_saliency
                ));
            }
            write_file(&out.join("clusters.txt"), text)?;
        }
        Command::Retrieve { standard, models } => {
            let text = fs::read_to_string(&standard).map_err(|source| CliError::Io {
                path: standard.clone(),
                source,
            })?;
            let std_tri: FacialTriangle = text.parse()?;
            let meshes: Vec<TriangleMesh> = models.iter().map(|p| load_mesh(p)).collect::<Result<_, _>>()?;
            let outcomes = retrieve_faces(&meshes, &std_tri, &cfg.retrieval)?;
            let names: Vec<String> = models
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into()))
                .collect();
            write_file(&out.join("retrieval.txt"), retrieval_report_text(&outcomes, &names))?;
        }
        Command::Bench => {
            let start = Instant::now();
            let table = run_benchmark(&cfg.bench, &cfg.pipeline, &cfg.classic, cfg.seed)?;
            write_file(&out.join("bench.csv"), table.to_csv())?;
            let mut timings = table.timings_csv();
            timings.push_str(&format!("total,all,{:.6}\n", start.elapsed().as_secs_f64()));
            write_file(&out.join("bench_timings.csv"), timings)?;
        }
        Command::Synth { kind } => match kind {
            SynthKind::Scene => {
                let scene = synth::scan_scene(&cfg.bench.scene, cfg.seed);
                for (k, v) in scene.views.iter().enumerate() {
                    save_ply(&PlyDocument::from_points(v.clone()), &out.join(format!("view_{k:03}.ply")))?;
                }
                let truth_dir = out.join("truth");
                fs::create_dir_all(&truth_dir).map_err(|source| CliError::Io {
                    path: truth_dir.clone(),
                    source,
                })?;
                let graph = ViewGraph::new(scene.truth)?;
                write_transforms(&truth_dir, &graph).map_err(|source| CliError::Io { path: truth_dir, source })?;
            }
            SynthKind::Battery => {
                let mut labels = String::from("model label\n");
                for (k, (mesh, is_face)) in synth::retrieval_battery(cfg.seed).into_iter().enumerate() {
                    let name = format!("model_{k:02}.ply");
                    let mut doc = PlyDocument::from_points(mesh.vertices().to_vec());
                    doc.faces = mesh.faces().to_vec();
                    save_ply(&doc, &out.join(&name))?;
                    labels.push_str(&format!("{name} {}\n", if is_face { "face" } else { "non-face" }));
                }
                write_file(&out.join("labels.txt"), labels)?;
                write_file(&out.join("standard.txt"), synth::standard_face_triangle().to_string())?;
                // retrieval settings the battery was calibrated with, for use via --config
                let tuned = RunConfig {
                    seed: cfg.seed,
                    retrieval: synth::battery_retrieval_config(),
                    ..RunConfig::default()
                };
                write_file(&out.join("battery.cfg"), tuned.to_string())?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
