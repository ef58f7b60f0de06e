//! Plain-text outputs: transform files, cross-sections, run reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::averaging::ViewGraph;
use crate::geometry::{GeometryError, Point3, RigidMotion};
use crate::pipeline::RegistrationReport;
use crate::retrieval::RetrievalOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        self as usize
    }

    /// The two remaining coordinates, in ascending axis order.
    fn others(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(format!("axis must be x, y or z, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionPoint {
    pub view: usize,
    pub u: f64,
    pub v: f64,
}

/// Points of every view inside the slab `|p[axis] − position| ≤ thickness/2`,
/// projected onto the other two axes. A non-positive thickness selects
/// nothing.
pub fn cross_section(views: &[Vec<Point3>], axis: Axis, position: f64, thickness: f64) -> Vec<SectionPoint> {
    if !(thickness > 0.0) {
        return Vec::new();
    }
    let half = thickness / 2.0;
    let (a, b) = axis.others();
    views
        .iter()
        .enumerate()
        .flat_map(|(view, pts)| {
            pts.iter()
                .filter(move |p| (p[axis.index()] - position).abs() <= half)
                .map(move |p| SectionPoint { view, u: p[a], v: p[b] })
        })
        .collect()
}

pub fn section_csv(points: &[SectionPoint]) -> String {
    let mut out = String::from("view,u,v\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.view, p.u, p.v);
    }
    out
}

/// All views mapped into the reference frame by their global motions.
pub fn fuse_views(views: &[Vec<Point3>], graph: &ViewGraph) -> Vec<Vec<Point3>> {
    views
        .iter()
        .zip(graph.global_motions())
        .map(|(pts, m)| m.transform_points(pts))
        .collect()
}

pub fn transform_path(dir: &Path, view: usize) -> PathBuf {
    dir.join(format!("view_{view:03}.txt"))
}

pub fn write_transforms(dir: &Path, graph: &ViewGraph) -> std::io::Result<Vec<PathBuf>> {
    graph
        .global_motions()
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let path = transform_path(dir, k);
            fs::write(&path, m.to_string())?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum TransformFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: GeometryError },
}

pub fn read_transform(path: &Path) -> Result<RigidMotion, TransformFileError> {
    let text = fs::read_to_string(path).map_err(|source| TransformFileError::Io {
        path: path.into(),
        source,
    })?;
    text.parse().map_err(|source| TransformFileError::Parse {
        path: path.into(),
        source,
    })
}

/// Deterministic summary of a multi-view run (no timing).
pub fn registration_report_text(report: &RegistrationReport) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    let mut out = String::new();
    let _ = writeln!(out, "views {}", report.graph.n_views());
    let _ = writeln!(out, "outer_iterations {}", report.error_history.len());
    let _ = writeln!(out, "objective {:e}", report.objective);
    let _ = writeln!(out, "error_history {}", join(&report.error_history));
    let _ = writeln!(out, "objective_history {}", join(&report.objective_history));
    let _ = writeln!(out, "overlap");
    for r in 0..report.overlap.nrows() {
        let row: Vec<String> = (0..report.overlap.ncols())
            .map(|c| format!("{:.6}", report.overlap[(r, c)]))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn retrieval_report_text(outcomes: &[RetrievalOutcome], names: &[String]) -> String {
    let mut out = String::from("model name clusters best_error verdict\n");
    for o in outcomes {
        let name = names.get(o.model).map_or("-", String::as_str);
        let mut fields = o.to_string();
        // splice the name after the model id
        if let Some(pos) = fields.find(' ') {
            fields.insert_str(pos, &format!(" {name}"));
        }
        let _ = writeln!(out, "{fields}");
    }
    out
}
