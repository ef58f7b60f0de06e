//! File formats, run configuration, benchmark harness and report writers.

pub mod bench;
pub mod config;
pub mod ply;
pub mod report;

pub use bench::{run_benchmark, BenchRow, BenchSpec, BenchTable, Strategy};
pub use config::{ConfigError, RunConfig, CONFIG_KEYS};
pub use ply::{encode_ply, parse_ply, read_ply, write_ply, PlyDocument, PlyError, PlyFormat, Precision};
pub use report::{cross_section, section_csv, Axis, SectionPoint};
