//! Benchmark harness for the harvester planning library.
//!
//! The `harvest` binary wraps the library pipeline in four subcommands:
//!
//! - `generate` draws a reproducible uniform fruit map to disk,
//! - `plan` runs one map end to end (sequence → schedule → trajectories)
//!   and validates the result with the independent checkers,
//! - `sweep` plans every point of a replicated benchmark grid and writes
//!   per-replication metrics plus aggregate throughput statistics,
//! - `plot` renders a metrics file as a self-contained SVG figure.
//!
//! Everything the binary does is reachable through this library, so the
//! same sweeps and figures can be driven from tests or other tools.

pub mod commands;
pub mod plot;
pub mod sweep;

pub use commands::{run, Cli, CliError, ExitClass};
