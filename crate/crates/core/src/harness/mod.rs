//! Experiment harness: run configs, trajectories, sweeps, the verification
//! suite and summaries.

pub mod config;
pub mod report;
pub mod run;
pub mod sweep;
pub mod trajectory;
pub mod verify;

pub use config::{default_out_dir, Overrides, RunConfig, RunSettings, CONFIG_VERSION, OUT_DIR_ENV};
pub use report::report;
pub use run::{run, run_to_path, summarize, RunOutput, RunStatus, RunSummary, TimingSummary};
pub use sweep::{run_sweep, tune_lr, Cell, CellResult, Stat, SweepConfig, SweepGrid, SweepReport, TuneConfig, PRESETS};
pub use trajectory::{IterationTiming, TimedRun, Trajectory, TrajectoryHeader, TrajectoryRecord};
pub use verify::{run_property, verify, verify_with, PropertyResult, VerifyOptions, VerifyReport};
