//! Summaries recomputed from files written by a run.

use std::path::Path;

use super::run::{summarize, RunSummary};
use super::trajectory::{read_timings, timing_path, Trajectory};
use crate::error::Result;

/// Loads a trajectory and, when present, its timing sidecar, and summarizes them.
pub fn report(trajectory: &Path) -> Result<RunSummary> {
    let traj = Trajectory::load(trajectory)?;
    let sidecar = timing_path(trajectory);
    let timings = if sidecar.exists() {
        read_timings(&sidecar)?
    } else {
        Vec::new()
    };
    Ok(summarize(&traj, &timings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_to_path, RunConfig};

    #[test]
    fn report_matches_run_summary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut cfg = RunConfig::default();
        cfg.run.iterations = 15;
        let out = run_to_path(&cfg, &path).unwrap();
        let summary = report(&path).unwrap();
        assert_eq!(summary, out.summary);

        std::fs::remove_file(timing_path(&path)).unwrap();
        let bare = report(&path).unwrap();
        assert_eq!(bare.final_loss, out.summary.final_loss);
        assert!(bare.timing.is_none());
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(report(Path::new("/nonexistent/run.jsonl")).is_err());
    }
}
