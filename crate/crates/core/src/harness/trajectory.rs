//! Trajectory files: one JSON header line followed by one record per
//! iteration. Wall-clock timings live in a sidecar file next to the
//! trajectory so the trajectory itself is a pure function of the config.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

pub const TRAJECTORY_SCHEMA: &str = "adahessian-trajectory";
pub const TRAJECTORY_VERSION: u32 = 1;

/// Parameters are stored in records only up to this dimension.
pub const THETA_SNAPSHOT_MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema: String,
    pub version: u32,
    pub problem: String,
    pub optimizer: String,
    pub dim: usize,
    /// Full-data loss at the initial point.
    pub initial_loss: f64,
    pub config: RunConfig,
}

impl TrajectoryHeader {
    pub fn new(config: &RunConfig, dim: usize, initial_loss: f64) -> Self {
        Self {
            schema: TRAJECTORY_SCHEMA.into(),
            version: TRAJECTORY_VERSION,
            problem: config.problem.name.clone(),
            optimizer: config.optimizer.kind.name().into(),
            dim,
            initial_loss,
            config: config.clone(),
        }
    }
}

/// State after iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: u64,
    /// Full-data loss at the updated parameters.
    pub loss: f64,
    /// Norm of the (minibatch) gradient used for the step.
    pub grad_norm: f64,
    /// Effective learning rate.
    pub lr: f64,
    pub hessian_computed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
}

/// Which run a timing line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimedRun {
    Main,
    Reference,
}

/// Wall-clock seconds spent in iteration `t` (gradient, curvature and
/// update; loss logging excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTiming {
    pub run: TimedRun,
    pub t: u64,
    pub seconds: f64,
    /// Whether the iteration computed a Hessian estimate.
    pub hessian: bool,
}

/// Path of the timing sidecar belonging to a trajectory file.
pub fn timing_path(trajectory: &Path) -> PathBuf {
    let mut name = trajectory.file_name().unwrap_or_default().to_os_string();
    name.push(".timing");
    trajectory.with_file_name(name)
}

/// Path of the summary file belonging to a trajectory file.
pub fn summary_path(trajectory: &Path) -> PathBuf {
    trajectory.with_extension("summary.json")
}

/// Append-only JSONL writer. Each line is flushed as soon as it is
/// written so a crash leaves every completed iteration on disk.
pub struct TrajectoryWriter<W: Write> {
    out: W,
    last_t: u64,
}

impl TrajectoryWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, last_t: 0 }
    }

    pub fn header(&mut self, header: &TrajectoryHeader) -> Result<()> {
        self.line(header)
    }

    pub fn record(&mut self, record: &TrajectoryRecord) -> Result<()> {
        if record.t <= self.last_t {
            return Err(Error::InvalidArgument(format!(
                "record t={} after t={}",
                record.t, self.last_t
            )));
        }
        self.last_t = record.t;
        self.line(record)
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let s = serde_json::to_string(value).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(self.out, "{s}")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub fn write_timings(path: &Path, timings: &[IterationTiming]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in timings {
        let s = serde_json::to_string(t).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(out, "{s}")?;
    }
    out.flush()?;
    Ok(())
}

/// A parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, e: serde_json::Error| Error::Config(format!("trajectory line {line}: {e}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::Config("empty trajectory file".into()))?;
        let header: TrajectoryHeader = serde_json::from_str(first).map_err(|e| bad(1, e))?;
        if header.schema != TRAJECTORY_SCHEMA || header.version != TRAJECTORY_VERSION {
            return Err(Error::Config(format!(
                "unsupported trajectory schema {} v{}",
                header.schema, header.version
            )));
        }
        let mut records: Vec<TrajectoryRecord> = Vec::new();
        for (i, l) in lines {
            let r: TrajectoryRecord = serde_json::from_str(l).map_err(|e| bad(i + 1, e))?;
            if records.last().is_some_and(|p| p.t >= r.t) {
                return Err(Error::Config(format!("trajectory line {}: t not increasing", i + 1)));
            }
            records.push(r);
        }
        Ok(Self { header, records })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

pub fn read_timings(path: &Path) -> Result<Vec<IterationTiming>> {
    let file = File::open(path)?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| Error::Config(format!("bad timing line: {e}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: u64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            loss: 0.5 / t as f64,
            grad_norm: 1.0,
            lr: 0.1,
            hessian_computed: t % 2 == 1,
            theta: (t == 1).then(|| vec![1.0, -2.5]),
        }
    }

    #[test]
    fn write_then_parse() {
        let cfg = RunConfig::default();
        let mut w = TrajectoryWriter::new(Vec::new());
        w.header(&TrajectoryHeader::new(&cfg, 2, 11.0)).unwrap();
        for t in 1..=3 {
            w.record(&record(t)).unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(!text.lines().nth(2).unwrap().contains("theta"));
        let traj = Trajectory::parse(&text).unwrap();
        assert_eq!(traj.header.config, cfg);
        assert_eq!(traj.records, (1..=3).map(record).collect::<Vec<_>>());
    }

    #[test]
    fn t_must_increase() {
        let mut w = TrajectoryWriter::new(Vec::new());
        w.record(&record(2)).unwrap();
        assert!(w.record(&record(2)).is_err());

        let cfg = RunConfig::default();
        let header = serde_json::to_string(&TrajectoryHeader::new(&cfg, 2, 1.0)).unwrap();
        let r = serde_json::to_string(&record(1)).unwrap();
        assert!(Trajectory::parse(&format!("{header}\n{r}\n{r}\n")).is_err());
    }

    #[test]
    fn sidecar_names() {
        let p = Path::new("out/run.jsonl");
        assert_eq!(timing_path(p), Path::new("out/run.jsonl.timing"));
        assert_eq!(summary_path(p), Path::new("out/run.summary.json"));
    }
}
