use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::trajectory::{
    summary_path, timing_path, write_timings, IterationTiming, TimedRun, Trajectory, TrajectoryHeader,
    TrajectoryRecord, TrajectoryWriter, THETA_SNAPSHOT_MAX_DIM,
};
use crate::autodiff::{evaluate, gradient, Batch, DifferentiableProblem, SecondOrderTape};
use crate::error::{Error, Result};
use crate::hutchinson::{estimate_with_operator, probe_rng, should_compute};
use crate::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use crate::param::ParamVector;
use crate::problems::minibatch;

/// Iterations excluded from timing statistics while caches warm up.
pub const TIMING_SKIP: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Finished, but the final loss is above the initial loss.
    Diverged,
    /// Stopped early on a non-finite value.
    NumericFailure,
}

/// Per-iteration wall time. Medians are taken separately over iterations
/// with and without a Hessian estimate and weighted by how often each kind
/// occurs, which keeps the statistic robust to scheduler noise while still
/// reflecting mixed schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Iterations that entered the statistics.
    pub measured: usize,
    pub typical_seconds: f64,
    pub mean_seconds: f64,
    pub reference_typical_seconds: Option<f64>,
    pub reference_mean_seconds: Option<f64>,
    /// `typical_seconds` relative to the SGD reference.
    pub cost_ratio: Option<f64>,
    /// `mean_seconds` relative to the SGD reference.
    pub cost_ratio_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub optimizer: String,
    pub iterations: u64,
    pub completed: u64,
    pub status: RunStatus,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_loss: f64,
    pub loss_threshold: f64,
    /// First iteration whose loss is at or below the threshold.
    pub iterations_to_threshold: Option<u64>,
    pub hessian_evaluations: u64,
    pub timing: Option<TimingSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        self.status != RunStatus::Completed
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Frequency-weighted median over the two iteration kinds, and the mean.
fn typical_and_mean(timings: &[IterationTiming], run: TimedRun) -> Option<(usize, f64, f64)> {
    let kept: Vec<&IterationTiming> = timings.iter().filter(|x| x.run == run && x.t > TIMING_SKIP).collect();
    if kept.is_empty() {
        return None;
    }
    let all: Vec<f64> = kept.iter().map(|x| x.seconds).collect();
    let weighted: f64 = [true, false]
        .iter()
        .map(|&h| {
            let xs: Vec<f64> = kept.iter().filter(|x| x.hessian == h).map(|x| x.seconds).collect();
            if xs.is_empty() {
                0.0
            } else {
                xs.len() as f64 * median(&xs)
            }
        })
        .sum();
    Some((all.len(), weighted / all.len() as f64, mean(&all)))
}

fn summarize_timing(timings: &[IterationTiming]) -> Option<TimingSummary> {
    let (measured, typical, mean) = typical_and_mean(timings, TimedRun::Main)?;
    let reference = typical_and_mean(timings, TimedRun::Reference);
    Some(TimingSummary {
        measured,
        typical_seconds: typical,
        mean_seconds: mean,
        reference_typical_seconds: reference.map(|r| r.1),
        reference_mean_seconds: reference.map(|r| r.2),
        cost_ratio: reference.map(|r| typical / r.1),
        cost_ratio_mean: reference.map(|r| mean / r.2),
    })
}

/// Summary derived from a trajectory and (optionally) its timings.
pub fn summarize(trajectory: &Trajectory, timings: &[IterationTiming]) -> RunSummary {
    let h = &trajectory.header;
    let records = &trajectory.records;
    let iterations = h.config.run.iterations;
    let threshold = h.config.run.loss_threshold;
    let final_loss = records.last().map_or(h.initial_loss, |r| r.loss);
    let status = if (records.len() as u64) < iterations {
        RunStatus::NumericFailure
    } else if final_loss > h.initial_loss {
        RunStatus::Diverged
    } else {
        RunStatus::Completed
    };
    RunSummary {
        problem: h.problem.clone(),
        optimizer: h.optimizer.clone(),
        iterations,
        completed: records.len() as u64,
        status,
        initial_loss: h.initial_loss,
        final_loss,
        best_loss: records.iter().map(|r| r.loss).fold(h.initial_loss, f64::min),
        loss_threshold: threshold,
        iterations_to_threshold: records.iter().find(|r| r.loss <= threshold).map(|r| r.t),
        hessian_evaluations: records.iter().filter(|r| r.hessian_computed).count() as u64,
        timing: summarize_timing(timings),
        error: None,
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub timings: Vec<IterationTiming>,
    pub summary: RunSummary,
    pub final_theta: ParamVector,
}

/// Seed of the Hutchinson probe stream.
fn probe_seed(run_seed: u64, hutchinson_seed: u64) -> u64 {
    run_seed ^ hutchinson_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One optimizer advancing through the iterations of a run.
struct Stepper<'a> {
    config: &'a RunConfig,
    problem: &'a dyn DifferentiableProblem,
    base_lr: f64,
    tag: TimedRun,
    opt: Box<dyn Optimizer>,
    theta: ParamVector,
    probe_seed: u64,
    records: Vec<TrajectoryRecord>,
    timings: Vec<IterationTiming>,
    error: Option<Error>,
}

impl<'a> Stepper<'a> {
    fn new(
        config: &'a RunConfig,
        problem: &'a dyn DifferentiableProblem,
        optimizer: &OptimizerConfig,
        tag: TimedRun,
    ) -> Result<Self> {
        let n = config.run.iterations as usize;
        Ok(Self {
            config,
            problem,
            base_lr: optimizer.lr,
            tag,
            opt: optimizer.build(problem.groups())?,
            theta: problem.initial_point(config.run.seed),
            probe_seed: probe_seed(config.run.seed, config.hutchinson.seed),
            records: Vec::with_capacity(n),
            timings: Vec::with_capacity(n),
            error: None,
        })
    }

    /// Iteration `t` on `batch`. Returns the new record, or `None` once a
    /// non-finite value has stopped this stepper.
    fn iterate(&mut self, t: u64, batch: &Batch) -> Result<Option<&TrajectoryRecord>> {
        if self.error.is_some() {
            return Ok(None);
        }
        let cfg = self.config;
        let problem = self.problem;
        let lr_scale = cfg.schedule.factor(t);
        let fresh = self.opt.uses_curvature() && should_compute(t, &cfg.hutchinson);

        let start = Instant::now();
        let step = (|| -> Result<ParamVector> {
            let (g, curvature) = if fresh {
                let mut tape = SecondOrderTape::record(problem, &self.theta, batch)?;
                let g = tape.gradient()?;
                let mut rng = probe_rng(self.probe_seed, t);
                let d = estimate_with_operator(&mut tape, cfg.hutchinson.samples, &mut rng)?;
                (g, Some(d))
            } else {
                (gradient(problem, &self.theta, batch)?, None)
            };
            self.opt.step(&mut self.theta, &g, curvature.as_ref(), lr_scale)?;
            Ok(g)
        })();
        let seconds = start.elapsed().as_secs_f64();

        let outcome = step.and_then(|g| Ok((g, evaluate(problem, &self.theta, &Batch::Full)?)));
        let (g, loss) = match outcome {
            Ok(v) => v,
            Err(e) if e.is_numeric() => {
                self.error = Some(e);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        self.timings.push(IterationTiming {
            run: self.tag,
            t,
            seconds,
            hessian: fresh,
        });
        self.records.push(TrajectoryRecord {
            t,
            loss,
            grad_norm: g.norm(),
            lr: self.base_lr * lr_scale,
            hessian_computed: fresh,
            theta: (problem.dim() <= THETA_SNAPSHOT_MAX_DIM).then(|| self.theta.as_slice().to_vec()),
        });
        Ok(self.records.last())
    }
}

fn batch_for(config: &RunConfig, problem: &dyn DifferentiableProblem, t: u64) -> Batch {
    match (config.run.batch_size, problem.num_samples()) {
        (Some(size), Some(n)) => minibatch(n, size, config.run.seed, t),
        _ => Batch::Full,
    }
}

fn run_inner<W: Write>(config: &RunConfig, mut writer: Option<&mut TrajectoryWriter<W>>) -> Result<RunOutput> {
    config.validate()?;
    let problem = config.problem.build()?;
    let problem = problem.as_ref();

    let mut main = Stepper::new(config, problem, &config.optimizer, TimedRun::Main)?;
    let initial_loss = evaluate(problem, &main.theta, &Batch::Full)?;
    let header = TrajectoryHeader::new(config, problem.dim(), initial_loss);
    if let Some(w) = writer.as_deref_mut() {
        w.header(&header)?;
    }
    // The SGD reference advances in lockstep with the main run so both see
    // the same machine conditions and the same minibatches.
    let mut reference = if config.run.timing_reference {
        let sgd = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: config.run.reference_lr,
            ..OptimizerConfig::default()
        };
        Some(Stepper::new(config, problem, &sgd, TimedRun::Reference)?)
    } else {
        None
    };

    for t in 1..=config.run.iterations {
        let batch = batch_for(config, problem, t);
        if let Some(r) = reference.as_mut() {
            r.iterate(t, &batch)?;
        }
        match main.iterate(t, &batch)? {
            Some(record) => {
                if let Some(w) = writer.as_deref_mut() {
                    w.record(record)?;
                }
            }
            None => break,
        }
    }

    let mut timings = reference.map(|r| r.timings).unwrap_or_default();
    timings.append(&mut main.timings);
    let trajectory = Trajectory {
        header,
        records: main.records,
    };
    let mut summary = summarize(&trajectory, &timings);
    summary.error = main.error.map(|e| e.to_string());
    Ok(RunOutput {
        trajectory,
        timings,
        summary,
        final_theta: main.theta,
    })
}

/// Runs `config` in memory.
///
/// Config problems are reported as `Err` before any optimizer work.
/// Non-finite values stop the run early with
/// [`RunStatus::NumericFailure`] and keep every completed record.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_inner::<Vec<u8>>(config, None)
}

/// Runs `config`, streaming the trajectory to `path`, then writes the
/// timing sidecar and the summary next to it.
pub fn run_to_path(config: &RunConfig, path: &Path) -> Result<RunOutput> {
    config.validate()?;
    let mut writer = TrajectoryWriter::create(path)?;
    let out = run_inner(config, Some(&mut writer))?;
    write_timings(&timing_path(path), &out.timings)?;
    let summary = serde_json::to_string_pretty(&out.summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(summary_path(path), summary + "\n")?;
    Ok(out)
}
