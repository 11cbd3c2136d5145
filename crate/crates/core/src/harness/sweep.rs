//! Grids of runs aggregated into one CSV table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, CONFIG_VERSION};
use super::run::{run, run_to_path, RunStatus, RunSummary};
use crate::error::{Error, Result};
use crate::optim::OptimizerKind;
use crate::problems::ProblemSpec;

/// A sweep file.
///
/// ```toml
/// version = 1
/// seeds = [0, 1, 2]
/// jobs = 4
///
/// [base.problem]
/// name = "logreg"
///
/// [base.run]
/// iterations = 200
///
/// [grid]
/// optimizers = ["adahessian", "adam"]
/// lr_multipliers = [0.5, 1, 2, 4, 10]
///
/// [base_lr]
/// adam = 0.01
///
/// [tune]
/// candidates = [0.001, 0.01, 0.1, 1.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub grid: SweepGrid,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Runs executed concurrently, one run per worker thread.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Base learning rate per optimizer name. Grid learning rates are these
    /// times `lr_multipliers`.
    #[serde(default)]
    pub base_lr: BTreeMap<String, f64>,
    /// Picks base learning rates not given in `base_lr`.
    #[serde(default)]
    pub tune: Option<TuneConfig>,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_jobs() -> usize {
    1
}

/// Axes of the grid. Empty axes take the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub optimizers: Vec<OptimizerKind>,
    pub lr_multipliers: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub frequencies: Vec<usize>,
}

/// Coarse learning-rate search: every candidate is run on the first seed
/// and the one with the lowest final loss among completed runs wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub candidates: Vec<f64>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            candidates: vec![1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0],
        }
    }
}

/// Names accepted by [`SweepConfig::preset`].
pub const PRESETS: [&str; 3] = ["lr-robustness", "block-size", "frequency"];

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!("unsupported sweep version {}", cfg.version)));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Built-in grids: learning-rate robustness on badly scaled logistic
    /// regression, block size and Hessian frequency on the tiny MLP.
    pub fn preset(name: &str) -> Result<Self> {
        let mut base = RunConfig::default();
        base.run.timing_reference = false;
        let mut cfg = SweepConfig {
            version: CONFIG_VERSION,
            base,
            grid: SweepGrid::default(),
            seeds: vec![0, 1, 2],
            jobs: 1,
            base_lr: BTreeMap::new(),
            tune: None,
        };
        match name {
            "lr-robustness" => {
                cfg.base.problem = ProblemSpec {
                    feature_scale: 100.0,
                    ..ProblemSpec::named("logreg")
                };
                cfg.base.run.iterations = 200;
                cfg.base.run.batch_size = Some(64);
                cfg.grid.optimizers = OptimizerKind::ALL.to_vec();
                cfg.grid.lr_multipliers = vec![0.5, 1.0, 2.0, 4.0, 10.0];
                cfg.tune = Some(TuneConfig::default());
            }
            "block-size" => {
                cfg.base.problem = ProblemSpec::named("tiny-mlp");
                cfg.base.run.iterations = 300;
                cfg.base.run.batch_size = Some(64);
                cfg.grid.block_sizes = vec![1, 2, 4, 8];
            }
            "frequency" => {
                cfg.base.problem = ProblemSpec::named("tiny-mlp");
                cfg.base.run.iterations = 300;
                cfg.base.run.batch_size = Some(64);
                cfg.base.run.timing_reference = true;
                cfg.grid.frequencies = vec![1, 2, 3, 4, 5];
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        for (name, lr) in &self.base_lr {
            name.parse::<OptimizerKind>()?;
            if !(*lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("base lr for {name} must be > 0")));
            }
        }
        if self.grid.lr_multipliers.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::Config("lr multipliers must be > 0".into()));
        }
        if let Some(t) = &self.tune {
            if t.candidates.is_empty() || t.candidates.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return Err(Error::Config("tune candidates must be non-empty and > 0".into()));
            }
        }
        self.base.validate()
    }

    fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
        if values.is_empty() {
            vec![fallback]
        } else {
            values.to_vec()
        }
    }

    fn cells(&self, base_lrs: &BTreeMap<OptimizerKind, f64>) -> Vec<Cell> {
        let b = &self.base;
        let mut out = Vec::new();
        for kind in Self::axis(&self.grid.optimizers, b.optimizer.kind) {
            for mult in Self::axis(&self.grid.lr_multipliers, 1.0) {
                for block_size in Self::axis(&self.grid.block_sizes, b.optimizer.block_size) {
                    for frequency in Self::axis(&self.grid.frequencies, b.hutchinson.frequency) {
                        out.push(Cell {
                            optimizer: kind,
                            lr: base_lrs[&kind] * mult,
                            lr_multiplier: mult,
                            block_size,
                            frequency,
                        });
                    }
                }
            }
        }
        out
    }

    fn cell_config(&self, cell: &Cell, seed: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.optimizer.kind = cell.optimizer;
        cfg.optimizer.lr = cell.lr;
        cfg.optimizer.block_size = cell.block_size;
        cfg.hutchinson.frequency = cell.frequency;
        cfg.run.seed = seed;
        cfg.run.out = None;
        cfg
    }
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_multiplier: f64,
    pub block_size: usize,
    pub frequency: usize,
}

impl Cell {
    fn file_stem(&self) -> String {
        format!(
            "{}-lr{}-b{}-f{}",
            self.optimizer.name(),
            self.lr,
            self.block_size,
            self.frequency
        )
    }
}

/// Mean and sample standard deviation; `None` for no values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub runs: usize,
    pub completed: usize,
    /// Runs that finished above their initial loss or hit a non-finite value.
    pub diverged: usize,
    /// Runs that could not execute at all.
    pub failed: usize,
    /// Final loss over runs without a non-finite value.
    pub final_loss: Option<Stat>,
    /// Worst final loss over all runs; infinite when any run blew up.
    pub worst_final_loss: f64,
    pub iterations_to_threshold: Option<Stat>,
    pub cost_ratio: Option<Stat>,
    pub errors: Vec<String>,
}

impl CellResult {
    fn aggregate(cell: Cell, runs: Vec<Result<RunSummary>>) -> Self {
        let mut errors = Vec::new();
        let mut summaries = Vec::new();
        for r in runs.iter() {
            match r {
                Ok(s) => {
                    if let Some(e) = &s.error {
                        errors.push(e.clone());
                    }
                    summaries.push(s);
                }
                Err(e) => errors.push(e.to_string()),
            }
        }
        let finite: Vec<f64> = summaries
            .iter()
            .filter(|s| s.status != RunStatus::NumericFailure)
            .map(|s| s.final_loss)
            .collect();
        let worst_final_loss = if summaries.len() < runs.len() || finite.len() < summaries.len() {
            f64::INFINITY
        } else {
            finite.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        let hit: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.iterations_to_threshold.map(|t| t as f64))
            .collect();
        let ratios: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.timing.as_ref().and_then(|t| t.cost_ratio))
            .collect();
        CellResult {
            cell,
            runs: runs.len(),
            completed: summaries.iter().filter(|s| s.status == RunStatus::Completed).count(),
            diverged: summaries.iter().filter(|s| s.diverged()).count(),
            failed: runs.len() - summaries.len(),
            final_loss: Stat::of(&finite),
            worst_final_loss,
            iterations_to_threshold: Stat::of(&hit),
            cost_ratio: Stat::of(&ratios),
            errors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub problem: String,
    pub base_lr: BTreeMap<String, f64>,
    pub cells: Vec<CellResult>,
}

fn fmt_stat(s: Option<Stat>) -> (String, String) {
    match s {
        Some(s) => (format!("{}", s.mean), format!("{}", s.std)),
        None => (String::new(), String::new()),
    }
}

impl SweepReport {
    pub const CSV_HEADER: &'static str = "optimizer,lr,lr_multiplier,block_size,frequency,runs,completed,diverged,failed,\
final_loss_mean,final_loss_std,worst_final_loss,iters_to_threshold_mean,iters_to_threshold_std,cost_ratio_mean,cost_ratio_std";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.cells {
            let c = &r.cell;
            let (fm, fs) = fmt_stat(r.final_loss);
            let (im, is) = fmt_stat(r.iterations_to_threshold);
            let (cm, cs) = fmt_stat(r.cost_ratio);
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{fm},{fs},{},{im},{is},{cm},{cs}",
                c.optimizer.name(),
                c.lr,
                c.lr_multiplier,
                c.block_size,
                c.frequency,
                r.runs,
                r.completed,
                r.diverged,
                r.failed,
                r.worst_final_loss,
            )
            .expect("write to string");
        }
        out
    }

    pub fn cells_for(&self, kind: OptimizerKind) -> impl Iterator<Item = &CellResult> {
        self.cells.iter().filter(move |c| c.cell.optimizer == kind)
    }
}

/// Runs `jobs` in parallel worker threads and returns results in input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Picks the base learning rate for `kind` from `candidates`.
pub fn tune_lr(base: &RunConfig, kind: OptimizerKind, seed: u64, candidates: &[f64], jobs: usize) -> Result<f64> {
    let configs: Vec<RunConfig> = candidates
        .iter()
        .map(|&lr| {
            let mut cfg = base.clone();
            cfg.optimizer.kind = kind;
            cfg.optimizer.lr = lr;
            cfg.run.seed = seed;
            cfg.run.timing_reference = false;
            cfg
        })
        .collect();
    let results = parallel_map(&configs, jobs, |cfg| run(cfg).map(|o| o.summary));
    let mut best: Option<(f64, f64)> = None;
    for (lr, r) in candidates.iter().zip(results) {
        let s = r?;
        if s.status == RunStatus::Completed && best.is_none_or(|(_, l)| s.final_loss < l) {
            best = Some((*lr, s.final_loss));
        }
    }
    best.map(|(lr, _)| lr)
        .ok_or_else(|| Error::Config(format!("no candidate learning rate converged for {}", kind.name())))
}

/// Executes every cell for every seed. Failing runs are recorded in their
/// cell and the sweep continues. With `trajectories`, each run also writes
/// its trajectory into that directory.
pub fn run_sweep(cfg: &SweepConfig, trajectories: Option<&Path>) -> Result<SweepReport> {
    cfg.validate()?;
    let kinds = SweepConfig::axis(&cfg.grid.optimizers, cfg.base.optimizer.kind);
    let mut base_lrs = BTreeMap::new();
    for kind in kinds {
        let lr = match (cfg.base_lr.get(kind.name()), &cfg.tune) {
            (Some(lr), _) => *lr,
            (None, Some(t)) => tune_lr(&cfg.base, kind, cfg.seeds[0], &t.candidates, cfg.jobs)?,
            (None, None) => cfg.base.optimizer.lr,
        };
        base_lrs.insert(kind, lr);
    }

    let cells = cfg.cells(&base_lrs);
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results = parallel_map(&tasks, cfg.jobs, |&(c, seed)| {
        let run_cfg = cfg.cell_config(&cells[c], seed);
        match trajectories {
            Some(dir) => {
                let path: PathBuf = dir.join(format!("{}-s{seed}.jsonl", cells[c].file_stem()));
                run_to_path(&run_cfg, &path)
            }
            None => run(&run_cfg),
        }
        .map(|o| o.summary)
    });

    let mut per_cell: Vec<Vec<Result<RunSummary>>> = cells.iter().map(|_| Vec::new()).collect();
    for ((c, _), r) in tasks.iter().zip(results) {
        per_cell[*c].push(r);
    }
    Ok(SweepReport {
        problem: cfg.base.problem.name.clone(),
        base_lr: base_lrs.iter().map(|(k, v)| (k.name().to_string(), *v)).collect(),
        cells: cells
            .into_iter()
            .zip(per_cell)
            .map(|(cell, runs)| CellResult::aggregate(cell, runs))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        let mut cfg = SweepConfig::preset("block-size").unwrap();
        cfg.base.problem = ProblemSpec::named("quadratic-2x2");
        cfg.base.run.iterations = 20;
        cfg.base.run.batch_size = None;
        cfg.seeds = vec![0, 1];
        cfg.grid.block_sizes.clear();
        cfg
    }

    #[test]
    fn presets_parse_and_validate() {
        for p in PRESETS {
            let cfg = SweepConfig::preset(p).unwrap();
            cfg.validate().unwrap();
            let text = toml::to_string(&cfg).unwrap();
            assert_eq!(SweepConfig::from_toml(&text).unwrap(), cfg);
        }
        assert!(SweepConfig::preset("imagenet").is_err());
    }

    #[test]
    fn grid_expands_in_order() {
        let mut cfg = small();
        cfg.grid.optimizers = vec![OptimizerKind::AdaHessian, OptimizerKind::Adam];
        cfg.grid.lr_multipliers = vec![1.0, 2.0];
        cfg.grid.block_sizes = vec![1, 2];
        cfg.base_lr.insert("adam".into(), 0.01);
        let report = run_sweep(&cfg, None).unwrap();
        assert_eq!(report.cells.len(), 8);
        assert_eq!(report.cells[3].cell.optimizer, OptimizerKind::AdaHessian);
        assert_eq!(report.cells[3].cell.lr, 0.3);
        assert_eq!(report.cells[7].cell.lr, 0.02);
        assert!(report.cells.iter().all(|c| c.runs == 2 && c.failed == 0));
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("adahessian,0.15,1,1,1,2,2,0,0,"));
    }

    #[test]
    fn parallel_matches_serial() {
        let mut cfg = small();
        let serial = run_sweep(&cfg, None).unwrap();
        cfg.jobs = 3;
        assert_eq!(run_sweep(&cfg, None).unwrap(), serial);
    }

    #[test]
    fn blow_ups_are_counted_not_fatal() {
        let mut cfg = small();
        cfg.base.problem = ProblemSpec::named("diagonal-quadratic");
        cfg.base.run.iterations = 400;
        cfg.grid.optimizers = vec![OptimizerKind::Sgd];
        cfg.grid.lr_multipliers = vec![1.0, 1000.0];
        cfg.base_lr.insert("sgd".into(), 0.05);
        let report = run_sweep(&cfg, None).unwrap();
        assert_eq!(report.cells[0].diverged, 0);
        assert_eq!(report.cells[1].diverged, 2);
        assert!(report.cells[1].worst_final_loss.is_infinite());
        assert_eq!(report.cells[1].errors.len(), 2);
    }

    #[test]
    fn tuning_picks_a_converging_rate() {
        let mut base = RunConfig::for_problem("diagonal-quadratic");
        base.optimizer.beta1 = 0.0;
        base.run.iterations = 30;
        let lr = tune_lr(&base, OptimizerKind::Sgd, 0, &[0.001, 0.05, 0.5], 1).unwrap();
        assert_eq!(lr, 0.05);
    }

    #[test]
    fn stat_uses_sample_std() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 2f64.sqrt()));
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stat::of(&[]).is_none());
    }
}
