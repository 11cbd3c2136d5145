use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hutchinson::HutchinsonConfig;
use crate::optim::{LrSchedule, OptimizerConfig, OptimizerKind};
use crate::problems::ProblemSpec;

/// Version accepted in the `version` key of run and sweep files.
pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ADAHESSIAN_OUT_DIR";

/// Everything needed to reproduce one optimizer run.
///
/// ```toml
/// version = 1
///
/// [problem]
/// name = "logreg"
/// samples = 512
///
/// [optimizer]
/// kind = "adahessian"
/// lr = 0.15
/// k = 1.0
///
/// [hutchinson]
/// frequency = 2
///
/// [schedule]
/// kind = "step_decay"
/// milestones = [100]
/// factor = 0.1
///
/// [run]
/// iterations = 200
/// seed = 3
/// batch_size = 64
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub hutchinson: HutchinsonConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub run: RunSettings,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub iterations: u64,
    /// Drives the initial point, minibatch order and Hutchinson probes.
    pub seed: u64,
    /// Minibatch size; full batch when absent or for problems without data.
    pub batch_size: Option<usize>,
    /// Loss level used for iterations-to-threshold.
    pub loss_threshold: f64,
    /// Also time an SGD run of the same problem and report the cost ratio.
    pub timing_reference: bool,
    /// Learning rate of the SGD timing reference.
    pub reference_lr: f64,
    /// Trajectory path. Relative paths and the default name resolve against
    /// the output directory.
    pub out: Option<PathBuf>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            iterations: 100,
            seed: 0,
            batch_size: None,
            loss_threshold: 1e-6,
            timing_reference: true,
            reference_lr: 1e-3,
            out: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            problem: ProblemSpec::default(),
            optimizer: OptimizerConfig::default(),
            hutchinson: HutchinsonConfig::default(),
            schedule: LrSchedule::default(),
            run: RunSettings::default(),
        }
    }
}

impl RunConfig {
    /// Default settings on the registered problem `name`.
    pub fn for_problem(name: &str) -> Self {
        Self {
            problem: ProblemSpec::named(name),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_version()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    fn check_version(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        Ok(())
    }

    /// Checks every field and that the problem can be built. Runs before
    /// any optimizer work.
    pub fn validate(&self) -> Result<()> {
        self.check_version()?;
        let problem = self.problem.build()?;
        self.optimizer.build(problem.groups())?;
        self.hutchinson.validate()?;
        self.schedule.validate()?;
        let run = &self.run;
        if run.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if run.batch_size == Some(0) {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(run.loss_threshold.is_finite()) {
            return Err(Error::Config("loss threshold must be finite".into()));
        }
        if !(run.reference_lr > 0.0 && run.reference_lr.is_finite()) {
            return Err(Error::Config("reference lr must be > 0".into()));
        }
        Ok(())
    }

    /// Default trajectory file name, unique per problem, optimizer and seed.
    pub fn default_file_name(&self) -> String {
        format!(
            "{}-{}-s{}.jsonl",
            self.problem.name,
            self.optimizer.kind.name(),
            self.run.seed
        )
    }

    /// Trajectory path after applying the output directory.
    pub fn resolve_out(&self, out_dir: &Path) -> PathBuf {
        match &self.run.out {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => out_dir.join(p),
            None => out_dir.join(self.default_file_name()),
        }
    }
}

/// Output directory from [`OUT_DIR_ENV`], falling back to `runs`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub problem: Option<String>,
    pub optimizer: Option<OptimizerKind>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub k: Option<f64>,
    pub block_size: Option<usize>,
    pub eps: Option<f64>,
    pub weight_decay: Option<f64>,
    pub hessian_freq: Option<usize>,
    pub warmup: Option<u64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub iters: Option<u64>,
    pub batch_size: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(name) = &self.problem {
            cfg.problem.name = name.clone();
        }
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = self.$src.clone() {
                    cfg.$($dst)+ = v;
                }
            };
        }
        set!(optimizer => optimizer.kind);
        set!(lr => optimizer.lr);
        set!(beta1 => optimizer.beta1);
        set!(beta2 => optimizer.beta2);
        set!(k => optimizer.k);
        set!(block_size => optimizer.block_size);
        set!(eps => optimizer.eps);
        set!(weight_decay => optimizer.weight_decay);
        set!(hessian_freq => hutchinson.frequency);
        set!(warmup => hutchinson.warmup_steps);
        set!(samples => hutchinson.samples);
        set!(seed => run.seed);
        set!(iters => run.iterations);
        if self.batch_size.is_some() {
            cfg.run.batch_size = self.batch_size;
        }
        if self.out.is_some() {
            cfg.run.out = self.out.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::for_problem("logreg");
        cfg.schedule = LrSchedule::StepDecay {
            milestones: vec![10, 20],
            factor: 0.5,
        };
        cfg.run.batch_size = Some(32);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(matches!(RunConfig::from_toml("lr = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("version = 2"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[optimizer]\nmomentum = 0.9").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.problem.name = "nope".into();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.run.iterations = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.hutchinson.frequency = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.optimizer.lr = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::from_toml("[optimizer]\nlr = 0.5\n[run]\nseed = 1").unwrap();
        Overrides {
            lr: Some(2.0),
            hessian_freq: Some(3),
            optimizer: Some(OptimizerKind::Adam),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.optimizer.lr, 2.0);
        assert_eq!(cfg.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(cfg.hutchinson.frequency, 3);
        assert_eq!(cfg.run.seed, 1);
    }

    #[test]
    fn output_paths() {
        let mut cfg = RunConfig::default();
        let dir = Path::new("/tmp/x");
        assert_eq!(cfg.resolve_out(dir), dir.join("diagonal-quadratic-adahessian-s0.jsonl"));
        cfg.run.out = Some("a/b.jsonl".into());
        assert_eq!(cfg.resolve_out(dir), dir.join("a/b.jsonl"));
    }
}
