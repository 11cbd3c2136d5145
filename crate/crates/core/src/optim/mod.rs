//! AdaHessian, first-order baselines and learning-rate schedules behind a
//! single [`Optimizer`] interface.

mod adahessian;
mod baselines;
mod schedule;
mod spatial;

pub use adahessian::{hessian_momentum_update, AdaHessian, AdaHessianHyper, AdaHessianState, MomentumRule};
pub use baselines::{BaselineHyper, BaselineKind, BaselineState};
pub use schedule::LrSchedule;
pub use spatial::spatial_average;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param::{BlockSpec, ParamVector};

/// Current version of the optimizer snapshot JSON layout.
pub const SNAPSHOT_VERSION: u32 = 1;

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Whether [`Optimizer::step`] consumes a Hessian diagonal estimate.
    fn uses_curvature(&self) -> bool {
        false
    }

    /// Number of completed steps.
    fn iteration(&self) -> u64;

    /// Updates `theta` in place. `curvature` is a fresh Hessian diagonal
    /// estimate or `None` when none was computed this iteration.
    fn step(
        &mut self,
        theta: &mut ParamVector,
        grad: &ParamVector,
        curvature: Option<&ParamVector>,
        lr_scale: f64,
    ) -> Result<()>;

    fn snapshot(&self) -> OptimizerSnapshot;
}

/// Serializable optimizer state.
///
/// JSON layout (`version` is [`SNAPSHOT_VERSION`]):
///
/// ```text
/// {"version":1,"optimizer":"adahessian","state":{"t":..,"m":[..],"v_raw":[..],
///   "last_ds":[..]|null,"hyper":{..}},"groups":[..],"block_size":b}
/// {"version":1,"optimizer":"baseline","kind":"adam"|..,"hyper":{..},"t":..,"m":[..],"v":[..]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "optimizer", rename_all = "snake_case")]
pub enum OptimizerSnapshot {
    #[serde(rename = "adahessian")]
    AdaHessian {
        state: AdaHessianState,
        groups: Vec<usize>,
        block_size: usize,
    },
    Baseline(BaselineState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VersionedSnapshot {
    version: u32,
    #[serde(flatten)]
    snapshot: OptimizerSnapshot,
}

impl OptimizerSnapshot {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&VersionedSnapshot {
            version: SNAPSHOT_VERSION,
            snapshot: self.clone(),
        })
        .expect("snapshot serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: VersionedSnapshot = serde_json::from_str(s).map_err(|e| Error::Config(format!("bad snapshot: {e}")))?;
        if v.version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!("unsupported snapshot version {}", v.version)));
        }
        Ok(v.snapshot)
    }

    /// Rebuilds an optimizer that continues from this state.
    pub fn restore(self) -> Result<Box<dyn Optimizer>> {
        match self {
            OptimizerSnapshot::AdaHessian {
                state,
                groups,
                block_size,
            } => Ok(Box::new(AdaHessian::from_state(
                state,
                BlockSpec::new(groups, block_size)?,
            )?)),
            OptimizerSnapshot::Baseline(state) => Ok(Box::new(state)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    AdaHessian,
    Sgd,
    Adagrad,
    Adam,
    AdamW,
    RmsProp,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::AdaHessian,
        OptimizerKind::Sgd,
        OptimizerKind::Adagrad,
        OptimizerKind::Adam,
        OptimizerKind::AdamW,
        OptimizerKind::RmsProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::AdaHessian => "adahessian",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::RmsProp => "rmsprop",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            OptimizerKind::AdaHessian => None,
            OptimizerKind::Sgd => Some(BaselineKind::Sgd),
            OptimizerKind::Adagrad => Some(BaselineKind::Adagrad),
            OptimizerKind::Adam => Some(BaselineKind::Adam),
            OptimizerKind::AdamW => Some(BaselineKind::AdamW),
            OptimizerKind::RmsProp => Some(BaselineKind::RmsProp),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown optimizer `{s}`")))
    }
}

/// Hyperparameters shared by every optimizer kind; fields a kind does not
/// use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Hessian power (AdaHessian only).
    pub k: f64,
    /// Spatial averaging block size (AdaHessian only).
    pub block_size: usize,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdaHessian,
            lr: 0.15,
            beta1: 0.9,
            beta2: 0.999,
            k: 1.0,
            block_size: 1,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn adahessian_hyper(&self) -> AdaHessianHyper {
        AdaHessianHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            hessian_power: self.k,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn build(&self, groups: Vec<usize>) -> Result<Box<dyn Optimizer>> {
        let d = groups.iter().sum();
        match self.kind.baseline() {
            None => Ok(Box::new(AdaHessian::new(
                self.adahessian_hyper(),
                BlockSpec::new(groups, self.block_size)?,
            )?)),
            Some(kind) => Ok(Box::new(BaselineState::new(
                kind,
                d,
                BaselineHyper {
                    lr: self.lr,
                    beta1: self.beta1,
                    beta2: self.beta2,
                    eps: self.eps,
                    weight_decay: self.weight_decay,
                },
            )?)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.build(vec![1]).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parses() {
        assert_eq!("AdamW".parse::<OptimizerKind>().unwrap(), OptimizerKind::AdamW);
        assert!("lbfgs".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn snapshot_resume_continues_identically() {
        let cfg = OptimizerConfig {
            block_size: 2,
            ..Default::default()
        };
        let mut a = cfg.build(vec![3, 1]).unwrap();
        let mut theta = ParamVector::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let g = ParamVector::new(vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        let d = ParamVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        a.step(&mut theta, &g, Some(&d), 1.0).unwrap();

        let json = a.snapshot().to_json();
        assert!(json.contains("\"version\":1"));
        let mut b = OptimizerSnapshot::from_json(&json).unwrap().restore().unwrap();
        let mut ta = theta.clone();
        let mut tb = theta;
        a.step(&mut ta, &g, None, 1.0).unwrap();
        b.step(&mut tb, &g, None, 1.0).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(b.iteration(), 2);
    }

    #[test]
    fn baseline_snapshot_round_trip() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::RmsProp,
            ..Default::default()
        };
        let opt = cfg.build(vec![2]).unwrap();
        let snap = opt.snapshot();
        assert_eq!(OptimizerSnapshot::from_json(&snap.to_json()).unwrap(), snap);
    }

    #[test]
    fn snapshot_version_checked() {
        assert!(OptimizerSnapshot::from_json(r#"{"version":99,"optimizer":"baseline"}"#).is_err());
    }
}
