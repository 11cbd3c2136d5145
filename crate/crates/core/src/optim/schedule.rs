use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier applied to the base learning rate at iteration `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Multiplies by `factor` once for every milestone `m <= t`.
    StepDecay { milestones: Vec<u64>, factor: f64 },
    /// `t / warmup_steps` during warmup, then `sqrt(warmup_steps / t)`.
    LinearWarmupThenDecay { warmup_steps: u64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            LrSchedule::Constant => Ok(()),
            LrSchedule::StepDecay { milestones, factor } => {
                if !(*factor > 0.0 && *factor <= 1.0) {
                    return Err(Error::Config(format!(
                        "step_decay factor must be in (0, 1], got {factor}"
                    )));
                }
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(
                        "step_decay milestones must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            LrSchedule::LinearWarmupThenDecay { warmup_steps } => {
                if *warmup_steps == 0 {
                    Err(Error::Config("warmup_steps must be >= 1".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn factor(&self, t: u64) -> f64 {
        assert!(t >= 1, "iterations are 1-based");
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::StepDecay { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| m <= t).count();
                factor.powi(passed as i32)
            }
            LrSchedule::LinearWarmupThenDecay { warmup_steps } => {
                let w = *warmup_steps as f64;
                let t = t as f64;
                if t < w {
                    t / w
                } else {
                    (w / t).sqrt()
                }
            }
        }
    }
}
