use serde::{Deserialize, Serialize};

use super::spatial::spatial_average;
use super::{Optimizer, OptimizerSnapshot};
use crate::error::{Error, Result};
use crate::param::{BlockSpec, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaHessianHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Hessian power `k` in `[0, 1]`.
    pub hessian_power: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdaHessianHyper {
    fn default() -> Self {
        Self {
            lr: 0.15,
            beta1: 0.9,
            beta2: 0.999,
            hessian_power: 1.0,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdaHessianHyper {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(self.beta1 == 0.0 || open_unit(self.beta1)) {
            return Err(Error::Config(format!("beta1 must be in [0, 1), got {}", self.beta1)));
        }
        // beta2 = 0 keeps only the current diagonal, with no curvature EMA.
        if !(self.beta2 == 0.0 || open_unit(self.beta2)) {
            return Err(Error::Config(format!("beta2 must be in [0, 1), got {}", self.beta2)));
        }
        if !(0.0..=1.0).contains(&self.hessian_power) {
            return Err(Error::Config(format!(
                "hessian power must be in [0, 1], got {}",
                self.hessian_power
            )));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Signature of [`hessian_momentum_update`], accepted by
/// [`AdaHessianState::step_with`] so alternative rules can be plugged in.
pub type MomentumRule = fn(&mut [f64], &[f64], f64, u64) -> Vec<f64>;

/// Advances the squared-curvature EMA and returns the bias-corrected root
/// mean square `sqrt(v / (1 - beta2^t))`. `t` is the 1-based iteration of
/// this update.
pub fn hessian_momentum_update(v_raw: &mut [f64], ds: &[f64], beta2: f64, t: u64) -> Vec<f64> {
    debug_assert_eq!(v_raw.len(), ds.len());
    let correction = 1.0 - beta2.powi(t as i32);
    v_raw
        .iter_mut()
        .zip(ds)
        .map(|(v, &d)| {
            *v = beta2 * *v + (1.0 - beta2) * d * d;
            (*v / correction).sqrt()
        })
        .collect()
}

/// Moments of the AdaHessian update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaHessianState {
    pub t: u64,
    /// EMA of gradients, not bias corrected.
    pub m: Vec<f64>,
    /// EMA of squared spatially averaged diagonals, not bias corrected.
    pub v_raw: Vec<f64>,
    /// Most recent spatially averaged diagonal, reused when the estimate is skipped.
    pub last_ds: Option<Vec<f64>>,
    pub hyper: AdaHessianHyper,
}

impl AdaHessianState {
    pub fn new(d: usize, hyper: AdaHessianHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            t: 0,
            m: vec![0.0; d],
            v_raw: vec![0.0; d],
            last_ds: None,
            hyper,
        })
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Hessian diagonal with momentum for the current iteration. Call after
    /// `t` has been advanced for this step.
    pub fn hessian_momentum(&mut self, ds: &ParamVector) -> Result<ParamVector> {
        assert!(self.t >= 1, "advance t before updating the hessian momentum");
        let out = hessian_momentum_update(&mut self.v_raw, ds.as_slice(), self.hyper.beta2, self.t);
        ParamVector::checked(out, "hessian momentum")
    }

    /// One AdaHessian step from gradient `g` and spatially averaged diagonal
    /// `ds`, returning the new parameters. `lr_scale` multiplies the base
    /// learning rate.
    pub fn step(
        &mut self,
        theta: &ParamVector,
        g: &ParamVector,
        ds: &ParamVector,
        lr_scale: f64,
    ) -> Result<ParamVector> {
        self.step_with(theta, g, ds, lr_scale, hessian_momentum_update)
    }

    /// [`AdaHessianState::step`] with a caller-supplied curvature momentum rule.
    pub fn step_with(
        &mut self,
        theta: &ParamVector,
        g: &ParamVector,
        ds: &ParamVector,
        lr_scale: f64,
        rule: MomentumRule,
    ) -> Result<ParamVector> {
        let d = self.dim();
        theta.expect_len(d, "theta")?;
        g.expect_len(d, "gradient")?;
        ds.expect_len(d, "hessian diagonal")?;

        self.t += 1;
        let AdaHessianHyper {
            lr,
            beta1,
            hessian_power,
            eps,
            weight_decay,
            ..
        } = self.hyper;
        let lr = lr * lr_scale;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        for (m, &gi) in self.m.iter_mut().zip(g) {
            *m = beta1 * *m + (1.0 - beta1) * gi;
        }
        let d_bar = rule(&mut self.v_raw, ds.as_slice(), self.hyper.beta2, self.t);
        self.last_ds = Some(ds.as_slice().to_vec());

        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let mut w = theta[i];
            if weight_decay > 0.0 {
                w -= lr * weight_decay * w;
            }
            let m_hat = self.m[i] / c1;
            let v = d_bar[i].powf(hessian_power);
            out.push(w - lr * m_hat / (v + eps));
        }
        ParamVector::checked(out, "adahessian update")
    }
}

/// AdaHessian with spatial averaging and reuse of the last diagonal on
/// iterations that skip the Hutchinson estimate.
#[derive(Debug, Clone)]
pub struct AdaHessian {
    state: AdaHessianState,
    blocks: BlockSpec,
}

impl AdaHessian {
    pub fn new(hyper: AdaHessianHyper, blocks: BlockSpec) -> Result<Self> {
        Ok(Self {
            state: AdaHessianState::new(blocks.dim(), hyper)?,
            blocks,
        })
    }

    pub fn from_state(state: AdaHessianState, blocks: BlockSpec) -> Result<Self> {
        state.hyper.validate()?;
        if state.dim() != blocks.dim() || state.v_raw.len() != blocks.dim() {
            return Err(Error::DimensionMismatch {
                what: "adahessian state",
                expected: blocks.dim(),
                got: state.dim(),
            });
        }
        Ok(Self { state, blocks })
    }

    pub fn state(&self) -> &AdaHessianState {
        &self.state
    }

    pub fn blocks(&self) -> &BlockSpec {
        &self.blocks
    }
}

impl Optimizer for AdaHessian {
    fn name(&self) -> &'static str {
        "adahessian"
    }

    fn uses_curvature(&self) -> bool {
        true
    }

    fn iteration(&self) -> u64 {
        self.state.t
    }

    fn step(
        &mut self,
        theta: &mut ParamVector,
        grad: &ParamVector,
        curvature: Option<&ParamVector>,
        lr_scale: f64,
    ) -> Result<()> {
        let ds = match curvature {
            Some(diag) => {
                diag.expect_len(self.blocks.dim(), "hessian diagonal")?;
                spatial_average(diag, &self.blocks)
            }
            None => match &self.state.last_ds {
                Some(prev) => ParamVector::new(prev.clone())?,
                None => {
                    return Err(Error::InvalidArgument(
                        "first adahessian step needs a hessian diagonal estimate".into(),
                    ))
                }
            },
        };
        *theta = self.state.step(theta, grad, &ds, lr_scale)?;
        Ok(())
    }

    fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot::AdaHessian {
            state: self.state.clone(),
            groups: self.blocks.groups().to_vec(),
            block_size: self.blocks.block_size(),
        }
    }
}
