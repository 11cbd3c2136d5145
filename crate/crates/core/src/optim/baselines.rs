use serde::{Deserialize, Serialize};

use super::{Optimizer, OptimizerSnapshot};
use crate::error::{Error, Result};
use crate::param::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Sgd,
    Adagrad,
    Adam,
    AdamW,
    RmsProp,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Sgd => "sgd",
            BaselineKind::Adagrad => "adagrad",
            BaselineKind::Adam => "adam",
            BaselineKind::AdamW => "adamw",
            BaselineKind::RmsProp => "rmsprop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineHyper {
    pub lr: f64,
    /// Momentum for SGD, first-moment decay for Adam/AdamW.
    pub beta1: f64,
    /// Second-moment decay for Adam/AdamW/RMSProp.
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient for SGD/Adagrad/Adam/RMSProp;
    /// decoupled shrinkage for AdamW.
    pub weight_decay: f64,
}

impl Default for BaselineHyper {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Accumulators of a first-order optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub kind: BaselineKind,
    pub hyper: BaselineHyper,
    pub t: u64,
    /// Momentum buffer (SGD) or first moment (Adam/AdamW); unused otherwise.
    pub m: Vec<f64>,
    /// Sum of squared gradients (Adagrad) or squared-gradient EMA (Adam/AdamW/RMSProp).
    pub v: Vec<f64>,
}

impl BaselineState {
    pub fn new(kind: BaselineKind, d: usize, hyper: BaselineHyper) -> Result<Self> {
        if !(hyper.lr.is_finite() && hyper.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", hyper.lr)));
        }
        if !(0.0..1.0).contains(&hyper.beta1) || !(0.0..1.0).contains(&hyper.beta2) {
            return Err(Error::Config("betas must be in [0, 1)".into()));
        }
        if hyper.eps < 0.0 || hyper.weight_decay < 0.0 {
            return Err(Error::Config("eps and weight decay must be >= 0".into()));
        }
        Ok(Self {
            kind,
            hyper,
            t: 0,
            m: vec![0.0; d],
            v: vec![0.0; d],
        })
    }

    /// One update; returns the new parameters.
    pub fn step(&mut self, theta: &ParamVector, g: &ParamVector, lr_scale: f64) -> Result<ParamVector> {
        let d = self.m.len();
        theta.expect_len(d, "theta")?;
        g.expect_len(d, "gradient")?;
        self.t += 1;
        let BaselineHyper {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.hyper;
        let lr = lr * lr_scale;
        let t = self.t as i32;
        let mut out = Vec::with_capacity(d);
        for i in 0..d {
            let w = theta[i];
            let gi = if self.kind == BaselineKind::AdamW {
                g[i]
            } else {
                g[i] + weight_decay * w
            };
            let next = match self.kind {
                BaselineKind::Sgd => {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * gi;
                    w - lr * self.m[i]
                }
                BaselineKind::Adagrad => {
                    self.v[i] += gi * gi;
                    w - lr * gi / (self.v[i].sqrt() + eps)
                }
                BaselineKind::Adam | BaselineKind::AdamW => {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * gi;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * gi * gi;
                    let m_hat = self.m[i] / (1.0 - beta1.powi(t));
                    let v_hat = (self.v[i] / (1.0 - beta2.powi(t))).sqrt();
                    let w = if self.kind == BaselineKind::AdamW && weight_decay > 0.0 {
                        w - lr * weight_decay * w
                    } else {
                        w
                    };
                    w - lr * m_hat / (v_hat + eps)
                }
                BaselineKind::RmsProp => {
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * gi * gi;
                    w - lr * gi / (self.v[i].sqrt() + eps)
                }
            };
            out.push(next);
        }
        ParamVector::checked(out, "optimizer update")
    }
}

impl Optimizer for BaselineState {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn iteration(&self) -> u64 {
        self.t
    }

    fn step(
        &mut self,
        theta: &mut ParamVector,
        grad: &ParamVector,
        _curvature: Option<&ParamVector>,
        lr_scale: f64,
    ) -> Result<()> {
        *theta = BaselineState::step(self, theta, grad, lr_scale)?;
        Ok(())
    }

    fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot::Baseline(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn state(kind: BaselineKind, lr: f64, eps: f64) -> BaselineState {
        BaselineState::new(
            kind,
            2,
            BaselineHyper {
                lr,
                eps,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn adagrad_first_step_is_unit() {
        let mut s = state(BaselineKind::Adagrad, 0.5, 0.0);
        let next = s.step(&pv(&[1.0, 1.0]), &pv(&[3.0, 4.0]), 1.0).unwrap();
        assert_eq!(next.as_slice(), &[0.5, 0.5]);
        assert_eq!(s.v, vec![9.0, 16.0]);
    }

    #[test]
    fn adagrad_accumulator_nondecreasing() {
        let mut s = state(BaselineKind::Adagrad, 0.1, 1e-8);
        let mut theta = pv(&[0.0, 0.0]);
        let mut prev = s.v.clone();
        for k in 0..20 {
            let g = pv(&[(k as f64).sin(), -(k as f64) * 0.1]);
            theta = s.step(&theta, &g, 1.0).unwrap();
            assert!(s.v.iter().zip(&prev).all(|(a, b)| a >= b));
            prev = s.v.clone();
        }
    }

    #[test]
    fn sgd_momentum_buffer() {
        let mut s = state(BaselineKind::Sgd, 0.1, 0.0);
        let c = pv(&[1.0, -2.0]);
        let theta = pv(&[0.0, 0.0]);
        s.step(&theta, &c, 1.0).unwrap();
        s.step(&theta, &c, 1.0).unwrap();
        assert!((s.m[0] - 0.19).abs() < 1e-15 && (s.m[1] + 0.38).abs() < 1e-15);
        for _ in 0..500 {
            s.step(&theta, &c, 1.0).unwrap();
        }
        assert!((s.m[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_is_sign_like() {
        for kind in [BaselineKind::Adam, BaselineKind::AdamW] {
            let mut s = state(kind, 0.1, 0.0);
            let next = s.step(&pv(&[0.0, 0.0]), &pv(&[5.0, -0.003]), 1.0).unwrap();
            assert!((next[0] + 0.1).abs() < 1e-15 && (next[1] - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn rmsprop_first_step() {
        let mut s = BaselineState::new(
            BaselineKind::RmsProp,
            1,
            BaselineHyper {
                lr: 0.01,
                beta2: 0.99,
                eps: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let next = s.step(&pv(&[0.0]), &pv(&[2.0]), 1.0).unwrap();
        assert!((next[0] + 0.01 * 2.0 / (0.01f64 * 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn adamw_decay_is_decoupled() {
        let hyper = BaselineHyper {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut w = BaselineState::new(BaselineKind::AdamW, 1, hyper.clone()).unwrap();
        let next = w.step(&pv(&[2.0]), &pv(&[0.0]), 1.0).unwrap();
        assert!((next[0] - 1.9).abs() < 1e-15);
        // coupled L2 in Adam turns the decay into a normalized gradient step
        let mut a = BaselineState::new(BaselineKind::Adam, 1, hyper).unwrap();
        let next = a.step(&pv(&[2.0]), &pv(&[0.0]), 1.0).unwrap();
        assert!((next[0] - 1.9).abs() < 1e-7);
    }
}
