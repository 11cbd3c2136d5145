use std::f64::consts::PI;

use crate::autodiff::{AnalyticDerivatives, Batch, DifferentiableProblem, Graph, Var};
use crate::param::ParamVector;

const FREQ: f64 = 20.0 * PI;
const AMP: f64 = 0.1;

/// `f(x) = x^2 + 0.1 x sin(20 pi x)`: a parabola with many shallow local
/// minima whose local curvature is dominated by the oscillation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoisyParabola;

pub fn make_noisy_parabola() -> NoisyParabola {
    NoisyParabola
}

impl NoisyParabola {
    pub fn f(x: f64) -> f64 {
        x * x + AMP * x * (FREQ * x).sin()
    }

    pub fn df(x: f64) -> f64 {
        2.0 * x + AMP * (FREQ * x).sin() + AMP * FREQ * x * (FREQ * x).cos()
    }

    pub fn d2f(x: f64) -> f64 {
        2.0 + 2.0 * AMP * FREQ * (FREQ * x).cos() - AMP * FREQ * FREQ * x * (FREQ * x).sin()
    }
}

impl AnalyticDerivatives for NoisyParabola {
    fn value(&self, theta: &[f64]) -> f64 {
        Self::f(theta[0])
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        vec![Self::df(theta[0])]
    }

    fn hvp(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        vec![Self::d2f(theta[0]) * z[0]]
    }
}

impl DifferentiableProblem for NoisyParabola {
    fn name(&self) -> &str {
        "noisy-parabola"
    }

    fn dim(&self) -> usize {
        1
    }

    fn record_loss(&self, g: &mut Graph, theta: Var, _batch: &Batch) -> Var {
        let sq = g.mul(theta, theta);
        let arg = g.scale(theta, FREQ);
        let s = g.sin(arg);
        let xs = g.mul(theta, s);
        let noise = g.scale(xs, AMP);
        let total = g.add(sq, noise);
        g.sum_all(total)
    }

    fn initial_point(&self, _seed: u64) -> ParamVector {
        ParamVector::new(vec![1.0]).expect("finite")
    }

    /// The oscillation has fourth derivatives of order 1e6, so a smaller
    /// step keeps central differences accurate.
    fn fd_step(&self) -> f64 {
        1e-6
    }

    fn analytic(&self) -> Option<&dyn AnalyticDerivatives> {
        Some(self)
    }
}
