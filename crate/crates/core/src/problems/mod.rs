//! Benchmark problems: analytic toys, controlled quadratics and small
//! stochastic learning problems, addressable by name.

mod dataset;
mod logreg;
mod mlp;
mod parabola;
mod quadratic;

pub use dataset::{minibatch, SyntheticDataset};
pub use logreg::{make_logreg, LogisticRegression};
pub use mlp::{make_tiny_mlp, Activation, TinyMlp};
pub use parabola::{make_noisy_parabola, NoisyParabola};
pub use quadratic::{
    make_diagonal_quadratic, make_random_spd_quadratic, make_small_coupled_quadratic, QuadraticProblem,
};

use serde::{Deserialize, Serialize};

use crate::autodiff::DifferentiableProblem;
use crate::error::{Error, Result};

/// Registered problem names.
pub const PROBLEM_NAMES: [&str; 6] = [
    "diagonal-quadratic",
    "quadratic-2x2",
    "noisy-parabola",
    "spd-quadratic",
    "logreg",
    "tiny-mlp",
];

/// Problem name plus construction parameters. Parameters a problem does
/// not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSpec {
    pub name: String,
    /// Data / matrix generator seed.
    pub seed: u64,
    /// Dimension of `spd-quadratic`.
    pub dim: usize,
    /// Condition number of `spd-quadratic`.
    pub condition: f64,
    /// Samples for `logreg` and `tiny-mlp`.
    pub samples: usize,
    /// Features for `logreg` and `tiny-mlp`.
    pub features: usize,
    /// Hidden layer widths for `tiny-mlp`.
    pub hidden: Vec<usize>,
    /// Classes for `tiny-mlp`.
    pub classes: usize,
    pub activation: Activation,
    /// L2 penalty for `logreg`.
    pub l2: f64,
    /// Ratio of the largest to the smallest feature scale for `logreg`.
    pub feature_scale: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            name: "diagonal-quadratic".into(),
            seed: 0,
            dim: 10,
            condition: 100.0,
            samples: 512,
            features: 10,
            hidden: vec![16],
            classes: 3,
            activation: Activation::Tanh,
            l2: 1e-3,
            feature_scale: 1.0,
        }
    }
}

impl ProblemSpec {
    pub fn named(name: &str) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn build(&self) -> Result<Box<dyn DifferentiableProblem>> {
        let wrap = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        Ok(match self.name.as_str() {
            "diagonal-quadratic" => Box::new(make_diagonal_quadratic()),
            "quadratic-2x2" => Box::new(make_small_coupled_quadratic()),
            "noisy-parabola" => Box::new(make_noisy_parabola()),
            "spd-quadratic" => Box::new(make_random_spd_quadratic(self.dim, self.condition, self.seed).map_err(wrap)?),
            "logreg" => {
                if !(self.l2 >= 0.0 && self.l2.is_finite()) {
                    return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
                }
                let data = SyntheticDataset::logistic(self.samples, self.features, self.seed)
                    .and_then(|d| d.with_feature_scale(self.feature_scale))
                    .map_err(wrap)?;
                Box::new(LogisticRegression::new(data, self.l2))
            }
            "tiny-mlp" => {
                let mut layers = vec![self.features];
                layers.extend(&self.hidden);
                layers.push(self.classes);
                Box::new(make_tiny_mlp(&layers, self.samples, self.activation, self.seed).map_err(wrap)?)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown problem `{other}` (known: {})",
                    PROBLEM_NAMES.join(", ")
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_registered_name_builds() {
        for name in PROBLEM_NAMES {
            let p = ProblemSpec::named(name).build().unwrap();
            assert_eq!(p.groups().iter().sum::<usize>(), p.dim(), "{name}");
            assert_eq!(p.initial_point(0).len(), p.dim());
        }
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(ProblemSpec::named("imagenet").build(), Err(Error::Config(_))));
        let bad = ProblemSpec {
            dim: 1,
            ..ProblemSpec::named("spd-quadratic")
        };
        assert!(matches!(bad.build(), Err(Error::Config(_))));
    }
}
