use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Batch, DifferentiableProblem, Graph, Var};
use crate::error::{Error, Result};
use crate::param::ParamVector;

use super::dataset::SyntheticDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

/// Fully connected classifier with softmax cross-entropy loss.
///
/// `layers = [inputs, hidden.., classes]`. Parameters are laid out layer by
/// layer as the row-major `in x out` weight matrix followed by the bias.
#[derive(Debug, Clone)]
pub struct TinyMlp {
    data: SyntheticDataset,
    layers: Vec<usize>,
    activation: Activation,
}

const MAX_PARAMS: usize = 20_000;

pub fn make_tiny_mlp(layers: &[usize], n: usize, activation: Activation, seed: u64) -> Result<TinyMlp> {
    if layers.len() < 2 || layers.contains(&0) {
        return Err(Error::InvalidArgument("mlp needs >= 2 non-empty layers".into()));
    }
    let classes = *layers.last().expect("non-empty");
    let data = SyntheticDataset::blobs(n, layers[0], classes, seed)?;
    TinyMlp::new(data, layers.to_vec(), activation)
}

impl TinyMlp {
    pub fn new(data: SyntheticDataset, layers: Vec<usize>, activation: Activation) -> Result<Self> {
        if layers.first() != Some(&data.features()) || layers.last() != Some(&data.classes()) {
            return Err(Error::InvalidArgument(
                "mlp input/output sizes must match the dataset".into(),
            ));
        }
        let mlp = Self {
            data,
            layers,
            activation,
        };
        if mlp.dim() > MAX_PARAMS {
            return Err(Error::InvalidArgument(format!(
                "mlp has {} parameters, limit is {MAX_PARAMS}",
                mlp.dim()
            )));
        }
        Ok(mlp)
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn data(&self) -> &SyntheticDataset {
        &self.data
    }
}

impl DifferentiableProblem for TinyMlp {
    fn name(&self) -> &str {
        "tiny-mlp"
    }

    fn dim(&self) -> usize {
        self.groups().iter().sum()
    }

    fn groups(&self) -> Vec<usize> {
        self.layers.windows(2).flat_map(|w| [w[0] * w[1], w[1]]).collect()
    }

    fn num_samples(&self) -> Option<usize> {
        Some(self.data.len())
    }

    fn record_loss(&self, g: &mut Graph, theta: Var, batch: &Batch) -> Var {
        let rows = self.data.indices(batch);
        let m = rows.len();
        let mut h = g.constant(self.data.features_tensor(&rows));
        let mut offset = 0;
        let last = self.layers.len() - 2;
        for (l, w) in self.layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = g.slice(theta, offset, fan_in, fan_out);
            offset += fan_in * fan_out;
            let bias = g.slice(theta, offset, 1, fan_out);
            offset += fan_out;
            let z = g.matmul(h, weight);
            let z = g.add_row(z, bias);
            h = if l == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => g.tanh(z),
                    Activation::Relu => g.relu(z),
                }
            };
        }
        let targets = g.constant(self.data.one_hot(&rows));
        let lse = g.log_sum_exp_rows(h);
        let picked = g.mul(h, targets);
        let lse_sum = g.sum_all(lse);
        let picked_sum = g.sum_all(picked);
        let total = g.sub(lse_sum, picked_sum);
        g.scale(total, 1.0 / m as f64)
    }

    /// Weights `N(0, 1/fan_in)`, biases zero.
    fn initial_point(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.dim());
        for w in self.layers.windows(2) {
            let scale = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                let e: f64 = StandardNormal.sample(&mut rng);
                out.push(scale * e);
            }
            out.extend(std::iter::repeat_n(0.0, w[1]));
        }
        ParamVector::new(out).expect("finite init")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::evaluate;

    #[test]
    fn layout() {
        let mlp = make_tiny_mlp(&[4, 5, 3], 30, Activation::Tanh, 0).unwrap();
        assert_eq!(mlp.groups(), vec![20, 5, 15, 3]);
        assert_eq!(mlp.dim(), 43);
        assert_eq!(mlp.initial_point(1).len(), 43);
    }

    #[test]
    fn zero_weights_give_uniform_prediction() {
        let mlp = make_tiny_mlp(&[4, 5, 3], 30, Activation::Relu, 0).unwrap();
        let v = evaluate(&mlp, &ParamVector::zeros(mlp.dim()), &Batch::Full).unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_layers() {
        assert!(make_tiny_mlp(&[4], 30, Activation::Tanh, 0).is_err());
        assert!(make_tiny_mlp(&[4, 0, 3], 30, Activation::Tanh, 0).is_err());
    }
}
