use crate::autodiff::{AnalyticDerivatives, Batch, DifferentiableProblem, Graph, Tensor, Var};
use crate::error::Result;
use crate::param::ParamVector;

use super::dataset::SyntheticDataset;

/// Binary logistic regression with an intercept and optional L2 penalty on
/// the weights. Parameters are `[w_1..w_p, bias]`.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    data: SyntheticDataset,
    l2: f64,
}

pub fn make_logreg(n: usize, p: usize, seed: u64) -> Result<LogisticRegression> {
    Ok(LogisticRegression {
        data: SyntheticDataset::logistic(n, p, seed)?,
        l2: 0.0,
    })
}

impl LogisticRegression {
    pub fn new(data: SyntheticDataset, l2: f64) -> Self {
        assert!(l2 >= 0.0 && l2.is_finite());
        Self { data, l2 }
    }

    pub fn with_l2(mut self, l2: f64) -> Self {
        assert!(l2 >= 0.0 && l2.is_finite());
        self.l2 = l2;
        self
    }

    pub fn data(&self) -> &SyntheticDataset {
        &self.data
    }

    fn margin(&self, theta: &[f64], i: usize) -> f64 {
        let p = self.data.features();
        let x = self.data.row(i);
        x.iter().zip(&theta[..p]).map(|(a, b)| a * b).sum::<f64>() + theta[p]
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Closed forms over the full dataset.
impl AnalyticDerivatives for LogisticRegression {
    fn value(&self, theta: &[f64]) -> f64 {
        let n = self.data.len();
        let p = self.data.features();
        let nll: f64 = (0..n)
            .map(|i| {
                let u = self.margin(theta, i);
                let sp = if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                };
                sp - self.data.label(i) as f64 * u
            })
            .sum();
        nll / n as f64 + 0.5 * self.l2 * theta[..p].iter().map(|w| w * w).sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let n = self.data.len();
        let p = self.data.features();
        let mut g = vec![0.0; p + 1];
        for i in 0..n {
            let r = sigmoid(self.margin(theta, i)) - self.data.label(i) as f64;
            for (gj, xj) in g.iter_mut().zip(self.data.row(i)) {
                *gj += r * xj;
            }
            g[p] += r;
        }
        for (j, gj) in g.iter_mut().enumerate() {
            *gj /= n as f64;
            if j < p {
                *gj += self.l2 * theta[j];
            }
        }
        g
    }

    fn hvp(&self, theta: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.data.len();
        let p = self.data.features();
        let mut out = vec![0.0; p + 1];
        for i in 0..n {
            let s = sigmoid(self.margin(theta, i));
            let x = self.data.row(i);
            let xz = x.iter().zip(&z[..p]).map(|(a, b)| a * b).sum::<f64>() + z[p];
            let c = s * (1.0 - s) * xz;
            for (o, xj) in out.iter_mut().zip(x) {
                *o += c * xj;
            }
            out[p] += c;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o /= n as f64;
            if j < p {
                *o += self.l2 * z[j];
            }
        }
        out
    }
}

impl DifferentiableProblem for LogisticRegression {
    fn name(&self) -> &str {
        "logreg"
    }

    fn dim(&self) -> usize {
        self.data.features() + 1
    }

    fn groups(&self) -> Vec<usize> {
        vec![self.data.features(), 1]
    }

    fn num_samples(&self) -> Option<usize> {
        Some(self.data.len())
    }

    fn record_loss(&self, g: &mut Graph, theta: Var, batch: &Batch) -> Var {
        let p = self.data.features();
        let rows = self.data.indices(batch);
        let m = rows.len();
        let x = g.constant(self.data.features_tensor(&rows));
        let y = g.constant(Tensor::column(
            rows.iter().map(|&i| self.data.label(i) as f64).collect(),
        ));
        let w = g.slice(theta, 0, p, 1);
        let b = g.slice(theta, p, 1, 1);
        let xw = g.matmul(x, w);
        let bb = g.expand(b, m, 1);
        let u = g.add(xw, bb);
        let sp = g.softplus(u);
        let yu = g.mul(y, u);
        let per = g.sub(sp, yu);
        let total = g.sum_all(per);
        let nll = g.scale(total, 1.0 / m as f64);
        if self.l2 == 0.0 {
            return nll;
        }
        let ww = g.mul(w, w);
        let sw = g.sum_all(ww);
        let pen = g.scale(sw, 0.5 * self.l2);
        g.add(nll, pen)
    }

    fn initial_point(&self, _seed: u64) -> ParamVector {
        ParamVector::zeros(self.dim())
    }

    fn analytic(&self) -> Option<&dyn AnalyticDerivatives> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{evaluate, hvp};

    #[test]
    fn loss_at_zero_is_ln2() {
        let lr = make_logreg(4, 2, 1).unwrap();
        let v = evaluate(&lr, &ParamVector::zeros(3), &Batch::Full).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn hessian_diagonal_nonnegative() {
        let lr = make_logreg(40, 3, 2).unwrap();
        let theta = ParamVector::new(vec![0.5, -1.0, 2.0, 0.1]).unwrap();
        for j in 0..4 {
            let mut e = vec![0.0; 4];
            e[j] = 1.0;
            let he = hvp(&lr, &theta, &Batch::Full, &ParamVector::new(e).unwrap()).unwrap();
            assert!(he[j] >= 0.0);
        }
    }
}
