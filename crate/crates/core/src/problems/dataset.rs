use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::autodiff::{Batch, Tensor};
use crate::error::{Error, Result};

pub const MAX_SAMPLES: usize = 10_000;
pub const MAX_FEATURES: usize = 100;

/// Feature matrix with integer labels, fully determined by its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    n: usize,
    p: usize,
    /// Row-major `n x p`.
    x: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
    seed: u64,
}

fn check_sizes(n: usize, p: usize) -> Result<()> {
    if n == 0 || n > MAX_SAMPLES || p == 0 || p > MAX_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "dataset size {n}x{p} outside 1..={MAX_SAMPLES} x 1..={MAX_FEATURES}"
        )));
    }
    Ok(())
}

impl SyntheticDataset {
    /// Binary labels drawn from a logistic model with a random true weight vector.
    pub fn logistic(n: usize, p: usize, seed: u64) -> Result<Self> {
        check_sizes(n, p)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let u: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            let prob = 1.0 / (1.0 + (-u).exp());
            labels.push(usize::from(rng.random::<f64>() < prob));
            x.extend(row);
        }
        Ok(Self {
            n,
            p,
            x,
            labels,
            classes: 2,
            seed,
        })
    }

    /// Multiplies feature `j` by `ratio^(j / (p - 1))`, so scales run
    /// geometrically from 1 to `ratio`.
    pub fn with_feature_scale(mut self, ratio: f64) -> Result<Self> {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "feature scale must be >= 1, got {ratio}"
            )));
        }
        if self.p > 1 {
            let scales: Vec<f64> = (0..self.p)
                .map(|j| ratio.powf(j as f64 / (self.p - 1) as f64))
                .collect();
            for row in self.x.chunks_mut(self.p) {
                for (v, s) in row.iter_mut().zip(&scales) {
                    *v *= s;
                }
            }
        }
        Ok(self)
    }

    /// Gaussian blobs around random class centres.
    pub fn blobs(n: usize, p: usize, classes: usize, seed: u64) -> Result<Self> {
        check_sizes(n, p)?;
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spread = Normal::new(0.0, 1.5).expect("valid normal");
        let centres: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..p).map(|_| spread.sample(&mut rng)).collect())
            .collect();
        let mut x = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            labels.push(c);
            for &m in &centres[c] {
                let e: f64 = StandardNormal.sample(&mut rng);
                x.push(m + e);
            }
        }
        Ok(Self {
            n,
            p,
            x,
            labels,
            classes,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn features(&self) -> usize {
        self.p
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Sample indices covered by `batch`.
    pub fn indices(&self, batch: &Batch) -> Vec<usize> {
        match batch {
            Batch::Full => (0..self.n).collect(),
            Batch::Indices(idx) => idx.clone(),
        }
    }

    /// Features of the selected rows as an `m x p` tensor.
    pub fn features_tensor(&self, rows: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(rows.len(), self.p, data)
    }

    /// One-hot labels of the selected rows as an `m x classes` tensor.
    pub fn one_hot(&self, rows: &[usize]) -> Tensor {
        let mut data = vec![0.0; rows.len() * self.classes];
        for (r, &i) in rows.iter().enumerate() {
            data[r * self.classes + self.labels[i]] = 1.0;
        }
        Tensor::new(rows.len(), self.classes, data)
    }
}

/// Minibatch of `size` distinct indices out of `n`, determined by
/// `(seed, t)`. Returns the full batch when `size >= n`.
pub fn minibatch(n: usize, size: usize, seed: u64, t: u64) -> Batch {
    if size >= n {
        return Batch::Full;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(t);
    let mut idx = index::sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    Batch::Indices(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_scale_is_geometric() {
        let base = SyntheticDataset::logistic(3, 3, 1).unwrap();
        let scaled = base.clone().with_feature_scale(100.0).unwrap();
        for i in 0..3 {
            let (a, b) = (base.row(i), scaled.row(i));
            assert_eq!(b[0], a[0]);
            assert!((b[1] - 10.0 * a[1]).abs() < 1e-12 * a[1].abs().max(1.0));
            assert!((b[2] - 100.0 * a[2]).abs() < 1e-12 * a[2].abs().max(1.0));
        }
        assert_eq!(scaled.label(2), base.label(2));
        assert!(base.with_feature_scale(0.5).is_err());
    }

    #[test]
    fn reproducible_from_seed() {
        assert_eq!(
            SyntheticDataset::logistic(50, 3, 4).unwrap(),
            SyntheticDataset::logistic(50, 3, 4).unwrap()
        );
        assert_ne!(
            SyntheticDataset::blobs(50, 3, 3, 4).unwrap(),
            SyntheticDataset::blobs(50, 3, 3, 5).unwrap()
        );
    }

    #[test]
    fn both_labels_present() {
        let d = SyntheticDataset::logistic(200, 4, 0).unwrap();
        let ones = (0..d.len()).filter(|&i| d.label(i) == 1).count();
        assert!(ones > 20 && ones < 180);
    }

    #[test]
    fn size_limits() {
        assert!(SyntheticDataset::logistic(0, 3, 0).is_err());
        assert!(SyntheticDataset::logistic(10, 101, 0).is_err());
        assert!(SyntheticDataset::blobs(10, 3, 1, 0).is_err());
    }

    #[test]
    fn minibatches_are_deterministic_and_distinct() {
        let a = minibatch(100, 10, 7, 3);
        assert_eq!(a, minibatch(100, 10, 7, 3));
        assert_ne!(a, minibatch(100, 10, 7, 4));
        let Batch::Indices(idx) = a else {
            panic!("expected minibatch")
        };
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]) && idx[9] < 100);
        assert_eq!(minibatch(5, 10, 0, 1), Batch::Full);
    }
}
