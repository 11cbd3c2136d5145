use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{AnalyticDerivatives, Batch, DifferentiableProblem, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// `f(w) = 1/2 w^T A w + b^T w` for a symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    name: String,
    a: DMatrix<f64>,
    linear: Option<DVector<f64>>,
    alpha: f64,
    beta: f64,
    start: Option<Vec<f64>>,
}

const MAX_DIM: usize = 64;

impl QuadraticProblem {
    /// Builds a quadratic from a symmetric matrix; extreme eigenvalues are
    /// computed by a symmetric eigendecomposition.
    pub fn from_matrix(name: impl Into<String>, a: DMatrix<f64>, linear: Option<Vec<f64>>) -> Result<Self> {
        let d = a.nrows();
        if d == 0 || a.ncols() != d {
            return Err(Error::InvalidArgument(
                "quadratic matrix must be square and non-empty".into(),
            ));
        }
        if d > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "quadratic dimension {d} exceeds {MAX_DIM}"
            )));
        }
        let scale = a.amax().max(1.0);
        if (&a - a.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidArgument("quadratic matrix is not symmetric".into()));
        }
        if let Some(b) = &linear {
            if b.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "linear term",
                    expected: d,
                    got: b.len(),
                });
            }
        }
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        Ok(Self {
            name: name.into(),
            a,
            linear: linear.map(DVector::from_vec),
            alpha: eig.min(),
            beta: eig.max(),
            start: None,
        })
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Self {
        assert_eq!(start.len(), self.dim());
        self.start = Some(start);
        self
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Smallest eigenvalue of `A`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Largest eigenvalue of `A`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_spd(&self) -> bool {
        self.alpha > 0.0
    }

    pub fn hessian_diagonal(&self) -> Vec<f64> {
        self.a.diagonal().iter().copied().collect()
    }

    /// Minimizer `-A^{-1} b` (the origin when there is no linear term).
    pub fn minimizer(&self) -> Option<Vec<f64>> {
        match &self.linear {
            None => Some(vec![0.0; self.dim()]),
            Some(b) => self
                .a
                .clone()
                .cholesky()
                .map(|c| (-c.solve(b)).iter().copied().collect()),
        }
    }
}

/// `f(x, y) = 10 x^2 + y^2`, i.e. `A = diag(20, 2)`, started at `(1, 1)`.
pub fn make_diagonal_quadratic() -> QuadraticProblem {
    QuadraticProblem::from_matrix(
        "diagonal-quadratic",
        DMatrix::from_diagonal(&DVector::from_vec(vec![20.0, 2.0])),
        None,
    )
    .expect("valid matrix")
    .with_start(vec![1.0, 1.0])
}

/// `A = [[2, 1], [1, 3]]`.
pub fn make_small_coupled_quadratic() -> QuadraticProblem {
    QuadraticProblem::from_matrix(
        "quadratic-2x2",
        DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]),
        None,
    )
    .expect("valid matrix")
}

/// Random SPD quadratic `Q diag(lambda) Q^T` with eigenvalues spaced
/// geometrically from 1 to `condition_number` and a Haar-like orthogonal
/// `Q` (QR of a Gaussian matrix).
pub fn make_random_spd_quadratic(d: usize, condition_number: f64, seed: u64) -> Result<QuadraticProblem> {
    if d < 2 {
        return Err(Error::InvalidArgument("spd quadratic needs d >= 2".into()));
    }
    if !(condition_number >= 1.0 && condition_number.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "condition number must be >= 1, got {condition_number}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    let eigs: Vec<f64> = (0..d)
        .map(|i| match i {
            0 => 1.0,
            i if i == d - 1 => condition_number,
            i => condition_number.powf(i as f64 / (d - 1) as f64),
        })
        .collect();
    let a = &q * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * q.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let start: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut p = QuadraticProblem::from_matrix(format!("spd-quadratic-d{d}"), a, None)?.with_start(start);
    p.alpha = 1.0;
    p.beta = condition_number;
    Ok(p)
}

impl AnalyticDerivatives for QuadraticProblem {
    fn value(&self, theta: &[f64]) -> f64 {
        let w = DVector::from_column_slice(theta);
        let quad = 0.5 * w.dot(&(&self.a * &w));
        quad + self.linear.as_ref().map_or(0.0, |b| b.dot(&w))
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(theta);
        let mut g = &self.a * w;
        if let Some(b) = &self.linear {
            g += b;
        }
        g.iter().copied().collect()
    }

    fn hvp(&self, _theta: &[f64], z: &[f64]) -> Vec<f64> {
        (&self.a * DVector::from_column_slice(z)).iter().copied().collect()
    }
}

impl DifferentiableProblem for QuadraticProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn record_loss(&self, g: &mut Graph, theta: Var, _batch: &Batch) -> Var {
        let d = self.dim();
        // row-major copy of A
        let a = g.constant(Tensor::new(d, d, self.a.transpose().iter().copied().collect()));
        let aw = g.matmul(a, theta);
        let waw = g.mul(theta, aw);
        let s = g.sum_all(waw);
        let quad = g.scale(s, 0.5);
        match &self.linear {
            None => quad,
            Some(b) => {
                let bc = g.constant(Tensor::column(b.iter().copied().collect()));
                let bw = g.mul(bc, theta);
                let lin = g.sum_all(bw);
                g.add(quad, lin)
            }
        }
    }

    fn initial_point(&self, seed: u64) -> ParamVector {
        match &self.start {
            Some(s) => ParamVector::new(s.clone()).expect("finite start"),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let v = (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
                ParamVector::new(v).expect("finite start")
            }
        }
    }

    fn analytic(&self) -> Option<&dyn AnalyticDerivatives> {
        Some(self)
    }
}
