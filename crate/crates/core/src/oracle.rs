//! Brute-force references used to check the fast paths: finite-difference
//! derivatives, exact Hutchinson expectations by enumerating every sign
//! vector, and the descent inequality for preconditioned gradient steps on
//! strongly convex quadratics.
//!
//! Nothing here calls into the Hutchinson estimator or the optimizers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::autodiff::{gradient, Batch, DifferentiableProblem};
use crate::error::{Error, Result};
use crate::param::ParamVector;
use crate::problems::QuadraticProblem;

pub const MAX_ORACLE_DIM: usize = 64;
pub const MAX_ENUMERATION_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HessianMethod {
    FiniteDifference,
    Analytic,
}

/// Dense Hessian, stored symmetrized as `(H + H^T) / 2`.
#[derive(Debug, Clone)]
pub struct DenseHessian {
    pub matrix: DMatrix<f64>,
    pub method: HessianMethod,
    /// Finite-difference step (0 for analytic).
    pub step: f64,
    /// `max |H - H^T|` before symmetrization.
    pub asymmetry: f64,
}

impl DenseHessian {
    fn symmetrized(raw: DMatrix<f64>, method: HessianMethod, step: f64) -> Self {
        let asymmetry = (&raw - raw.transpose()).amax();
        let matrix = (&raw + raw.transpose()) * 0.5;
        Self {
            matrix,
            method,
            step,
            asymmetry,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }
}

fn check_oracle_dim(d: usize) -> Result<()> {
    if d > MAX_ORACLE_DIM {
        return Err(Error::InvalidArgument(format!(
            "oracle limited to d <= {MAX_ORACLE_DIM}, got {d}"
        )));
    }
    Ok(())
}

fn shifted(theta: &ParamVector, dir: &[f64], h: f64) -> Result<ParamVector> {
    ParamVector::checked(
        theta.iter().zip(dir).map(|(t, d)| t + h * d).collect(),
        "finite-difference point",
    )
}

/// Central differences of the loss, one coordinate at a time, with step
/// `h * max(1, |theta_i|)`.
pub fn fd_gradient(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
    h: f64,
) -> Result<Vec<f64>> {
    let d = problem.dim();
    theta.expect_len(d, "theta")?;
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let hi = h * theta[i].abs().max(1.0);
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let fp = crate::autodiff::evaluate(problem, &shifted(theta, &e, hi)?, batch)?;
        let fm = crate::autodiff::evaluate(problem, &shifted(theta, &e, -hi)?, batch)?;
        out.push((fp - fm) / (2.0 * hi));
    }
    Ok(out)
}

/// `(grad f(theta + h z) - grad f(theta - h z)) / (2h)`.
pub fn fd_hvp(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
    z: &ParamVector,
    h: f64,
) -> Result<Vec<f64>> {
    z.expect_len(theta.len(), "direction")?;
    let gp = gradient(problem, &shifted(theta, z.as_slice(), h)?, batch)?;
    let gm = gradient(problem, &shifted(theta, z.as_slice(), -h)?, batch)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// Column `j` is the central difference of the gradient along `e_j`.
pub fn fd_hessian(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
    h: f64,
) -> Result<DenseHessian> {
    let d = problem.dim();
    check_oracle_dim(d)?;
    theta.expect_len(d, "theta")?;
    let mut raw = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let col = fd_hvp(problem, theta, batch, &ParamVector::new(e)?, h)?;
        if let Some(i) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite finite-difference hessian entry at ({i}, {j})"
            )));
        }
        raw.set_column(j, &DVector::from_vec(col));
    }
    Ok(DenseHessian::symmetrized(raw, HessianMethod::FiniteDifference, h))
}

/// Dense Hessian from a problem's closed-form Hessian-vector product.
pub fn analytic_hessian(problem: &dyn DifferentiableProblem, theta: &ParamVector) -> Result<DenseHessian> {
    let d = problem.dim();
    check_oracle_dim(d)?;
    let analytic = problem
        .analytic()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no closed form", problem.name())))?;
    let mut raw = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        raw.set_column(j, &DVector::from_vec(analytic.hvp(theta.as_slice(), &e)));
    }
    Ok(DenseHessian::symmetrized(raw, HessianMethod::Analytic, 0.0))
}

/// Mean of `z * (H z)` over all `2^d` sign vectors `z`, with compensated
/// summation.
pub fn exact_hutchinson_expectation(h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = h.nrows();
    if d == 0 || h.ncols() != d {
        return Err(Error::InvalidArgument("matrix must be square and non-empty".into()));
    }
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::InvalidArgument(format!(
            "sign enumeration limited to d <= {MAX_ENUMERATION_DIM}, got {d}"
        )));
    }
    let mut sum = vec![0.0f64; d];
    let mut comp = vec![0.0f64; d];
    let mut z = vec![0.0; d];
    for mask in 0u32..(1 << d) {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        for i in 0..d {
            let hz: f64 = (0..d).map(|j| h[(i, j)] * z[j]).sum();
            // Neumaier summation
            let x = z[i] * hz;
            let t = sum[i] + x;
            if sum[i].abs() >= x.abs() {
                comp[i] += (sum[i] - t) + x;
            } else {
                comp[i] += (x - t) + sum[i];
            }
            sum[i] = t;
        }
    }
    let count = (1u64 << d) as f64;
    Ok(sum.iter().zip(&comp).map(|(s, c)| (s + c) / count).collect())
}

/// Which curvature matrix preconditions the gradient in a descent check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// `A^{-k} g` through the eigendecomposition of `A`.
    Full,
    /// `diag(A)^{-k} g`.
    Diagonal,
    /// Diagonal averaged over consecutive blocks of the given size.
    BlockAveraged(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct DescentCheck {
    /// `f(w - eta * dw) - f(w)`.
    pub change: f64,
    /// `-(alpha^k / (2 beta^(1+k))) |g|^2`.
    pub bound: f64,
    /// `bound - change`; non-negative when the inequality holds exactly.
    pub slack: f64,
    pub step: f64,
    /// Diagonal preconditioner entries all lay in `[alpha, beta]`.
    pub curvature_in_range: bool,
    pub holds: bool,
}

fn block_means(diag: &[f64], b: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(diag.len());
    for chunk in diag.chunks(b) {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        out.extend(std::iter::repeat_n(mean, chunk.len()));
    }
    out
}

/// Evaluates the descent inequality for one preconditioned step of size
/// `alpha^k / beta` on the SPD quadratic `q` at `w`.
pub fn reference_descent_check(
    q: &QuadraticProblem,
    w: &[f64],
    k: f64,
    precond: Preconditioner,
) -> Result<DescentCheck> {
    if !q.is_spd() {
        return Err(Error::InvalidArgument("descent check needs an SPD quadratic".into()));
    }
    let d = q.matrix().nrows();
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            what: "w",
            expected: d,
            got: w.len(),
        });
    }
    let a = q.matrix();
    let (alpha, beta) = (q.alpha(), q.beta());
    let wv = DVector::from_column_slice(w);
    let mut g = a * &wv;
    if let Some(m) = q.minimizer() {
        // f = 1/2 (w - w*)^T A (w - w*) + const
        g = a * (&wv - DVector::from_vec(m));
    }
    let range_tol = 1e-12 * beta.max(1.0);
    let in_range = |v: &[f64]| v.iter().all(|&x| x >= alpha - range_tol && x <= beta + range_tol);

    let (dw, curvature_in_range) = match precond {
        Preconditioner::Full => {
            let eig = SymmetricEigen::new(a.clone());
            let scaled = eig.eigenvalues.map(|l| l.powf(-k));
            let u = &eig.eigenvectors;
            let dw = u * DMatrix::from_diagonal(&scaled) * u.transpose() * &g;
            (dw, true)
        }
        Preconditioner::Diagonal | Preconditioner::BlockAveraged(_) => {
            let diag: Vec<f64> = a.diagonal().iter().copied().collect();
            let diag = match precond {
                Preconditioner::BlockAveraged(b) if b >= 1 => block_means(&diag, b),
                Preconditioner::BlockAveraged(_) => {
                    return Err(Error::InvalidArgument("block size must be >= 1".into()))
                }
                _ => diag,
            };
            let ok = in_range(&diag);
            let dw = DVector::from_iterator(d, g.iter().zip(&diag).map(|(gi, di)| gi * di.powf(-k)));
            (dw, ok)
        }
    };

    let step = alpha.powf(k) / beta;
    let s = &dw * step;
    // exact expansion of f(w - s) - f(w) for a quadratic
    let change = -g.dot(&s) + 0.5 * s.dot(&(a * &s));
    let g2 = g.norm_squared();
    let bound = -(alpha.powf(k) / (2.0 * beta.powf(1.0 + k))) * g2;
    let slack = bound - change;
    let holds = slack >= -1e-12 * g2.max(1.0);
    Ok(DescentCheck {
        change,
        bound,
        slack,
        step,
        curvature_in_range,
        holds,
    })
}
