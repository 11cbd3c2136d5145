use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// Which samples a loss evaluation covers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Batch {
    /// Every sample (or the whole deterministic function for analytic problems).
    #[default]
    Full,
    /// A minibatch of sample indices.
    Indices(Vec<usize>),
}

impl Batch {
    /// Checks the batch against a problem with `num_samples` samples
    /// (`None` for problems without data).
    pub fn validate(&self, num_samples: Option<usize>) -> Result<()> {
        match (self, num_samples) {
            (Batch::Full, _) => Ok(()),
            (Batch::Indices(_), None) => Err(Error::InvalidArgument(
                "minibatch given for a problem without samples".into(),
            )),
            (Batch::Indices(idx), Some(n)) => {
                if idx.is_empty() {
                    return Err(Error::InvalidArgument("empty minibatch".into()));
                }
                match idx.iter().find(|&&i| i >= n) {
                    Some(i) => Err(Error::InvalidArgument(format!(
                        "sample index {i} out of range for {n} samples"
                    ))),
                    None => Ok(()),
                }
            }
        }
    }
}

/// Closed-form derivatives for problems that have them. They must agree
/// with the tape.
pub trait AnalyticDerivatives {
    fn value(&self, theta: &[f64]) -> f64;
    fn gradient(&self, theta: &[f64]) -> Vec<f64>;
    fn hvp(&self, theta: &[f64], z: &[f64]) -> Vec<f64>;
}

/// A scalar loss `L(theta)` over `dim()` parameters, recorded onto a
/// [`Graph`] so it can be differentiated twice.
pub trait DifferentiableProblem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Sizes of the parameter groups (one per model tensor), in order.
    fn groups(&self) -> Vec<usize> {
        vec![self.dim()]
    }

    /// Number of data samples for stochastic problems.
    fn num_samples(&self) -> Option<usize> {
        None
    }

    /// Records the loss for `batch` given the flat parameter column `theta`.
    fn record_loss(&self, graph: &mut Graph, theta: Var, batch: &Batch) -> Var;

    /// Default starting point.
    fn initial_point(&self, seed: u64) -> ParamVector;

    /// Finite-difference step for oracle checks.
    fn fd_step(&self) -> f64 {
        1e-5
    }

    fn analytic(&self) -> Option<&dyn AnalyticDerivatives> {
        None
    }
}

fn check_inputs(problem: &dyn DifferentiableProblem, theta: &ParamVector, batch: &Batch) -> Result<()> {
    theta.expect_len(problem.dim(), "theta")?;
    batch.validate(problem.num_samples())
}

fn check_graph(graph: &Graph) -> Result<()> {
    match graph.first_non_finite() {
        Some(n) => Err(Error::NonFiniteOp { op: n.op, node: n.node }),
        None => Ok(()),
    }
}

/// Loss of `problem` at `theta` on `batch`.
pub fn evaluate(problem: &dyn DifferentiableProblem, theta: &ParamVector, batch: &Batch) -> Result<f64> {
    check_inputs(problem, theta, batch)?;
    let mut graph = Graph::new();
    let t = graph.constant(Tensor::column(theta.as_slice().to_vec()));
    let loss = problem.record_loss(&mut graph, t, batch);
    check_graph(&graph)?;
    Ok(graph.value(loss).item())
}

pub fn value_and_gradient(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
) -> Result<(f64, ParamVector)> {
    check_inputs(problem, theta, batch)?;
    let mut graph = Graph::new();
    let t = graph.param(Tensor::column(theta.as_slice().to_vec()));
    let loss = problem.record_loss(&mut graph, t, batch);
    check_graph(&graph)?;
    let g = graph.grad(loss, &[t])[0];
    check_graph(&graph)?;
    Ok((
        graph.value(loss).item(),
        ParamVector::checked(graph.value(g).data().to_vec(), "gradient")?,
    ))
}

pub fn gradient(problem: &dyn DifferentiableProblem, theta: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    value_and_gradient(problem, theta, batch).map(|(_, g)| g)
}

/// `H z` for the Hessian of the loss on `batch` at `theta`.
pub fn hvp(
    problem: &dyn DifferentiableProblem,
    theta: &ParamVector,
    batch: &Batch,
    z: &ParamVector,
) -> Result<ParamVector> {
    let mut tape = SecondOrderTape::record(problem, theta, batch)?;
    tape.hvp(z.as_slice())
}

/// Anything that can multiply its (symmetric) Hessian by a vector.
pub trait HessianOperator {
    fn dim(&self) -> usize;
    fn apply(&mut self, z: &[f64]) -> Result<Vec<f64>>;
}

/// One recorded loss and gradient at a fixed point and batch, from which
/// any number of Hessian-vector products can be taken. Every product uses
/// the same batch as the gradient.
pub struct SecondOrderTape {
    graph: Graph,
    theta: Var,
    loss: Var,
    grad: Var,
    dim: usize,
}

impl SecondOrderTape {
    pub fn record(problem: &dyn DifferentiableProblem, theta: &ParamVector, batch: &Batch) -> Result<Self> {
        check_inputs(problem, theta, batch)?;
        let mut graph = Graph::new();
        let t = graph.param(Tensor::column(theta.as_slice().to_vec()));
        let loss = problem.record_loss(&mut graph, t, batch);
        check_graph(&graph)?;
        let grad = graph.grad(loss, &[t])[0];
        check_graph(&graph)?;
        Ok(Self {
            graph,
            theta: t,
            loss,
            grad,
            dim: theta.len(),
        })
    }

    pub fn loss(&self) -> f64 {
        self.graph.value(self.loss).item()
    }

    pub fn gradient(&self) -> Result<ParamVector> {
        ParamVector::checked(self.graph.value(self.grad).data().to_vec(), "gradient")
    }

    /// Differentiates `g . z` with `z` held constant.
    pub fn hvp(&mut self, z: &[f64]) -> Result<ParamVector> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: "hvp direction",
                expected: self.dim,
                got: z.len(),
            });
        }
        let zc = self.graph.constant(Tensor::column(z.to_vec()));
        let gz = self.graph.mul(self.grad, zc);
        let s = self.graph.sum_all(gz);
        let hz = self.graph.grad(s, &[self.theta])[0];
        check_graph(&self.graph)?;
        ParamVector::checked(self.graph.value(hz).data().to_vec(), "hessian-vector product")
    }
}

impl HessianOperator for SecondOrderTape {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        self.hvp(z).map(ParamVector::into_vec)
    }
}
