//! Reverse-mode differentiation of scalar losses, including exact
//! Hessian-vector products by differentiating `g . z` a second time.

mod graph;
mod problem;
mod tensor;

pub use graph::{Graph, NonFiniteNode, Var};
pub use problem::{
    evaluate, gradient, hvp, value_and_gradient, AnalyticDerivatives, Batch, DifferentiableProblem, HessianOperator,
    SecondOrderTape,
};
pub use tensor::Tensor;
