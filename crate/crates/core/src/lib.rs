//! AdaHessian: a second-order adaptive optimizer built on Hutchinson
//! estimates of the Hessian diagonal, plus first-order baselines, a
//! reverse-mode autodiff tape with exact Hessian-vector products,
//! brute-force verification oracles and an experiment harness.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod hutchinson;
pub mod optim;
pub mod oracle;
pub mod param;
pub mod problems;

pub use error::{Error, Result};
pub use param::{BlockSpec, ParamVector};
