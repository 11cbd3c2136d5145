//! Eagerly evaluated computation graph with a differentiable backward pass.
//!
//! Every operation is evaluated when it is recorded, so node values are
//! always available. [`Graph::grad`] records the adjoint computation on the
//! same graph using ordinary graph operations, which means the returned
//! gradient nodes can themselves be differentiated. A Hessian-vector product
//! is obtained by differentiating the scalar `g . z` a second time, with `z`
//! recorded as a constant.

use super::tensor::{sigmoid, softplus, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    BroadcastRows(Var),
    SumRows(Var),
    BroadcastCols(Var),
    SumCols(Var),
    SumAll(Var),
    Expand(Var),
    Tanh(Var),
    Sin(Var),
    Cos(Var),
    Exp(Var),
    Relu(Var),
    /// Indicator `x > 0`. Zero derivative everywhere.
    Step,
    Sigmoid(Var),
    Softplus(Var),
    LogSumExpRows(Var),
    SoftmaxRows(Var),
    /// Reads `rows * cols` consecutive entries starting at `offset`.
    Slice {
        src: Var,
        offset: usize,
    },
    /// Writes a tensor into a zero column vector at `offset`.
    Embed {
        src: Var,
        offset: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::BroadcastRows(_) => "broadcast_rows",
            Op::SumRows(_) => "sum_rows",
            Op::BroadcastCols(_) => "broadcast_cols",
            Op::SumCols(_) => "sum_cols",
            Op::SumAll(_) => "sum_all",
            Op::Expand(_) => "expand",
            Op::Tanh(_) => "tanh",
            Op::Sin(_) => "sin",
            Op::Cos(_) => "cos",
            Op::Exp(_) => "exp",
            Op::Relu(_) => "relu",
            Op::Step => "step",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::LogSumExpRows(_) => "log_sum_exp_rows",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Slice { .. } => "slice",
            Op::Embed { .. } => "embed",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// First node whose value contained NaN or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NonFiniteNode {
    pub node: usize,
    pub op: &'static str,
}

/// Topologically ordered record of a computation. Inputs of a node always
/// precede it.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    first_non_finite: Option<NonFiniteNode>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// The earliest node that evaluated to a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<NonFiniteNode> {
        self.first_non_finite
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.first_non_finite.is_none() && !value.is_finite() {
            self.first_non_finite = Some(NonFiniteNode {
                node: id,
                op: op.name(),
            });
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(id)
    }

    fn unary(&mut self, op: Op, a: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad;
        self.push(op, value, rg)
    }

    fn binary(&mut self, op: Op, a: Var, b: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(op, value, rg)
    }

    /// A differentiable input.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// A constant input; gradients never flow into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.binary(Op::Add(a, b), a, b, v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.binary(Op::Sub(a, b), a, b, v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.binary(Op::Mul(a, b), a, b, v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.unary(Op::Neg(a), a, v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.unary(Op::Scale(a, c), a, v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.binary(Op::MatMul(a, b), a, b, v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(Op::Transpose(a), a, v)
    }

    /// Repeats a `1 x m` row `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let v = self.value(a).broadcast_rows(rows);
        self.unary(Op::BroadcastRows(a), a, v)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_rows();
        self.unary(Op::SumRows(a), a, v)
    }

    /// Repeats an `n x 1` column `cols` times.
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Var {
        let v = self.value(a).broadcast_cols(cols);
        self.unary(Op::BroadcastCols(a), a, v)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_cols();
        self.unary(Op::SumCols(a), a, v)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.unary(Op::SumAll(a), a, v)
    }

    /// Broadcasts a `1 x 1` tensor to `rows x cols`.
    pub fn expand(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = Tensor::filled(rows, cols, self.value(a).item());
        self.unary(Op::Expand(a), a, v)
    }

    /// Adds a `1 x m` bias row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let rows = self.shape(a).0;
        let b = self.broadcast_rows(row, rows);
        self.add(a, b)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(Op::Tanh(a), a, v)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sin);
        self.unary(Op::Sin(a), a, v)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::cos);
        self.unary(Op::Cos(a), a, v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(Op::Exp(a), a, v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(Op::Relu(a), a, v)
    }

    fn step(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        self.push(Op::Step, v, false)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.unary(Op::Sigmoid(a), a, v)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.unary(Op::Softplus(a), a, v)
    }

    /// Row-wise `log(sum(exp(row)))`, giving an `n x 1` column.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).log_sum_exp_rows();
        self.unary(Op::LogSumExpRows(a), a, v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).softmax_rows();
        self.unary(Op::SoftmaxRows(a), a, v)
    }

    /// Views `rows * cols` consecutive entries of `src` (read in row-major
    /// order) starting at `offset` as a `rows x cols` tensor.
    pub fn slice(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let data = self.value(src).data()[offset..offset + rows * cols].to_vec();
        self.unary(Op::Slice { src, offset }, src, Tensor::new(rows, cols, data))
    }

    fn embed(&mut self, src: Var, offset: usize, len: usize) -> Var {
        let mut data = vec![0.0; len];
        let s = self.value(src).data();
        data[offset..offset + s.len()].copy_from_slice(s);
        self.unary(Op::Embed { src, offset }, src, Tensor::column(data))
    }

    fn accumulate(&mut self, adjoints: &mut [Option<Var>], target: Var, contribution: Var) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        adjoints[target.0] = Some(match adjoints[target.0] {
            Some(prev) => self.add(prev, contribution),
            None => contribution,
        });
    }

    /// Reverse-mode gradient of the scalar `output` with respect to each of
    /// `wrt`. The adjoint computation is recorded on this graph, so the
    /// returned nodes are differentiable again. Inputs that do not influence
    /// `output` get a constant zero gradient.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Var> {
        assert_eq!(self.shape(output), (1, 1), "grad requires a scalar output");
        let mut adjoints: Vec<Option<Var>> = vec![None; output.0 + 1];
        let seed = self.constant(Tensor::scalar(1.0));
        adjoints[output.0] = Some(seed);

        for i in (0..=output.0).rev() {
            let Some(ga) = adjoints[i] else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let y = Var(i);
            match self.nodes[i].op {
                Op::Leaf | Op::Step => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoints, a, ga);
                    self.accumulate(&mut adjoints, b, ga);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoints, a, ga);
                    if self.requires_grad(b) {
                        let nb = self.neg(ga);
                        self.accumulate(&mut adjoints, b, nb);
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(a) {
                        let da = self.mul(ga, b);
                        self.accumulate(&mut adjoints, a, da);
                    }
                    if self.requires_grad(b) {
                        let db = self.mul(ga, a);
                        self.accumulate(&mut adjoints, b, db);
                    }
                }
                Op::Neg(a) => {
                    let d = self.neg(ga);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Scale(a, c) => {
                    let d = self.scale(ga, c);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::MatMul(a, b) => {
                    if self.requires_grad(a) {
                        let bt = self.transpose(b);
                        let da = self.matmul(ga, bt);
                        self.accumulate(&mut adjoints, a, da);
                    }
                    if self.requires_grad(b) {
                        let at = self.transpose(a);
                        let db = self.matmul(at, ga);
                        self.accumulate(&mut adjoints, b, db);
                    }
                }
                Op::Transpose(a) => {
                    let d = self.transpose(ga);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::BroadcastRows(a) => {
                    let d = self.sum_rows(ga);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::SumRows(a) => {
                    let rows = self.shape(a).0;
                    let d = self.broadcast_rows(ga, rows);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::BroadcastCols(a) => {
                    let d = self.sum_cols(ga);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::SumCols(a) => {
                    let cols = self.shape(a).1;
                    let d = self.broadcast_cols(ga, cols);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(a);
                    let d = self.expand(ga, r, c);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Expand(a) => {
                    let d = self.sum_all(ga);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Tanh(a) => {
                    // ga * (1 - y^2)
                    let gy = self.mul(ga, y);
                    let gyy = self.mul(gy, y);
                    let d = self.sub(ga, gyy);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Sin(a) => {
                    let c = self.cos(a);
                    let d = self.mul(ga, c);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Cos(a) => {
                    let s = self.sin(a);
                    let gs = self.mul(ga, s);
                    let d = self.neg(gs);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Exp(a) => {
                    let d = self.mul(ga, y);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Relu(a) => {
                    let mask = self.step(a);
                    let d = self.mul(ga, mask);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Sigmoid(a) => {
                    // ga * (y - y^2)
                    let yy = self.mul(y, y);
                    let dy = self.sub(y, yy);
                    let d = self.mul(ga, dy);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Softplus(a) => {
                    let s = self.sigmoid(a);
                    let d = self.mul(ga, s);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::LogSumExpRows(a) => {
                    let cols = self.shape(a).1;
                    let s = self.softmax_rows(a);
                    let gb = self.broadcast_cols(ga, cols);
                    let d = self.mul(gb, s);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::SoftmaxRows(a) => {
                    // y * (ga - rowsum(ga * y))
                    let cols = self.shape(a).1;
                    let gy = self.mul(ga, y);
                    let rs = self.sum_cols(gy);
                    let rb = self.broadcast_cols(rs, cols);
                    let centered = self.sub(ga, rb);
                    let d = self.mul(y, centered);
                    self.accumulate(&mut adjoints, a, d);
                }
                Op::Slice { src, offset } => {
                    let len = self.value(src).len();
                    let d = self.embed(ga, offset, len);
                    // Slices of matrices are only taken from column vectors.
                    debug_assert_eq!(self.shape(src).1, 1);
                    self.accumulate(&mut adjoints, src, d);
                }
                Op::Embed { src, offset } => {
                    let (r, c) = self.shape(src);
                    let d = self.slice(ga, offset, r, c);
                    self.accumulate(&mut adjoints, src, d);
                }
            }
        }

        wrt.iter()
            .map(|&w| match adjoints.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.shape(w);
                    self.constant(Tensor::zeros(r, c))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn square_first_and_second_derivative() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x);
        let dy = g.grad(y, &[x])[0];
        assert_eq!(g.value(dy).item(), 6.0);
        let d2 = g.grad(dy, &[x])[0];
        assert_eq!(g.value(d2).item(), 2.0);
    }

    #[test]
    fn sin_second_derivative() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.7));
        let y = g.sin(x);
        let dy = g.grad(y, &[x])[0];
        let d2 = g.grad(dy, &[x])[0];
        assert!(close(g.value(dy).item(), 0.7f64.cos()));
        assert!(close(g.value(d2).item(), -0.7f64.sin()));
    }

    #[test]
    fn tanh_and_sigmoid_second_derivatives() {
        let x0 = 0.4f64;
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(x0));
        let y = g.tanh(x);
        let dy = g.grad(y, &[x])[0];
        let d2 = g.grad(dy, &[x])[0];
        let t = x0.tanh();
        assert!(close(g.value(dy).item(), 1.0 - t * t));
        assert!(close(g.value(d2).item(), -2.0 * t * (1.0 - t * t)));

        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(x0));
        let y = g.softplus(x);
        let dy = g.grad(y, &[x])[0];
        let d2 = g.grad(dy, &[x])[0];
        let s = sigmoid(x0);
        assert!(close(g.value(dy).item(), s));
        assert!(close(g.value(d2).item(), s * (1.0 - s)));
    }

    #[test]
    fn relu_is_locally_linear() {
        let mut g = Graph::new();
        let x = g.param(Tensor::column(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        let rr = g.mul(r, r);
        let s = g.sum_all(rr);
        let dx = g.grad(s, &[x])[0];
        assert_eq!(g.value(dx).data(), &[0.0, 0.0, 4.0]);
        let sd = g.sum_all(dx);
        let d2 = g.grad(sd, &[x])[0];
        assert_eq!(g.value(d2).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn unrelated_input_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1.0));
        let z = g.param(Tensor::column(vec![1.0, 2.0]));
        let y = g.mul(x, x);
        let grads = g.grad(y, &[x, z]);
        assert_eq!(g.value(grads[1]).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_node_is_reported() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(1000.0));
        let e = g.exp(x);
        let _ = g.scale(e, 2.0);
        assert_eq!(g.first_non_finite(), Some(NonFiniteNode { node: 1, op: "exp" }));
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        // d/dx [lse(x) - x_0] = softmax(x) - e_0
        let mut g = Graph::new();
        let x = g.param(Tensor::new(1, 3, vec![0.1, -0.3, 0.7]));
        let lse = g.log_sum_exp_rows(x);
        let onehot = g.constant(Tensor::new(1, 3, vec![1.0, 0.0, 0.0]));
        let picked = g.mul(x, onehot);
        let ps = g.sum_all(picked);
        let ls = g.sum_all(lse);
        let loss = g.sub(ls, ps);
        let dx = g.grad(loss, &[x])[0];
        let sm = g.value(x).softmax_rows();
        for (i, (&d, &s)) in g.value(dx).data().iter().zip(sm.data()).enumerate() {
            let expected = s - if i == 0 { 1.0 } else { 0.0 };
            assert!(close(d, expected));
        }
    }
}
