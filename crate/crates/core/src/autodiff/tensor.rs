/// Row-major dense matrix of `f64`. Vectors are `n x 1`, scalars `1 x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor shape does not match data");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, vec![value])
    }

    pub fn column(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(n, 1, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Value of a `1 x 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Tensor::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub(crate) fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(n, m, out)
    }

    pub(crate) fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor::new(self.cols, self.rows, out)
    }

    /// Column sums as a `1 x cols` row.
    pub(crate) fn sum_rows(&self) -> Tensor {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(&self.data[r * self.cols..(r + 1) * self.cols]) {
                *o += v;
            }
        }
        Tensor::new(1, self.cols, out)
    }

    /// Row sums as a `rows x 1` column.
    pub(crate) fn sum_cols(&self) -> Tensor {
        let out = self.data.chunks(self.cols).map(|row| row.iter().sum()).collect();
        Tensor::new(self.rows, 1, out)
    }

    pub(crate) fn broadcast_rows(&self, rows: usize) -> Tensor {
        assert_eq!(self.rows, 1);
        let mut out = Vec::with_capacity(rows * self.cols);
        for _ in 0..rows {
            out.extend_from_slice(&self.data);
        }
        Tensor::new(rows, self.cols, out)
    }

    pub(crate) fn broadcast_cols(&self, cols: usize) -> Tensor {
        assert_eq!(self.cols, 1);
        let mut out = Vec::with_capacity(self.rows * cols);
        for &v in &self.data {
            out.extend(std::iter::repeat_n(v, cols));
        }
        Tensor::new(self.rows, cols, out)
    }

    pub(crate) fn log_sum_exp_rows(&self) -> Tensor {
        let out = self
            .data
            .chunks(self.cols)
            .map(|row| {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
            })
            .collect();
        Tensor::new(self.rows, 1, out)
    }

    pub(crate) fn softmax_rows(&self) -> Tensor {
        let mut out = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(self.cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            out.extend(row.iter().map(|v| (v - max).exp()));
            let total: f64 = out[start..].iter().sum();
            for v in &mut out[start..] {
                *v /= total;
            }
        }
        Tensor::new(self.rows, self.cols, out)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
