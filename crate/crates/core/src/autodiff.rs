//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass in execution
//! order. Leaves are registered either as trainable ([`Tape::param`]) or as
//! constants ([`Tape::constant`]); adjoints are only propagated into nodes
//! that transitively depend on a trainable leaf. The tape is meant to be
//! rebuilt for every forward pass, because the learned adjacency changes
//! from step to step.

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Smoothing term under the square root of the distance adjoint.
pub const DISTANCE_EPS: f64 = 1e-12;
/// Guard added to row sums before degree normalization.
pub const DEGREE_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    ScaleBy(Var, Var),
    ScalarMinus(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    PairwiseEuclidean(Var),
    RowNormalize {
        input: Var,
        denom: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Matrix,
        labels: Vec<usize>,
        rows: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of the operations executed during one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by one call to [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    visited: usize,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`, or `None` when `var` does not
    /// influence the loss through any trainable path.
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but materializes zeros of the given shape.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Matrix {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    /// Number of recorded operations whose adjoint was replayed.
    pub fn visited(&self) -> usize {
        self.visited
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Registers a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, op, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn expect_scalar(&self, op: &'static str, s: Var) -> Result<()> {
        if self.shape(s) != (1, 1) {
            return Err(Error::shape(op, self.shape(s), (1, 1)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Multiplication by a constant.
    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), &[a])
    }

    /// Adds the `1×q` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (n, q) = self.shape(x);
        if self.shape(bias) != (1, q) {
            return Err(Error::shape("add_row", (n, q), self.shape(bias)));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).as_slice();
        for i in 0..n {
            for (v, bj) in value.row_mut(i).iter_mut().zip(b) {
                *v += bj;
            }
        }
        Ok(self.push(value, Op::AddRow(x, bias), &[x, bias]))
    }

    /// `x * s` for a recorded `1×1` scalar `s`.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        self.expect_scalar("scale_by", s)?;
        let c = self.value(s).item();
        let value = self.value(x).map(|v| v * c);
        Ok(self.push(value, Op::ScaleBy(x, s), &[x, s]))
    }

    /// `s - x` elementwise for a recorded `1×1` scalar `s`.
    pub fn scalar_minus(&mut self, s: Var, x: Var) -> Result<Var> {
        self.expect_scalar("scalar_minus", s)?;
        let c = self.value(s).item();
        let value = self.value(x).map(|v| c - v);
        Ok(self.push(value, Op::ScalarMinus(s, x), &[s, x]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let value = self.value(x).map(softplus);
        self.push(value, Op::Softplus(x), &[x])
    }

    /// `N×N` matrix of Euclidean distances between the rows of `e`.
    ///
    /// Values are exact (zero on the diagonal); the adjoint divides by
    /// `sqrt(d² + DISTANCE_EPS)` so coincident rows get a zero gradient.
    pub fn pairwise_euclidean(&mut self, e: Var) -> Var {
        let value = pairwise_distances(self.value(e));
        self.push(value, Op::PairwiseEuclidean(e), &[e])
    }

    /// `D⁻¹A` where `d_ii = Σ_j a_ij + DEGREE_EPS`.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        let mut denom = Vec::with_capacity(m.rows());
        for i in 0..m.rows() {
            let d = m.row(i).iter().sum::<f64>() + DEGREE_EPS;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::ZeroDegree { node: i });
            }
            denom.push(d);
        }
        let mut value = m.clone();
        for (i, d) in denom.iter().enumerate() {
            for v in value.row_mut(i) {
                *v /= d;
            }
        }
        Ok(self.push(value, Op::RowNormalize { input: a, denom }, &[a]))
    }

    /// Mean softmax cross-entropy over the rows selected by `mask`.
    pub fn row_softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (n, c) = self.shape(logits);
        if labels.len() != n || mask.len() != n {
            return Err(Error::Contract(format!(
                "cross-entropy over {n} rows given {} labels and a mask of {}",
                labels.len(),
                mask.len()
            )));
        }
        let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::Contract("cross-entropy mask selects no rows".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| labels[i] >= c) {
            return Err(Error::Contract(format!(
                "label {} at row {bad} is out of range for {c} classes",
                labels[bad]
            )));
        }
        let probs = softmax_rows(self.value(logits));
        let mut total = 0.0;
        for &i in &rows {
            let row = self.value(logits).row(i);
            total += log_sum_exp(row) - row[labels[i]];
        }
        let loss = Matrix::scalar(total / rows.len() as f64);
        Ok(self.push(
            loss,
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
                rows,
            },
            &[logits],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::concat_rows(&mats)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let n = self.shape(x).0;
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Contract(format!(
                "gather index {bad} out of range for {n} rows"
            )));
        }
        let value = self.value(x).gather_rows(indices);
        Ok(self.push(value, Op::GatherRows(x, indices.to_vec()), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    /// `Σ x²`.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).as_slice().iter().map(|v| v * v).sum());
        self.push(value, Op::SumSquares(x), &[x])
    }

    /// Replays adjoints from the scalar `loss` back to the leaves.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut visited = 0;

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !matches!(node.op, Op::Leaf) {
                visited += 1;
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, visited })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.matmul_t(self.value(*b))?);
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (b, v) in gb.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *b += v;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::ScaleBy(x, s) => {
                let c = self.value(*s).item();
                if self.wants(*x) {
                    self.accumulate(grads, *x, g.map(|v| v * c));
                }
                if self.wants(*s) {
                    let gs = dot(g.as_slice(), self.value(*x).as_slice());
                    self.accumulate(grads, *s, Matrix::scalar(gs));
                }
            }
            Op::ScalarMinus(s, x) => {
                if self.wants(*s) {
                    self.accumulate(grads, *s, Matrix::scalar(g.sum()));
                }
                self.accumulate(grads, *x, g.map(|v| -v));
            }
            Op::Relu(x) => {
                let d = g.zip_map(self.value(*x), |g, v| if v > 0.0 { g } else { 0.0 });
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = g.zip_map(&node.value, |g, y| g * (1.0 - y * y));
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let d = g.zip_map(&node.value, |g, y| g * y * (1.0 - y));
                self.accumulate(grads, *x, d);
            }
            Op::Softplus(x) => {
                let d = g.zip_map(self.value(*x), |g, v| g * sigmoid(v));
                self.accumulate(grads, *x, d);
            }
            Op::PairwiseEuclidean(e) => {
                let e_val = self.value(*e);
                let dist = &node.value;
                let n = dist.rows();
                // coef_ij = (g_ij + g_ji) / sqrt(d_ij² + eps); ge = diag(Σ_j coef)·E − C·E
                let mut coef = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            let d = dist[(i, j)];
                            coef[(i, j)] = (g[(i, j)] + g[(j, i)]) / (d * d + DISTANCE_EPS).sqrt();
                        }
                    }
                }
                let mut ge = coef.matmul(e_val)?;
                for i in 0..n {
                    let s: f64 = coef.row(i).iter().sum();
                    for (o, &x) in ge.row_mut(i).iter_mut().zip(e_val.row(i)) {
                        *o = s * x - *o;
                    }
                }
                self.accumulate(grads, *e, ge);
            }
            Op::RowNormalize { input, denom } => {
                let p = &node.value;
                let mut ga = Matrix::zeros(p.rows(), p.cols());
                for (i, d) in denom.iter().enumerate() {
                    let gi = g.row(i);
                    let inner = dot(gi, p.row(i));
                    for (o, &gij) in ga.row_mut(i).iter_mut().zip(gi) {
                        *o = (gij - inner) / d;
                    }
                }
                self.accumulate(grads, *input, ga);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels,
                rows,
            } => {
                let scale = g.item() / rows.len() as f64;
                let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                for &i in rows {
                    for (o, &p) in gl.row_mut(i).iter_mut().zip(probs.row(i)) {
                        *o = p * scale;
                    }
                    gl[(i, labels[i])] -= scale;
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &part in parts {
                    let rows = self.shape(part).0;
                    if self.wants(part) {
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        self.accumulate(grads, part, g.gather_rows(&idx));
                    }
                    offset += rows;
                }
            }
            Op::GatherRows(x, indices) => {
                let (n, c) = self.shape(*x);
                let mut gx = Matrix::zeros(n, c);
                for (r, &i) in indices.iter().enumerate() {
                    for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let (n, c) = self.shape(*x);
                self.accumulate(grads, *x, Matrix::filled(n, c, g.item()));
            }
            Op::SumSquares(x) => {
                let c = 2.0 * g.item();
                self.accumulate(grads, *x, self.value(*x).map(|v| c * v));
            }
        }
        Ok(())
    }
}

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let z = x.exp();
        z / (1.0 + z)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inverse(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp()).ln_1p()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// Plain value-level pairwise Euclidean distance matrix.
pub fn pairwise_distances(e: &Matrix) -> Matrix {
    let n = e.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        let ei = e.row(i);
        for j in (i + 1)..n {
            let s: f64 = ei
                .iter()
                .zip(e.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let d = s.sqrt();
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let m = Matrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64);
        let i3 = tape.constant(Matrix::identity(3));
        let mv = tape.constant(m.clone());
        let out = tape.matmul(i3, mv).unwrap();
        assert_eq!(tape.value(out), &m);
    }

    #[test]
    fn three_four_five() {
        let mut tape = Tape::new();
        let e = tape.constant(Matrix::from_rows(&[[0.0, 0.0], [3.0, 4.0]]));
        let d = tape.pairwise_euclidean(e);
        assert_eq!(tape.value(d)[(0, 1)], 5.0);
        assert_eq!(tape.value(d)[(1, 0)], 5.0);
        assert_eq!(tape.value(d)[(0, 0)], 0.0);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() <= 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        // 1 / (1 + e^-2) = 0.8807970779778823
        assert!((sigmoid(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-3, 0.5, 2.0, 30.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
        assert!(softplus(1e3).is_finite());
        assert!(softplus(-1e3) >= 0.0);
    }

    #[test]
    fn sum_gives_ones() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::from_fn(2, 3, |i, j| i as f64 - j as f64));
        let loss = tape.sum(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Matrix::filled(2, 3, 1.0));
        assert_eq!(grads.get(loss).unwrap().item(), 1.0);
    }

    #[test]
    fn sum_squares_gives_twice() {
        let mut tape = Tape::new();
        let wm = Matrix::from_fn(3, 3, |i, j| (i as f64 - 1.0) * (j as f64 + 0.5));
        let w = tape.param(wm.clone());
        let loss = tape.sum_squares(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &wm.map(|v| 2.0 * v));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::zeros(2, 2));
        let r = tape.relu(w);
        assert!(matches!(tape.backward(r), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::filled(2, 2, 1.0));
        let w = tape.param(Matrix::filled(2, 1, 0.5));
        let y = tape.matmul(x, w).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(x).is_none());
        assert!(grads.get(w).is_some());
    }

    #[test]
    fn each_op_replayed_once() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::filled(2, 2, 0.3));
        let a = tape.tanh(w);
        let b = tape.mul(a, a).unwrap();
        let c = tape.add(b, w).unwrap();
        let loss = tape.sum(c);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.visited(), 4);
    }

    #[test]
    fn row_normalize_rejects_negative_mass() {
        let mut tape = Tape::new();
        let a = tape.param(Matrix::from_rows(&[[1.0, 1.0], [-1.0, 0.0]]));
        assert!(matches!(
            tape.row_normalize(a),
            Err(Error::ZeroDegree { node: 1 })
        ));
    }

    #[test]
    fn cross_entropy_checks_mask() {
        let mut tape = Tape::new();
        let l = tape.param(Matrix::zeros(2, 3));
        assert!(tape
            .row_softmax_cross_entropy(l, &[0, 1], &[false, false])
            .is_err());
        assert!(tape
            .row_softmax_cross_entropy(l, &[0, 3], &[true, true])
            .is_err());
        let loss = tape
            .row_softmax_cross_entropy(l, &[0, 1], &[true, true])
            .unwrap();
        assert!((tape.value(loss).item() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax_rows(&Matrix::from_rows(&[[1e3, -1e3, 0.0]]));
        assert!(p.is_finite());
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }
}
