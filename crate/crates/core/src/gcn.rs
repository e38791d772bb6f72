//! Spatial graph convolution `H' = D⁻¹·A·H·W` and the classification head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::latent_graph::{Dense, DenseVars};
use crate::matrix::Matrix;

/// GC layer weights (no bias) followed by a fully connected head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    pub layers: Vec<Matrix>,
    pub head: Dense,
}

impl GcnParams {
    /// `input_dim → widths[0] → … → widths[L-1] → classes`.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        widths: &[usize],
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || classes == 0 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "invalid GCN shape: input {input_dim}, widths {widths:?}, classes {classes}"
            )));
        }
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &w in widths {
            layers.push(Matrix::glorot(fan_in, w, rng));
            fan_in = w;
        }
        Ok(GcnParams {
            layers,
            head: Dense::glorot(fan_in, classes, rng),
        })
    }

    pub fn classes(&self) -> usize {
        self.head.weight.cols()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> GcnVars {
        let layers = self
            .layers
            .iter()
            .map(|w| {
                if trainable {
                    tape.param(w.clone())
                } else {
                    tape.constant(w.clone())
                }
            })
            .collect();
        GcnVars {
            layers,
            head: self.head.record(tape, trainable),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GcnVars {
    pub layers: Vec<Var>,
    pub head: DenseVars,
}

impl GcnVars {
    /// Applies every GC layer (ReLU after each) over the shared normalized
    /// adjacency, then the head.
    pub fn apply(&self, tape: &mut Tape, propagation: Var, x: Var) -> Result<Var> {
        let mut h = x;
        for &w in &self.layers {
            h = propagate(tape, propagation, h, w)?;
            h = tape.relu(h);
        }
        self.head.apply(tape, h)
    }
}

/// `P·(H·W)` for an already row-normalized `P`.
fn propagate(tape: &mut Tape, propagation: Var, h: Var, w: Var) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    tape.matmul(propagation, hw)
}

/// One spatial GC layer `D⁻¹·A·H·W` with `d_ii = Σ_j a_ij`.
pub fn gc_layer(tape: &mut Tape, adjacency: Var, h: Var, w: Var) -> Result<Var> {
    let (n, m) = tape.shape(adjacency);
    if n != m || n != tape.shape(h).0 {
        return Err(Error::shape("gc_layer", (n, m), tape.shape(h)));
    }
    let p = tape.row_normalize(adjacency)?;
    propagate(tape, p, h, w)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer_value(a: Matrix, h: Matrix, w: Matrix) -> Matrix {
        let mut tape = Tape::new();
        let (a, h, w) = (tape.constant(a), tape.constant(h), tape.constant(w));
        let out = gc_layer(&mut tape, a, h, w).unwrap();
        tape.value(out).clone()
    }

    #[test]
    fn identity_graph_is_plain_linear() {
        let h = Matrix::from_fn(4, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let w = Matrix::from_fn(3, 2, |i, j| 0.25 * (i + j) as f64 + 0.1);
        let out = layer_value(Matrix::identity(4), h.clone(), w.clone());
        let expected = h.matmul(&w).unwrap();
        for (a, b) in out.as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn complete_graph_averages() {
        let h = Matrix::from_fn(5, 2, |i, j| (i * i) as f64 + j as f64);
        let w = Matrix::identity(2);
        let out = layer_value(Matrix::filled(5, 5, 1.0), h.clone(), w);
        let mean = [
            h.column(0).iter().sum::<f64>() / 5.0,
            h.column(1).iter().sum::<f64>() / 5.0,
        ];
        for i in 0..5 {
            for j in 0..2 {
                assert!((out[(i, j)] - mean[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn predict_ties_go_low() {
        assert_eq!(predict(&Matrix::from_rows(&[[0.2, 0.9, 0.1]])), vec![1]);
        assert_eq!(predict(&Matrix::from_rows(&[[0.5, 0.5]])), vec![0]);
    }

    #[test]
    fn gc_layer_rejects_non_square() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::zeros(2, 3));
        let h = tape.constant(Matrix::zeros(2, 1));
        let w = tape.constant(Matrix::zeros(1, 1));
        assert!(gc_layer(&mut tape, a, h, w).is_err());
    }
}
