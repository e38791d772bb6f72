//! Learned population graph: an MLP embedding `f_φ` followed by a soft
//! threshold on embedded distances.
//!
//! Edge weights are `a_ij = σ(t̂ · (θ̂ − ‖x̃_i − x̃_j‖₂))` with `t̂ = softplus(raw_temperature)`,
//! so weights shrink as embedded distance grows and `θ̂` is the distance at
//! which an edge has weight one half.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{pairwise_distances, softplus, softplus_inverse, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Temperature the edge parameters start from.
pub const INITIAL_TEMPERATURE: f64 = 2.0;

/// Fully connected layer `x·W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Dense {
            weight: Matrix::glorot(fan_in, fan_out, rng),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> DenseVars {
        let leaf = |tape: &mut Tape, m: &Matrix| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        DenseVars {
            weight: leaf(tape, &self.weight),
            bias: leaf(tape, &self.bias),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl DenseVars {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add_row(xw, self.bias)
    }
}

/// Parameters `φ` of the embedding MLP. Hidden layers use `tanh`; the
/// output layer is linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderParams {
    pub layers: Vec<Dense>,
}

impl EmbedderParams {
    /// `widths` lists every layer width including input and output, e.g.
    /// `[d, 64, k]`.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "embedder widths must have at least two positive entries, got {widths:?}"
            )));
        }
        let layers = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(EmbedderParams { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> Vec<DenseVars> {
        self.layers
            .iter()
            .map(|l| l.record(tape, trainable))
            .collect()
    }

    /// Value-level embedding, no gradients.
    pub fn embed_values(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.record(&mut tape, false);
        let xv = tape.constant(x.clone());
        let e = embed(&mut tape, xv, self, &vars)?;
        Ok(tape.value(e).clone())
    }
}

/// Row-wise `x̃_i = f_φ(x_i)`.
pub fn embed(tape: &mut Tape, x: Var, params: &EmbedderParams, vars: &[DenseVars]) -> Result<Var> {
    let d = tape.shape(x).1;
    if d != params.input_dim() {
        return Err(Error::shape(
            "embed",
            tape.shape(x),
            (params.input_dim(), params.output_dim()),
        ));
    }
    let mut h = x;
    let last = params.layers.len() - 1;
    for (l, v) in vars.iter().enumerate() {
        h = v.apply(tape, h)?;
        if l < last {
            h = tape.tanh(h);
        }
    }
    Ok(h)
}

/// Global temperature and threshold of the soft adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    /// Unconstrained; the effective temperature is `softplus(raw_temperature)`.
    pub raw_temperature: f64,
    pub threshold: f64,
}

impl EdgeParams {
    pub fn new(temperature: f64, threshold: f64) -> Self {
        EdgeParams {
            raw_temperature: softplus_inverse(temperature),
            threshold,
        }
    }

    pub fn temperature(&self) -> f64 {
        softplus(self.raw_temperature)
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> EdgeVars {
        let mut leaf = |v: f64| {
            if trainable {
                tape.param(Matrix::scalar(v))
            } else {
                tape.constant(Matrix::scalar(v))
            }
        };
        EdgeVars {
            raw_temperature: leaf(self.raw_temperature),
            threshold: leaf(self.threshold),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EdgeVars {
    pub raw_temperature: Var,
    pub threshold: Var,
}

/// Soft adjacency `σ(t̂ · (θ̂ − d_ij))` over the rows of the embedding `e`.
pub fn soft_adjacency(tape: &mut Tape, e: Var, edge: &EdgeVars) -> Result<Var> {
    let dist = tape.pairwise_euclidean(e);
    let t = tape.softplus(edge.raw_temperature);
    let margin = tape.scalar_minus(edge.threshold, dist)?;
    let z = tape.scale_by(margin, t)?;
    Ok(tape.sigmoid(z))
}

/// Value-level soft adjacency, no gradients.
pub fn soft_adjacency_values(e: &Matrix, edge: &EdgeParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let ev = tape.constant(e.clone());
    let vars = edge.record(&mut tape, false);
    let a = soft_adjacency(&mut tape, ev, &vars)?;
    Ok(tape.value(a).clone())
}

/// Starting edge parameters for the initial embedding `e0`: threshold at
/// the median off-diagonal distance, temperature [`INITIAL_TEMPERATURE`].
pub fn init_edge_params(e0: &Matrix) -> EdgeParams {
    let n = e0.rows();
    if n < 2 {
        return EdgeParams::new(INITIAL_TEMPERATURE, 1.0);
    }
    let dist = pairwise_distances(e0);
    let mut upper: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| dist[(i, j)])
        .collect();
    upper.sort_by(f64::total_cmp);
    EdgeParams::new(INITIAL_TEMPERATURE, median_sorted(&upper))
}

fn median_sorted(v: &[f64]) -> f64 {
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn adjacency_from_distance(d: f64, temperature: f64, threshold: f64) -> f64 {
        let e = Matrix::from_rows(&[[0.0], [d]]);
        soft_adjacency_values(&e, &EdgeParams::new(temperature, threshold)).unwrap()[(0, 1)]
    }

    #[test]
    fn zero_params_embed_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = EmbedderParams::new(&[3, 5, 2], &mut rng).unwrap();
        for l in &mut p.layers {
            l.weight = Matrix::zeros(l.weight.rows(), l.weight.cols());
        }
        let x = Matrix::from_fn(4, 3, |i, j| (i + j) as f64);
        assert_eq!(p.embed_values(&x).unwrap(), Matrix::zeros(4, 2));
    }

    #[test]
    fn identity_layer_embeds_to_inputs() {
        let p = EmbedderParams {
            layers: vec![Dense {
                weight: Matrix::identity(3),
                bias: Matrix::zeros(1, 3),
            }],
        };
        let x = Matrix::from_fn(4, 3, |i, j| i as f64 * 0.3 - j as f64);
        assert_eq!(p.embed_values(&x).unwrap(), x);
    }

    #[test]
    fn embed_width_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = EmbedderParams::new(&[3, 2], &mut rng).unwrap();
        assert!(matches!(
            p.embed_values(&Matrix::zeros(2, 4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn half_weight_at_threshold() {
        for t in [0.1, 2.0, 50.0] {
            assert_eq!(adjacency_from_distance(1.25, t, 1.25), 0.5);
        }
    }

    #[test]
    fn hard_threshold_limit() {
        assert!(adjacency_from_distance(0.9, 500.0, 1.0) > 1.0 - 1e-12);
        assert!(adjacency_from_distance(1.1, 500.0, 1.0) < 1e-12);
    }

    #[test]
    fn reference_edge_weight() {
        // σ(2 · (1.5 − 0.5)) = σ(2) = 0.8807970779778823
        let a = adjacency_from_distance(0.5, 2.0, 1.5);
        assert!((a - 0.880_797_077_977_882_3).abs() < 1e-12, "{a}");
    }

    #[test]
    fn edge_init_cases() {
        let same = Matrix::filled(4, 3, 0.7);
        assert_eq!(init_edge_params(&same).threshold, 0.0);
        let two = Matrix::from_rows(&[[0.0, 0.0], [0.0, 4.0]]);
        let ep = init_edge_params(&two);
        assert_eq!(ep.threshold, 4.0);
        assert!((ep.temperature() - INITIAL_TEMPERATURE).abs() < 1e-12);
        assert_eq!(init_edge_params(&Matrix::zeros(1, 3)).threshold, 1.0);
    }
}
