//! The end-to-end model: embed → soft adjacency → GC layers → head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::gcn::{GcnParams, GcnVars};
use crate::latent_graph::{
    embed, init_edge_params, soft_adjacency, DenseVars, EdgeParams, EdgeVars, EmbedderParams,
};
use crate::matrix::Matrix;

/// Layer widths of the model, independent of the data dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden widths of the embedding MLP.
    pub embed_hidden: Vec<usize>,
    /// Output width `k` of the embedding MLP.
    pub embed_dim: usize,
    /// Output widths of the GC layers.
    pub gc_widths: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            embed_hidden: vec![64],
            embed_dim: 16,
            gc_widths: vec![16, 8],
        }
    }
}

/// Every trainable value of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub embedder: EmbedderParams,
    pub edge: EdgeParams,
    pub gcn: GcnParams,
}

/// Graph used by the GC layers.
#[derive(Clone, Copy, Debug)]
pub enum Graph<'a> {
    /// Learned from the features through the embedder and edge parameters.
    Latent,
    /// A fixed adjacency over the input rows; embedder and edge parameters
    /// are ignored.
    Fixed(&'a Matrix),
}

impl ModelParams {
    /// Glorot-initialized parameters; the edge parameters are fit to the
    /// initial embedding of `x`.
    pub fn init<R: Rng + ?Sized>(
        arch: &Architecture,
        x: &Matrix,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = Vec::with_capacity(arch.embed_hidden.len() + 2);
        widths.push(x.cols());
        widths.extend_from_slice(&arch.embed_hidden);
        widths.push(arch.embed_dim);
        let embedder = EmbedderParams::new(&widths, rng)?;
        let gcn = GcnParams::new(x.cols(), &arch.gc_widths, classes, rng)?;
        let edge = init_edge_params(&embedder.embed_values(x)?);
        Ok(ModelParams {
            embedder,
            edge,
            gcn,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.embedder.input_dim()
    }

    pub fn classes(&self) -> usize {
        self.gcn.classes()
    }

    /// Mutable views of every parameter buffer, in a fixed order shared
    /// with [`ModelVars::params`].
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.embedder.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(std::slice::from_mut(&mut self.edge.raw_temperature));
        out.push(std::slice::from_mut(&mut self.edge.threshold));
        for w in &mut self.gcn.layers {
            out.push(w.as_mut_slice());
        }
        out.push(self.gcn.head.weight.as_mut_slice());
        out.push(self.gcn.head.bias.as_mut_slice());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.clone().slices_mut().iter().map(|s| s.len()).sum()
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.clone()
            .slices_mut()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> ModelVars {
        ModelVars {
            embedder: self.embedder.record(tape, trainable),
            edge: self.edge.record(tape, trainable),
            gcn: self.gcn.record(tape, trainable),
        }
    }

    fn check_input(&self, x: &Matrix, graph: Graph<'_>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(
                "model input",
                x.shape(),
                (x.rows(), self.input_dim()),
            ));
        }
        if let Graph::Fixed(a) = graph {
            if a.shape() != (x.rows(), x.rows()) {
                return Err(Error::shape("fixed graph", a.shape(), (x.rows(), x.rows())));
            }
        }
        Ok(())
    }
}

/// Tape handles of the recorded parameters.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub embedder: Vec<DenseVars>,
    pub edge: EdgeVars,
    pub gcn: GcnVars,
}

impl ModelVars {
    /// Parameter handles in the order of [`ModelParams::slices_mut`].
    pub fn params(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.embedder {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.edge.raw_temperature);
        out.push(self.edge.threshold);
        out.extend_from_slice(&self.gcn.layers);
        out.push(self.gcn.head.weight);
        out.push(self.gcn.head.bias);
        out
    }

    /// Gradients of every parameter (zeros where none flowed).
    pub fn gradients(&self, tape: &Tape, grads: &Gradients) -> Vec<Matrix> {
        self.params()
            .into_iter()
            .map(|v| grads.get_or_zeros(v, tape.shape(v)))
            .collect()
    }
}

/// A recorded forward pass.
pub struct ForwardPass {
    pub tape: Tape,
    pub vars: ModelVars,
    pub features: Var,
    pub adjacency: Var,
    pub logits: Var,
}

impl ForwardPass {
    pub fn logits(&self) -> &Matrix {
        self.tape.value(self.logits)
    }

    pub fn adjacency(&self) -> &Matrix {
        self.tape.value(self.adjacency)
    }
}

/// Runs the model over the rows of `x`. One adjacency is built per pass
/// and shared by every GC layer.
pub fn forward(
    x: &Matrix,
    params: &ModelParams,
    graph: Graph<'_>,
    trainable: bool,
) -> Result<ForwardPass> {
    params.check_input(x, graph)?;
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, trainable);
    let features = tape.constant(x.clone());
    let adjacency = match graph {
        Graph::Latent => {
            let e = embed(&mut tape, features, &params.embedder, &vars.embedder)?;
            soft_adjacency(&mut tape, e, &vars.edge)?
        }
        Graph::Fixed(a) => tape.constant(a.clone()),
    };
    let propagation = tape.row_normalize(adjacency)?;
    let logits = vars.gcn.apply(&mut tape, propagation, features)?;
    Ok(ForwardPass {
        tape,
        vars,
        features,
        adjacency,
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameter_order_matches_vars() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::uniform(5, 4, 1.0, &mut rng);
        let mut p = ModelParams::init(&Architecture::default(), &x, 3, &mut rng).unwrap();
        let pass = forward(&x, &p, Graph::Latent, true).unwrap();
        let vars = pass.vars.params();
        let slices = p.slices_mut();
        assert_eq!(vars.len(), slices.len());
        for (v, s) in vars.iter().zip(&slices) {
            assert_eq!(pass.tape.value(*v).as_slice(), &s[..]);
        }
    }

    #[test]
    fn single_node_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::uniform(1, 3, 1.0, &mut rng);
        let p = ModelParams::init(&Architecture::default(), &x, 2, &mut rng).unwrap();
        let pass = forward(&x, &p, Graph::Latent, false).unwrap();
        assert!(pass.logits().is_finite());
        // self-loop only: D⁻¹A = 1, so the GC stack reduces to relu(x·W)
        let mut h = x.clone();
        for w in &p.gcn.layers {
            h = h.matmul(w).unwrap().map(|v| v.max(0.0));
        }
        let expected = h.matmul(&p.gcn.head.weight).unwrap();
        for (a, b) in pass.logits().as_slice().iter().zip(expected.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::uniform(3, 3, 1.0, &mut rng);
        let p = ModelParams::init(&Architecture::default(), &x, 2, &mut rng).unwrap();
        assert!(forward(&Matrix::zeros(3, 4), &p, Graph::Latent, false).is_err());
        let bad = Matrix::identity(2);
        assert!(forward(&x, &p, Graph::Fixed(&bad), false).is_err());
    }
}
