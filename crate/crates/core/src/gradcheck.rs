//! Central finite-difference checks of the tape's adjoints.
//!
//! Each operation is reduced to a scalar through a fixed random projection
//! `Σ out ⊙ R`, so every output entry contributes a generic weight to the
//! checked gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::gcn::gc_layer;
use crate::latent_graph::{soft_adjacency, EdgeVars};
use crate::matrix::Matrix;
use crate::model::{forward, Architecture, Graph, ModelParams};
use crate::seeded_rng;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Bound on the relative error of a single operation.
pub const OP_TOLERANCE: f64 = 1e-4;
/// Bound on the relative error through the full model.
pub const END_TO_END_TOLERANCE: f64 = 1e-3;

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or the absolute difference when both
/// norms are below `1e-8`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Central differences of `f` around `at`, one coordinate at a time.
pub fn numeric_gradient<F>(mut f: F, at: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut x = at.to_vec();
    let mut g = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        x[i] = at[i] + h;
        let plus = f(&x)?;
        x[i] = at[i] - h;
        let minus = f(&x)?;
        x[i] = at[i];
        g.push((plus - minus) / (2.0 * h));
    }
    Ok(g)
}

/// Worst relative error observed for one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

type Builder = fn(&mut Tape, &[Var]) -> Result<Var>;

struct OpCase {
    name: &'static str,
    shapes: &'static [(usize, usize)],
    /// Inputs are drawn from `[lo, hi]`.
    range: (f64, f64),
    build: Builder,
}

fn op_cases() -> Vec<OpCase> {
    const R: (f64, f64) = (-2.0, 2.0);
    vec![
        OpCase {
            name: "matmul",
            shapes: &[(4, 5), (5, 3)],
            range: R,
            build: |t, v| t.matmul(v[0], v[1]),
        },
        OpCase {
            name: "add",
            shapes: &[(3, 4), (3, 4)],
            range: R,
            build: |t, v| t.add(v[0], v[1]),
        },
        OpCase {
            name: "sub",
            shapes: &[(3, 4), (3, 4)],
            range: R,
            build: |t, v| t.sub(v[0], v[1]),
        },
        OpCase {
            name: "mul",
            shapes: &[(3, 4), (3, 4)],
            range: R,
            build: |t, v| t.mul(v[0], v[1]),
        },
        OpCase {
            name: "scalar_mul",
            shapes: &[(3, 4)],
            range: R,
            build: |t, v| Ok(t.scalar_mul(v[0], -1.7)),
        },
        OpCase {
            name: "add_row",
            shapes: &[(4, 3), (1, 3)],
            range: R,
            build: |t, v| t.add_row(v[0], v[1]),
        },
        OpCase {
            name: "scale_by",
            shapes: &[(4, 3), (1, 1)],
            range: R,
            build: |t, v| t.scale_by(v[0], v[1]),
        },
        OpCase {
            name: "scalar_minus",
            shapes: &[(1, 1), (4, 3)],
            range: R,
            build: |t, v| t.scalar_minus(v[0], v[1]),
        },
        OpCase {
            name: "relu",
            shapes: &[(4, 4)],
            range: R,
            build: |t, v| Ok(t.relu(v[0])),
        },
        OpCase {
            name: "tanh",
            shapes: &[(4, 4)],
            range: R,
            build: |t, v| Ok(t.tanh(v[0])),
        },
        OpCase {
            name: "sigmoid",
            shapes: &[(4, 4)],
            range: R,
            build: |t, v| Ok(t.sigmoid(v[0])),
        },
        OpCase {
            name: "softplus",
            shapes: &[(4, 4)],
            range: R,
            build: |t, v| Ok(t.softplus(v[0])),
        },
        OpCase {
            name: "pairwise_euclidean",
            shapes: &[(6, 3)],
            range: R,
            build: |t, v| Ok(t.pairwise_euclidean(v[0])),
        },
        OpCase {
            name: "row_normalize",
            shapes: &[(5, 5)],
            range: (0.05, 2.0),
            build: |t, v| t.row_normalize(v[0]),
        },
        OpCase {
            name: "row_softmax_cross_entropy",
            shapes: &[(6, 3)],
            range: R,
            build: |t, v| {
                t.row_softmax_cross_entropy(
                    v[0],
                    &[0, 2, 1, 1, 0, 2],
                    &[true, false, true, true, true, false],
                )
            },
        },
        OpCase {
            name: "concat_rows",
            shapes: &[(2, 3), (3, 3)],
            range: R,
            build: |t, v| t.concat_rows(&[v[0], v[1]]),
        },
        OpCase {
            name: "gather_rows",
            shapes: &[(4, 3)],
            range: R,
            build: |t, v| t.gather_rows(v[0], &[3, 0, 3, 1]),
        },
        OpCase {
            name: "sum",
            shapes: &[(3, 4)],
            range: R,
            build: |t, v| Ok(t.sum(v[0])),
        },
        OpCase {
            name: "sum_squares",
            shapes: &[(3, 4)],
            range: R,
            build: |t, v| Ok(t.sum_squares(v[0])),
        },
        OpCase {
            name: "soft_adjacency",
            shapes: &[(6, 3), (1, 1), (1, 1)],
            range: R,
            build: |t, v| {
                soft_adjacency(
                    t,
                    v[0],
                    &EdgeVars {
                        raw_temperature: v[1],
                        threshold: v[2],
                    },
                )
            },
        },
        OpCase {
            name: "gc_layer",
            shapes: &[(6, 6), (6, 4), (4, 3)],
            range: (0.05, 2.0),
            build: |t, v| gc_layer(t, v[0], v[1], v[2]),
        },
    ]
}

/// Scalar `Σ out ⊙ proj` (or the output itself when already scalar),
/// evaluated without gradients.
fn projected_value(case: &OpCase, inputs: &[Matrix], proj: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
    let out = (case.build)(&mut tape, &vars)?;
    let out = tape.value(out);
    if out.shape() == (1, 1) {
        return Ok(out.item());
    }
    Ok(out
        .as_slice()
        .iter()
        .zip(proj.as_slice())
        .map(|(a, b)| a * b)
        .sum())
}

fn check_case<R: Rng>(case: &OpCase, instances: usize, rng: &mut R) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (lo, hi) = case.range;
        let inputs: Vec<Matrix> = case
            .shapes
            .iter()
            .map(|&(r, c)| Matrix::from_fn(r, c, |_, _| rng.random_range(lo..=hi)))
            .collect();

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let out = (case.build)(&mut tape, &vars)?;
        let (r, c) = tape.shape(out);
        let proj = Matrix::uniform(r, c, 1.0, rng);
        let loss = if (r, c) == (1, 1) {
            out
        } else {
            let pv = tape.constant(proj.clone());
            let weighted = tape.mul(out, pv)?;
            tape.sum(weighted)
        };
        let grads = tape.backward(loss)?;

        for (k, &v) in vars.iter().enumerate() {
            let analytic = grads.get_or_zeros(v, tape.shape(v));
            let numeric = numeric_gradient(
                |x| {
                    let mut perturbed = inputs.clone();
                    perturbed[k] =
                        Matrix::from_vec(inputs[k].rows(), inputs[k].cols(), x.to_vec())?;
                    projected_value(case, &perturbed, &proj)
                },
                inputs[k].as_slice(),
                FD_STEP,
            )?;
            worst = worst.max(relative_error(analytic.as_slice(), &numeric));
        }
    }
    Ok(CheckResult {
        name: case.name.to_owned(),
        instances,
        max_rel_error: worst,
        tolerance: OP_TOLERANCE,
    })
}

/// Checks every tape operation (plus the soft adjacency and GC layer
/// compositions) on `instances` random inputs each.
pub fn check_operations(instances: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = seeded_rng(seed);
    op_cases()
        .iter()
        .map(|case| check_case(case, instances, &mut rng))
        .collect()
}

/// Small random problem for the end-to-end check.
fn end_to_end_instance<R: Rng>(
    rng: &mut R,
) -> Result<(Matrix, Vec<usize>, Vec<bool>, ModelParams)> {
    let (n, d, classes) = (7, 4, 3);
    let x = Matrix::uniform(n, d, 2.0, rng);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mask: Vec<bool> = (0..n).map(|i| i != 3).collect();
    let arch = Architecture {
        embed_hidden: vec![5],
        embed_dim: 3,
        gc_widths: vec![4, 3],
    };
    let mut params = ModelParams::init(&arch, &x, classes, rng)?;
    for l in &mut params.gcn.layers {
        *l = l.map(|v| v * 1.5);
    }
    params.gcn.head.bias = Matrix::uniform(1, classes, 0.5, rng);
    Ok((x, labels, mask, params))
}

fn model_loss(x: &Matrix, labels: &[usize], mask: &[bool], params: &ModelParams) -> Result<f64> {
    let mut pass = forward(x, params, Graph::Latent, false)?;
    let loss = pass
        .tape
        .row_softmax_cross_entropy(pass.logits, labels, mask)?;
    Ok(pass.tape.value(loss).item())
}

/// Masked cross-entropy of the full model against finite differences,
/// for every parameter buffer (including temperature and threshold).
pub fn check_end_to_end(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (x, labels, mask, params) = end_to_end_instance(&mut rng)?;
        let mut pass = forward(&x, &params, Graph::Latent, true)?;
        let loss = pass
            .tape
            .row_softmax_cross_entropy(pass.logits, &labels, &mask)?;
        let grads = pass.tape.backward(loss)?;
        let analytic = pass.vars.gradients(&pass.tape, &grads);

        let buffers = params.clone().slices_mut().len();
        for (k, analytic) in analytic.iter().enumerate().take(buffers) {
            let at = params.clone().slices_mut()[k].to_vec();
            let numeric = numeric_gradient(
                |v| {
                    let mut p = params.clone();
                    p.slices_mut()[k].copy_from_slice(v);
                    model_loss(&x, &labels, &mask, &p)
                },
                &at,
                FD_STEP,
            )?;
            worst = worst.max(relative_error(analytic.as_slice(), &numeric));
        }
    }
    Ok(CheckResult {
        name: "end_to_end".into(),
        instances,
        max_rel_error: worst,
        tolerance: END_TO_END_TOLERANCE,
    })
}

/// Every operation check followed by the end-to-end check.
pub fn run_suite(instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut checks = check_operations(instances, seed)?;
    checks.push(check_end_to_end(instances, seed.wrapping_add(1))?);
    Ok(GradCheckReport { checks })
}
