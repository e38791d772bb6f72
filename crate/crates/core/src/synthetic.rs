//! Synthetic experiments: random ground-truth graphs, neighbor-sum targets,
//! graph recovery with identity features, and labeled benchmark datasets.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::latent_graph::{embed, init_edge_params, soft_adjacency, EmbedderParams};
use crate::matrix::Matrix;
use crate::optim::{Adam, AdamConfig};
use crate::seeded_rng;
use crate::training::Summary;

/// Edge probability used when none is given.
pub const DEFAULT_EDGE_PROBABILITY: f64 = 0.3;

/// Binary, symmetric, loop-free graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthGraph {
    pub nodes: usize,
    pub edge_probability: f64,
    pub seed: u64,
    pub adjacency: Matrix,
}

impl GroundTruthGraph {
    pub fn edge_count(&self) -> usize {
        let a = &self.adjacency;
        (0..self.nodes)
            .map(|i| ((i + 1)..self.nodes).filter(|&j| a[(i, j)] != 0.0).count())
            .sum()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row(i).iter().filter(|&&v| v != 0.0).count()
    }
}

/// Erdős–Rényi `G(N, p)`. Afterwards every isolated node (in index order)
/// is joined to a uniformly chosen other node.
pub fn generate_graph(nodes: usize, p: f64, seed: u64) -> Result<GroundTruthGraph> {
    if nodes < 2 || !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "random graph needs N >= 2 and 0 < p < 1, got N = {nodes}, p = {p}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let mut a = Matrix::zeros(nodes, nodes);
    for i in 0..nodes {
        for j in (i + 1)..nodes {
            if rng.random::<f64>() < p {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    for i in 0..nodes {
        if a.row(i).iter().all(|&v| v == 0.0) {
            let mut j = rng.random_range(0..nodes - 1);
            if j >= i {
                j += 1;
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
    }
    Ok(GroundTruthGraph {
        nodes,
        edge_probability: p,
        seed,
        adjacency: a,
    })
}

/// `y_i = Σ_{j ∈ N(i)} x_j`, i.e. `A·X`.
pub fn neighbor_sum_targets(graph: &GroundTruthGraph, x: &Matrix) -> Result<Matrix> {
    graph.adjacency.matmul(x)
}

/// Fraction of off-diagonal entries where `learned >= tau` agrees with the
/// ground-truth bit (`truth >= 0.5`).
pub fn edge_agreement(learned: &Matrix, truth: &Matrix, tau: f64) -> Result<f64> {
    if learned.shape() != truth.shape() || learned.rows() != learned.cols() {
        return Err(Error::shape(
            "edge_agreement",
            learned.shape(),
            truth.shape(),
        ));
    }
    let n = learned.rows();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && (learned[(i, j)] >= tau) == (truth[(i, j)] >= 0.5) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1)) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub embed_dim: usize,
    pub embed_hidden: Vec<usize>,
    pub iterations: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            embed_dim: 8,
            embed_hidden: vec![64],
            iterations: 2000,
            lr: 0.01,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Loss above which recovery is treated as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub adjacency: Matrix,
    /// Mean squared error over the off-diagonal entries.
    pub mse: f64,
    /// [`edge_agreement`] against the targets at threshold 0.5.
    pub agreement: f64,
    /// Summed off-diagonal squared error before each update.
    pub loss_history: Vec<f64>,
}

/// Fits the latent-graph module with identity features so that its
/// adjacency reproduces the targets `y` (neighbor sums of `I`, i.e. the
/// ground-truth adjacency). Self-loops are excluded from the loss.
pub fn recover_graph(y: &Matrix, cfg: &RecoveryConfig) -> Result<RecoveryResult> {
    let n = y.rows();
    if n < 2 || y.cols() != n {
        return Err(Error::InvalidInput(format!(
            "recovery targets must be N x N with N >= 2, got {:?}",
            y.shape()
        )));
    }
    let x = Matrix::identity(n);
    let off_diagonal = Matrix::from_fn(n, n, |i, j| f64::from(u8::from(i != j)));
    let mut rng = seeded_rng(cfg.seed);
    let mut widths = vec![n];
    widths.extend_from_slice(&cfg.embed_hidden);
    widths.push(cfg.embed_dim);
    let mut embedder = EmbedderParams::new(&widths, &mut rng)?;
    let mut edge = init_edge_params(&embedder.embed_values(&x)?);

    let mut sizes: Vec<usize> = embedder
        .layers
        .iter()
        .flat_map(|l| [l.weight.len(), l.bias.len()])
        .collect();
    sizes.extend([1, 1]);
    let mut adam = Adam::new(cfg.adam, &sizes);
    let mut loss_history = Vec::with_capacity(cfg.iterations);

    for iteration in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let layers = embedder.record(&mut tape, true);
        let edge_vars = edge.record(&mut tape, true);
        let xv = tape.constant(x.clone());
        let e = embed(&mut tape, xv, &embedder, &layers)?;
        let a = soft_adjacency(&mut tape, e, &edge_vars)?;
        let target = tape.constant(y.clone());
        let mask = tape.constant(off_diagonal.clone());
        let diff = tape.sub(a, target)?;
        let masked = tape.mul(diff, mask)?;
        let loss = tape.sum_squares(masked);
        let loss_value = tape.value(loss).item();

        if !loss_value.is_finite() || loss_value > DIVERGENCE_LOSS {
            let param_norm = embedder
                .layers
                .iter()
                .map(|l| l.weight.frobenius_norm().powi(2) + l.bias.frobenius_norm().powi(2))
                .sum::<f64>()
                .sqrt();
            return Err(Error::Diverged {
                iteration,
                loss: loss_value,
                param_norm,
            });
        }
        if iteration == cfg.iterations {
            let adjacency = tape.value(a).clone();
            return Ok(RecoveryResult {
                mse: loss_value / (n * (n - 1)) as f64,
                agreement: edge_agreement(&adjacency, y, 0.5)?,
                adjacency,
                loss_history,
            });
        }
        loss_history.push(loss_value);

        let grads = tape.backward(loss)?;
        let mut grad_bufs = Vec::with_capacity(sizes.len());
        for l in &layers {
            grad_bufs.push(grads.get_or_zeros(l.weight, tape.shape(l.weight)));
            grad_bufs.push(grads.get_or_zeros(l.bias, tape.shape(l.bias)));
        }
        grad_bufs.push(grads.get_or_zeros(edge_vars.raw_temperature, (1, 1)));
        grad_bufs.push(grads.get_or_zeros(edge_vars.threshold, (1, 1)));
        let grad_slices: Vec<&[f64]> = grad_bufs.iter().map(Matrix::as_slice).collect();

        let mut params: Vec<&mut [f64]> = Vec::with_capacity(sizes.len());
        for l in &mut embedder.layers {
            params.push(l.weight.as_mut_slice());
            params.push(l.bias.as_mut_slice());
        }
        params.push(std::slice::from_mut(&mut edge.raw_temperature));
        params.push(std::slice::from_mut(&mut edge.threshold));
        adam.step(&mut params, &grad_slices, cfg.lr)?;
    }
    unreachable!("loop returns on its last iteration")
}

/// One recovery run of [`recovery_curves`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub nodes: usize,
    pub dim: usize,
    pub seed: u64,
    pub final_mse: f64,
    pub agreement: f64,
}

/// Aggregate over seeds for one `(N, dim)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveCell {
    pub nodes: usize,
    pub dim: usize,
    pub mse: Summary,
    pub agreement: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurves {
    pub rows: Vec<CurveRow>,
    pub cells: Vec<CurveCell>,
}

impl RecoveryCurves {
    pub fn cell(&self, nodes: usize, dim: usize) -> Option<&CurveCell> {
        self.cells.iter().find(|c| c.nodes == nodes && c.dim == dim)
    }
}

/// Runs graph recovery for every `(N, dim, seed)`; the seed drives both the
/// ground-truth graph and the model initialization.
pub fn recovery_curves(
    node_counts: &[usize],
    dims: &[usize],
    seeds: &[u64],
    edge_probability: f64,
    base: &RecoveryConfig,
) -> Result<RecoveryCurves> {
    if node_counts.is_empty() || dims.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidInput(
            "recovery curves need non-empty N, dim and seed lists".into(),
        ));
    }
    let jobs: Vec<(usize, usize, u64)> = node_counts
        .iter()
        .flat_map(|&n| {
            dims.iter()
                .flat_map(move |&d| seeds.iter().map(move |&s| (n, d, s)))
        })
        .collect();
    let rows: Vec<CurveRow> = jobs
        .par_iter()
        .map(|&(nodes, dim, seed)| {
            let graph = generate_graph(nodes, edge_probability, seed)?;
            let y = neighbor_sum_targets(&graph, &Matrix::identity(nodes))?;
            let cfg = RecoveryConfig {
                embed_dim: dim,
                seed,
                ..base.clone()
            };
            let r = recover_graph(&y, &cfg)?;
            Ok(CurveRow {
                nodes,
                dim,
                seed,
                final_mse: r.mse,
                agreement: r.agreement,
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &nodes in node_counts {
        for &dim in dims {
            let sel: Vec<&CurveRow> = rows
                .iter()
                .filter(|r| r.nodes == nodes && r.dim == dim)
                .collect();
            let mse: Vec<f64> = sel.iter().map(|r| r.final_mse).collect();
            let agr: Vec<f64> = sel.iter().map(|r| r.agreement).collect();
            cells.push(CurveCell {
                nodes,
                dim,
                mse: Summary::of(&mse).expect("non-empty seeds"),
                agreement: Summary::of(&agr).expect("non-empty seeds"),
            });
        }
    }
    Ok(RecoveryCurves { rows, cells })
}

/// Per-run table: `nodes,dim,seed,final_mse,agreement`.
pub fn write_curves_csv(curves: &RecoveryCurves, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "nodes,dim,seed,final_mse,agreement").map_err(io)?;
    for r in &curves.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.nodes, r.dim, r.seed, r.final_mse, r.agreement
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Per-cell summary table: `nodes,dim,runs,mse_mean,mse_std,agreement_mean,agreement_std`.
pub fn write_curve_summary_csv(curves: &RecoveryCurves, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "nodes,dim,runs,mse_mean,mse_std,agreement_mean,agreement_std"
    )
    .map_err(io)?;
    for c in &curves.cells {
        let runs = curves
            .rows
            .iter()
            .filter(|r| r.nodes == c.nodes && r.dim == c.dim)
            .count();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            c.nodes, c.dim, runs, c.mse.mean, c.mse.std, c.agreement.mean, c.agreement.std
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Labeled dataset whose classes are unions of Gaussian clusters in a few
/// informative dimensions, padded with nuisance features that carry no
/// label information but dominate raw distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub nodes: usize,
    pub classes: usize,
    pub clusters_per_class: usize,
    pub informative: usize,
    pub nuisance: usize,
    /// Cluster centers are uniform in `[-center_scale, center_scale]`.
    pub center_scale: f64,
    /// Standard deviation of points around their cluster center.
    pub cluster_std: f64,
    /// Standard deviation of nuisance features.
    pub nuisance_std: f64,
    /// Number of hidden factors driving the nuisance block; 0 draws every
    /// nuisance feature independently.
    pub nuisance_factors: usize,
    /// Per-feature noise added on top of the factor part, relative to
    /// `nuisance_std`. Ignored when `nuisance_factors` is 0.
    pub nuisance_residual: f64,
    pub seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            nodes: 300,
            classes: 3,
            clusters_per_class: 4,
            informative: 10,
            nuisance: 90,
            center_scale: 2.0,
            cluster_std: 0.3,
            nuisance_std: 1.0,
            nuisance_factors: 2,
            nuisance_residual: 0.1,
            seed: 0,
        }
    }
}

/// Generates a [`ClusterSpec`] dataset. Classes are balanced (node `i` has
/// class `i mod C`); informative features come first.
pub fn clustered_dataset(spec: &ClusterSpec) -> Result<Dataset> {
    if spec.classes < 2
        || spec.clusters_per_class == 0
        || spec.informative == 0
        || spec.nodes < spec.classes
    {
        return Err(Error::InvalidInput(format!(
            "invalid cluster spec {spec:?}"
        )));
    }
    let mut rng = seeded_rng(spec.seed);
    let centers: Vec<Vec<Vec<f64>>> = (0..spec.classes)
        .map(|_| {
            (0..spec.clusters_per_class)
                .map(|_| {
                    (0..spec.informative)
                        .map(|_| rng.random_range(-spec.center_scale..=spec.center_scale))
                        .collect()
                })
                .collect()
        })
        .collect();
    let point_noise =
        Normal::new(0.0, spec.cluster_std).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let nuisance =
        Normal::new(0.0, spec.nuisance_std).map_err(|e| Error::InvalidInput(e.to_string()))?;

    let loadings = Matrix::from_fn(spec.nuisance, spec.nuisance_factors, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z / (spec.nuisance_factors as f64).sqrt()
    });

    let d = spec.informative + spec.nuisance;
    let mut x = Matrix::zeros(spec.nodes, d);
    let mut labels = Vec::with_capacity(spec.nodes);
    for i in 0..spec.nodes {
        let class = i % spec.classes;
        let center = &centers[class][rng.random_range(0..spec.clusters_per_class)];
        let row = x.row_mut(i);
        for (v, c) in row[..spec.informative].iter_mut().zip(center) {
            *v = c + point_noise.sample(&mut rng);
        }
        if spec.nuisance_factors == 0 {
            for v in &mut row[spec.informative..] {
                *v = nuisance.sample(&mut rng);
            }
        } else {
            let z: Vec<f64> = (0..spec.nuisance_factors)
                .map(|_| nuisance.sample(&mut rng))
                .collect();
            for (j, v) in row[spec.informative..].iter_mut().enumerate() {
                let factor: f64 = z.iter().zip(loadings.row(j)).map(|(a, b)| a * b).sum();
                *v = factor + spec.nuisance_residual * nuisance.sample(&mut rng);
            }
        }
        labels.push(class);
    }
    let mut ds = Dataset::from_parts(x, labels)?;
    ds.feature_names = (0..d)
        .map(|j| {
            if j < spec.informative {
                format!("info{j}")
            } else {
                format!("noise{}", j - spec.informative)
            }
        })
        .collect();
    Ok(ds)
}

/// Well-separated isotropic Gaussian blobs, one per class, in shuffled order.
pub fn gaussian_blobs(
    per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut order: Vec<usize> = (0..per_class * classes).map(|i| i % classes).collect();
    order.shuffle(&mut rng);
    let mut x = Matrix::zeros(order.len(), dim);
    for (i, &c) in order.iter().enumerate() {
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            let center = if j % classes == c { separation } else { 0.0 };
            *v = center + noise.sample(&mut rng);
        }
    }
    Dataset::from_parts(x, order)
}
