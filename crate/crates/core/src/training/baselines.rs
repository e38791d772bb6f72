use crate::autodiff::pairwise_distances;
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::matrix::Matrix;

use super::{cross_validate_split, CvReport, FoldSplit, Method, TrainConfig};

/// Default ridge penalty of the linear baseline.
pub const RIDGE_LAMBDA: f64 = 1.0;

/// One-vs-rest ridge regression on one-hot targets, with an unpenalized
/// intercept (features and targets are centered before solving).
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeClassifier {
    pub weights: Matrix,
    pub intercept: Vec<f64>,
}

impl RidgeClassifier {
    /// Solves `(XcᵀXc + λI)·W = XcᵀYc`.
    pub fn fit(x: &Matrix, labels: &[usize], classes: usize, lambda: f64) -> Result<Self> {
        if x.rows() != labels.len() || x.rows() == 0 {
            return Err(Error::InvalidInput(format!(
                "ridge fit on {} rows with {} labels",
                x.rows(),
                labels.len()
            )));
        }
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "ridge penalty must be positive, got {lambda}"
            )));
        }
        let n = x.rows() as f64;
        let x_mean: Vec<f64> = (0..x.cols())
            .map(|j| x.column(j).iter().sum::<f64>() / n)
            .collect();
        let y = Matrix::from_fn(x.rows(), classes, |i, c| {
            f64::from(u8::from(labels[i] == c))
        });
        let y_mean: Vec<f64> = (0..classes)
            .map(|c| y.column(c).iter().sum::<f64>() / n)
            .collect();
        let xc = Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] - x_mean[j]);
        let yc = Matrix::from_fn(x.rows(), classes, |i, c| y[(i, c)] - y_mean[c]);

        let mut gram = xc.t_matmul(&xc)?;
        for j in 0..gram.rows() {
            gram[(j, j)] += lambda;
        }
        let weights = solve_spd(&gram, &xc.t_matmul(&yc)?)?;
        let intercept = (0..classes)
            .map(|c| {
                y_mean[c]
                    - (0..x.cols())
                        .map(|j| x_mean[j] * weights[(j, c)])
                        .sum::<f64>()
            })
            .collect();
        Ok(RidgeClassifier { weights, intercept })
    }

    /// Per-class scores `X·W + b`.
    pub fn decision_function(&self, x: &Matrix) -> Result<Matrix> {
        let mut s = x.matmul(&self.weights)?;
        for i in 0..s.rows() {
            for (v, b) in s.row_mut(i).iter_mut().zip(&self.intercept) {
                *v += b;
            }
        }
        Ok(s)
    }
}

/// Ridge baseline under the given folds.
pub fn linear_baseline(
    dataset: &Dataset,
    split: &FoldSplit,
    lambda: f64,
    seed: u64,
) -> Result<CvReport> {
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    cross_validate_split(dataset, &cfg, &Method::Linear { lambda }, split)
}

/// Neighbor count for the kNN-graph baseline when none is given.
pub const DEFAULT_KNN_NEIGHBORS: usize = 10;

/// Symmetrized k-nearest-neighbor graph on the rows of `x` with self
/// loops: `a_ij = 1` if `i = j`, `j ∈ kNN(i)` or `i ∈ kNN(j)`. Distance
/// ties go to the lower index.
pub fn knn_graph(x: &Matrix, k: usize) -> Result<Matrix> {
    let n = x.rows();
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "kNN graph needs k < N, got k = {k} with N = {n}"
        )));
    }
    let dist = pairwise_distances(x);
    let mut a = Matrix::identity(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&p, &q| dist[(i, p)].total_cmp(&dist[(i, q)]).then(p.cmp(&q)));
        for &j in &others[..k] {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
    }
    Ok(a)
}

/// GCN over a fixed kNN graph of the raw features, trained like the
/// latent-graph model.
pub fn knn_graph_baseline(
    dataset: &Dataset,
    k_neighbors: usize,
    split: &FoldSplit,
    cfg: &TrainConfig,
) -> Result<CvReport> {
    cross_validate_split(dataset, cfg, &Method::KnnGraph { k: k_neighbors }, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_knn_is_complete() {
        let x = Matrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64);
        assert_eq!(knn_graph(&x, 4).unwrap(), Matrix::filled(5, 5, 1.0));
        assert!(knn_graph(&x, 5).is_err());
    }

    #[test]
    fn knn_is_symmetric_with_self_loops() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [10.0], [11.0], [30.0]]);
        let a = knn_graph(&x, 1).unwrap();
        assert_eq!(a, a.transpose());
        for i in 0..5 {
            assert_eq!(a[(i, i)], 1.0);
        }
        assert_eq!(a[(0, 1)], 1.0);
        assert_eq!(a[(4, 3)], 1.0);
        assert_eq!(a[(0, 2)], 0.0);
    }

    #[test]
    fn ridge_separates_blobs() {
        let x = Matrix::from_rows(&[[-2.0, 0.1], [-2.2, -0.1], [2.0, 0.0], [2.1, 0.2]]);
        let y = [0, 0, 1, 1];
        let m = RidgeClassifier::fit(&x, &y, 2, RIDGE_LAMBDA).unwrap();
        let s = m.decision_function(&x).unwrap();
        assert_eq!(crate::gcn::predict(&s), y.to_vec());
    }
}
