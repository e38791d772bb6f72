use proptest::prelude::*;

use latgraph::autodiff::{pairwise_distances, sigmoid};
use latgraph::data_io::{quantize_labels, standardize};
use latgraph::gcn::gc_layer;
use latgraph::latent_graph::soft_adjacency_values;
use latgraph::training::{binary_auc, stratified_kfold};
use latgraph::{EdgeParams, LrSchedule, Matrix, Tape};

fn matrix(
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> impl Strategy<Value = Matrix> {
    (rows, cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c)
            .prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn edge() -> impl Strategy<Value = EdgeParams> {
    (0.1f64..5.0, -1.0f64..4.0).prop_map(|(t, th)| EdgeParams::new(t, th))
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_bounded_with_fixed_diagonal(e in matrix(1..12, 1..5), ep in edge()) {
        let a = soft_adjacency_values(&e, &ep).unwrap();
        let diag = sigmoid(ep.temperature() * ep.threshold);
        for i in 0..a.rows() {
            prop_assert_eq!(a[(i, i)], diag);
            for j in 0..a.cols() {
                prop_assert!(a[(i, j)] > 0.0 && a[(i, j)] < 1.0);
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn adjacency_decreases_with_distance(e in matrix(2..10, 1..4), ep in edge()) {
        let a = soft_adjacency_values(&e, &ep).unwrap();
        let d = pairwise_distances(&e);
        let n = e.rows();
        for (i, j) in (0..n).flat_map(|i| (0..n).map(move |j| (i, j))) {
            for (k, l) in (0..n).flat_map(|k| (0..n).map(move |l| (k, l))) {
                if d[(i, j)] < d[(k, l)] {
                    prop_assert!(a[(i, j)] >= a[(k, l)]);
                }
            }
        }
    }

    #[test]
    fn adjacency_is_permutation_equivariant(
        (e, perm) in matrix(1..10, 1..4).prop_flat_map(|e| { let n = e.rows(); (Just(e), permutation(n)) }),
        ep in edge(),
    ) {
        let a = soft_adjacency_values(&e, &ep).unwrap();
        let b = soft_adjacency_values(&e.gather_rows(&perm), &ep).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                prop_assert!((b[(i, j)] - a[(pi, pj)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_rows_sum_to_one(e in matrix(1..12, 1..4), ep in edge(), c in -5.0f64..5.0) {
        let a = soft_adjacency_values(&e, &ep).unwrap();
        let n = a.rows();
        let mut tape = Tape::new();
        let av = tape.constant(a);
        let p = tape.row_normalize(av).unwrap();
        for i in 0..n {
            prop_assert!((tape.value(p).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let h = tape.constant(Matrix::filled(n, 3, c));
        let w = tape.constant(Matrix::identity(3));
        let out = gc_layer(&mut tape, av, h, w).unwrap();
        for v in tape.value(out).as_slice() {
            prop_assert!((v - c).abs() < 1e-9 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn quantization_is_monotone(mut values in prop::collection::vec(0.0f64..=10.0, 1..50)) {
        let edges = [0.0, 2.5, 4.0, 7.5, 10.0];
        values.sort_by(f64::total_cmp);
        let bins = quantize_labels(&values, &edges).unwrap();
        prop_assert!(bins.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(bins.iter().all(|&b| b < 4));
    }

    #[test]
    fn standardize_is_idempotent(x in matrix(2..20, 1..6)) {
        let once = standardize(&x).unwrap();
        let twice = standardize(&once).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn folds_partition_and_stratify(
        counts in prop::collection::vec(5usize..30, 2..5),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let split = stratified_kfold(&labels, k, seed).unwrap();
        prop_assert_eq!(split.folds.len(), k);
        let mut seen = vec![0; labels.len()];
        for f in &split.folds {
            prop_assert_eq!(f.train.len() + f.test.len(), labels.len());
            for &i in &f.test {
                seen[i] += 1;
            }
            for &i in &f.train {
                prop_assert!(!f.test.contains(&i));
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for c in 0..counts.len() {
            let per_fold: Vec<usize> = split.folds.iter().map(|f| f.test.iter().filter(|&&i| labels[i] == c).count()).collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(stratified_kfold(&labels, k, seed).unwrap(), split);
    }

    #[test]
    fn auc_matches_pair_counting(data in prop::collection::vec((0u8..8, any::<bool>()), 2..60)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s)).collect();
        let positive: Vec<bool> = data.iter().map(|(_, p)| *p).collect();
        let (mut num, mut den) = (0.0, 0.0);
        for i in (0..scores.len()).filter(|&i| positive[i]) {
            for j in (0..scores.len()).filter(|&j| !positive[j]) {
                den += 1.0;
                num += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
        match binary_auc(&scores, &positive) {
            Some(auc) => prop_assert!((auc - num / den).abs() < 1e-12),
            None => prop_assert_eq!(den, 0.0),
        }
    }

    #[test]
    fn schedule_stays_within_bounds(epoch in 0usize..2000) {
        let s = LrSchedule::default();
        let lr = s.at(epoch);
        prop_assert!(lr <= s.lr0 && lr >= s.lr_min);
        prop_assert!(s.at(epoch + 1) <= lr);
    }
}
