//! Full-batch training, evaluation, cross-validation and inductive
//! inference.

mod baselines;
mod folds;
mod metrics;

pub use baselines::{
    knn_graph, knn_graph_baseline, linear_baseline, RidgeClassifier, DEFAULT_KNN_NEIGHBORS,
    RIDGE_LAMBDA,
};
pub use folds::{stratified_kfold, Fold, FoldSplit};
pub use metrics::{accuracy, binary_auc, macro_auc, Summary};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::softmax_rows;
use crate::data_io::Dataset;
use crate::error::{Error, Result};
use crate::gcn::predict;
use crate::matrix::Matrix;
use crate::model::{forward, Architecture, Graph, ModelParams};
use crate::optim::{Adam, AdamConfig, LrSchedule};
use crate::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
    pub folds: usize,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 600,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
            folds: 10,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidInput(format!(
                "fold count must be at least 2, got {}",
                self.folds
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
}

fn masked_accuracy(pred: &[usize], labels: &[usize], mask: &[bool]) -> f64 {
    let (p, t): (Vec<usize>, Vec<usize>) = (0..labels.len())
        .filter(|&i| mask[i])
        .map(|i| (pred[i], labels[i]))
        .unzip();
    accuracy(&p, &t)
}

/// Trains a freshly initialized model on the nodes selected by
/// `train_mask`. Every node of `dataset` takes part in the graph; the
/// optional `eval_mask` is only used to report per-epoch accuracy.
pub fn train(
    dataset: &Dataset,
    train_mask: &[bool],
    eval_mask: Option<&[bool]>,
    graph: Graph<'_>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.schedule.validate()?;
    let n = dataset.len();
    if train_mask.len() != n || eval_mask.is_some_and(|m| m.len() != n) {
        return Err(Error::Contract(format!("masks must have length {n}")));
    }
    let mut present = vec![false; dataset.classes()];
    for i in (0..n).filter(|&i| train_mask[i]) {
        present[dataset.labels[i]] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::InvalidInput(
            "training mask must contain at least two classes".into(),
        ));
    }

    let mut rng = seeded_rng(cfg.seed);
    let mut params = ModelParams::init(&cfg.architecture, &dataset.x, dataset.classes(), &mut rng)?;
    let sizes: Vec<usize> = params.slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = Adam::new(cfg.adam, &sizes);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.at(epoch);
        let mut pass = forward(&dataset.x, &params, graph, true)?;
        let loss = pass
            .tape
            .row_softmax_cross_entropy(pass.logits, &dataset.labels, train_mask)?;
        let loss_value = pass.tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                param_norm: params.norm(),
            });
        }
        let grads = pass.tape.backward(loss)?;
        let grads = pass.vars.gradients(&pass.tape, &grads);

        let pred = predict(pass.logits());
        history.push(EpochRecord {
            epoch,
            lr,
            loss: loss_value,
            train_acc: masked_accuracy(&pred, &dataset.labels, train_mask),
            val_acc: eval_mask.map(|m| masked_accuracy(&pred, &dataset.labels, m)),
        });

        let grads: Vec<&[f64]> = grads.iter().map(Matrix::as_slice).collect();
        adam.step(&mut params.slices_mut(), &grads, lr)?;
    }
    Ok(TrainOutcome { params, history })
}

/// Accuracy and macro AUC on one evaluation set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub accuracy: f64,
    /// Absent when fewer than two classes are present.
    pub auc: Option<f64>,
    pub evaluated: usize,
}

impl SplitMetrics {
    /// Metrics for class `scores` (any monotone per-class score) of
    /// the rows selected by `mask`.
    pub fn from_scores(scores: &Matrix, labels: &[usize], mask: &[bool]) -> Result<Self> {
        let rows: Vec<usize> = (0..labels.len()).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::InvalidInput("evaluation mask is empty".into()));
        }
        let scores = scores.gather_rows(&rows);
        let truth: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
        Ok(SplitMetrics {
            accuracy: accuracy(&predict(&scores), &truth),
            auc: macro_auc(&scores, &truth),
            evaluated: rows.len(),
        })
    }
}

/// Evaluates `params` on the masked nodes of `dataset` (graph over all nodes).
pub fn evaluate(
    params: &ModelParams,
    dataset: &Dataset,
    mask: &[bool],
    graph: Graph<'_>,
) -> Result<SplitMetrics> {
    if mask.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "mask must have length {}",
            dataset.len()
        )));
    }
    let pass = forward(&dataset.x, params, graph, false)?;
    SplitMetrics::from_scores(&softmax_rows(pass.logits()), &dataset.labels, mask)
}

/// Logits for unseen `test_x` rows: the graph is rebuilt over the union
/// of training and test nodes with the frozen parameters.
pub fn inductive_logits(params: &ModelParams, train_x: &Matrix, test_x: &Matrix) -> Result<Matrix> {
    if train_x.cols() != params.input_dim() || test_x.cols() != params.input_dim() {
        return Err(Error::shape(
            "inductive_infer",
            train_x.shape(),
            test_x.shape(),
        ));
    }
    let union = Matrix::concat_rows(&[train_x, test_x])?;
    let pass = forward(&union, params, Graph::Latent, false)?;
    let rows: Vec<usize> = (train_x.rows()..union.rows()).collect();
    Ok(pass.logits().gather_rows(&rows))
}

/// Predicted labels for unseen `test_x` rows.
pub fn inductive_infer(
    params: &ModelParams,
    train_x: &Matrix,
    test_x: &Matrix,
) -> Result<Vec<usize>> {
    Ok(predict(&inductive_logits(params, train_x, test_x)?))
}

/// Model evaluated under cross-validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Method {
    /// Learned graph, test nodes present (unlabeled) during training.
    LatentGraph,
    /// Learned graph, test nodes unseen until inference.
    LatentGraphInductive,
    /// GCN over a fixed symmetrized kNN graph of the input features.
    KnnGraph { k: usize },
    /// One-vs-rest ridge classifier.
    Linear { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub auc: Option<f64>,
    #[serde(skip)]
    pub history: Vec<EpochRecord>,
}

/// Per-fold metrics with mean ± std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub accuracy: Summary,
    /// Over folds where AUC is defined.
    pub auc: Option<Summary>,
}

impl CvReport {
    pub(crate) fn new(method: Method, seed: u64, folds: Vec<FoldResult>) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let auc: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
        CvReport {
            method,
            seed,
            accuracy: Summary::of(&acc).unwrap_or(Summary {
                mean: 0.0,
                std: 0.0,
            }),
            auc: Summary::of(&auc),
            folds,
        }
    }
}

/// Runs `fold_fn` over every fold, in parallel, preserving fold order.
pub(crate) fn run_folds<F>(split: &FoldSplit, fold_fn: F) -> Result<Vec<FoldResult>>
where
    F: Fn(usize, &Fold) -> Result<FoldResult> + Sync,
{
    split
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| fold_fn(i, f))
        .collect()
}

fn fold_config(cfg: &TrainConfig, fold: usize) -> TrainConfig {
    TrainConfig {
        seed: cfg.seed.wrapping_add(fold as u64),
        ..cfg.clone()
    }
}

/// Stratified k-fold evaluation of `method` with `cfg.folds` folds split
/// by `cfg.seed`.
pub fn cross_validate(dataset: &Dataset, cfg: &TrainConfig, method: &Method) -> Result<CvReport> {
    cfg.validate()?;
    dataset.validate()?;
    let split = stratified_kfold(&dataset.labels, cfg.folds, cfg.seed)?;
    cross_validate_split(dataset, cfg, method, &split)
}

/// Like [`cross_validate`] over a caller-provided split.
pub fn cross_validate_split(
    dataset: &Dataset,
    cfg: &TrainConfig,
    method: &Method,
    split: &FoldSplit,
) -> Result<CvReport> {
    let n = dataset.len();
    let folds = match method {
        Method::LatentGraph => run_folds(split, |i, f| {
            transductive_fold(dataset, &fold_config(cfg, i), i, f, Graph::Latent)
        })?,
        Method::KnnGraph { k } => {
            let graph = knn_graph(&dataset.x, *k)?;
            run_folds(split, |i, f| {
                transductive_fold(dataset, &fold_config(cfg, i), i, f, Graph::Fixed(&graph))
            })?
        }
        Method::LatentGraphInductive => run_folds(split, |i, f| {
            let train_set = dataset.subset(&f.train);
            let outcome = train(
                &train_set,
                &vec![true; train_set.len()],
                None,
                Graph::Latent,
                &fold_config(cfg, i),
            )?;
            let test_x = dataset.x.gather_rows(&f.test);
            let logits = inductive_logits(&outcome.params, &train_set.x, &test_x)?;
            let truth: Vec<usize> = f.test.iter().map(|&i| dataset.labels[i]).collect();
            let m = SplitMetrics::from_scores(
                &softmax_rows(&logits),
                &truth,
                &vec![true; truth.len()],
            )?;
            Ok(FoldResult {
                fold: i,
                train_size: f.train.len(),
                test_size: f.test.len(),
                accuracy: m.accuracy,
                auc: m.auc,
                history: outcome.history,
            })
        })?,
        Method::Linear { lambda } => run_folds(split, |i, f| {
            let train_x = dataset.x.gather_rows(&f.train);
            let train_y: Vec<usize> = f.train.iter().map(|&i| dataset.labels[i]).collect();
            let model = RidgeClassifier::fit(&train_x, &train_y, dataset.classes(), *lambda)?;
            let scores = model.decision_function(&dataset.x)?;
            let m = SplitMetrics::from_scores(&scores, &dataset.labels, &Fold::mask(&f.test, n))?;
            Ok(FoldResult {
                fold: i,
                train_size: f.train.len(),
                test_size: f.test.len(),
                accuracy: m.accuracy,
                auc: m.auc,
                history: Vec::new(),
            })
        })?,
    };
    Ok(CvReport::new(method.clone(), cfg.seed, folds))
}

fn transductive_fold(
    dataset: &Dataset,
    cfg: &TrainConfig,
    index: usize,
    fold: &Fold,
    graph: Graph<'_>,
) -> Result<FoldResult> {
    let n = dataset.len();
    let train_mask = Fold::mask(&fold.train, n);
    let test_mask = Fold::mask(&fold.test, n);
    let outcome = train(dataset, &train_mask, Some(&test_mask), graph, cfg)?;
    let m = evaluate(&outcome.params, dataset, &test_mask, graph)?;
    Ok(FoldResult {
        fold: index,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        accuracy: m.accuracy,
        auc: m.auc,
        history: outcome.history,
    })
}
