use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use latgraph::autodiff::softmax_rows;
use latgraph::data_io::{
    export_adjacency, load_csv, load_features, read_json, write_history_csv, write_json, CsvSchema,
    FeatureSelection, Standardizer,
};
use latgraph::gcn::predict;
use latgraph::gradcheck;
use latgraph::model::forward;
use latgraph::synthetic::{
    generate_graph, neighbor_sum_targets, recover_graph, recovery_curves, write_curve_summary_csv,
    write_curves_csv, RecoveryConfig,
};
use latgraph::training::{cross_validate, inductive_logits, train, CvReport, Method};
use latgraph::{
    Architecture, Dataset, Error, Graph, LrSchedule, Matrix, ModelParams, Result, TrainConfig,
};

use crate::{Command, DataArgs, MethodArg, OutArgs, RecoveryArgs, TrainArgs};

/// Everything `infer` and `export-graph` need from a training run.
#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    seed: u64,
    config: TrainConfig,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    standardizer: Option<Standardizer>,
    train_ids: Vec<String>,
    /// Training features after standardization.
    train_features: Matrix,
    params: ModelParams,
}

#[derive(Debug, Serialize)]
struct CvOutput<'a> {
    seed: u64,
    data: &'a Path,
    config: &'a TrainConfig,
    report: &'a CvReport,
}

#[derive(Debug, Serialize)]
struct RecoveryOutput<'a> {
    seed: u64,
    nodes: usize,
    dim: usize,
    edge_probability: f64,
    final_mse: f64,
    agreement: f64,
    loss_history: &'a [f64],
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { data, train, out } => train_model(&data, &train, &out),
        Command::CrossValidate {
            data,
            train,
            out,
            folds,
            method,
            knn_k,
            lambda,
        } => {
            let method = match method {
                MethodArg::Latent => Method::LatentGraph,
                MethodArg::Inductive => Method::LatentGraphInductive,
                MethodArg::Knn => Method::KnnGraph { k: knn_k },
                MethodArg::Linear => Method::Linear { lambda },
            };
            cross_validate_cmd(&data, &train, &out, folds, method)
        }
        Command::Infer {
            model,
            data,
            id_col,
            out,
        } => infer(&model, &data, id_col.as_deref(), &out),
        Command::SynthRecover {
            nodes,
            dim,
            recovery,
            seed,
            out,
        } => synth_recover(nodes, dim, &recovery, seed, &out),
        Command::SynthCurves {
            nodes,
            dims,
            seeds,
            recovery,
            out,
        } => synth_curves(&nodes, &dims, seeds, &recovery, &out),
        Command::ExportGraph {
            model,
            data,
            id_col,
            out,
        } => export_graph(&model, data.as_deref(), id_col.as_deref(), &out),
        Command::Gradcheck { instances, seed } => gradcheck_cmd(instances, seed),
    }
}

fn out_dir(out: &OutArgs) -> Result<&Path> {
    fs::create_dir_all(&out.out_dir).map_err(|e| Error::io(&out.out_dir, e))?;
    Ok(&out.out_dir)
}

fn train_config(args: &TrainArgs, folds: usize) -> Result<TrainConfig> {
    let schedule = LrSchedule {
        lr0: args.lr0,
        lr_min: args.lr_min,
        step: args.lr_step,
        ..LrSchedule::default()
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        schedule,
        seed: args.seed,
        folds,
        architecture: Architecture {
            embed_hidden: args.embed_hidden.clone(),
            embed_dim: args.embed_dim,
            gc_widths: args.gc_widths.clone(),
        },
        ..TrainConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load(args: &DataArgs) -> Result<(Dataset, Option<Standardizer>)> {
    let features = match args.features.trim() {
        "rest" => FeatureSelection::Rest,
        list => FeatureSelection::Named(list.split(',').map(|s| s.trim().to_owned()).collect()),
    };
    let schema = CsvSchema {
        id_col: args.id_col.clone(),
        label_col: args.label_col.clone(),
        features,
    };
    let (dataset, report) = load_csv(&args.data, &schema)?;
    log::info!(
        "{}: {} rows, {} features, {} classes ({} rows dropped, {} cells imputed)",
        args.data.display(),
        dataset.len(),
        dataset.x.cols(),
        dataset.classes(),
        report.dropped_rows,
        report.imputed_cells
    );
    if args.no_standardize {
        return Ok((dataset, None));
    }
    let scaler = Standardizer::fit(&dataset.x)?;
    let x = scaler.transform(&dataset.x)?;
    Ok((dataset.with_features(x), Some(scaler)))
}

fn train_model(data: &DataArgs, args: &TrainArgs, out: &OutArgs) -> Result<()> {
    let cfg = train_config(args, TrainConfig::default().folds)?;
    let (dataset, standardizer) = load(data)?;
    let dir = out_dir(out)?;
    let mask = vec![true; dataset.len()];
    let outcome = train(&dataset, &mask, None, Graph::Latent, &cfg)?;
    write_history_csv(&outcome.history, dir.join("history.csv"))?;
    let model = SavedModel {
        seed: cfg.seed,
        config: cfg,
        class_names: dataset.class_names.clone(),
        feature_names: dataset.feature_names.clone(),
        standardizer,
        train_ids: dataset.ids.clone(),
        train_features: dataset.x.clone(),
        params: outcome.params,
    };
    write_json(&model, dir.join("model.json"))?;
    match outcome.history.last() {
        Some(last) => println!(
            "seed {}: final loss {:.6}, train accuracy {:.2}",
            model.seed,
            last.loss,
            100.0 * last.train_acc
        ),
        None => println!("seed {}: no epochs run", model.seed),
    }
    Ok(())
}

fn cross_validate_cmd(
    data: &DataArgs,
    args: &TrainArgs,
    out: &OutArgs,
    folds: usize,
    method: Method,
) -> Result<()> {
    let cfg = train_config(args, folds)?;
    let (dataset, _) = load(data)?;
    let dir = out_dir(out)?;
    let report = cross_validate(&dataset, &cfg, &method)?;
    for fold in &report.folds {
        if !fold.history.is_empty() {
            write_history_csv(
                &fold.history,
                dir.join(format!("fold_{:02}_history.csv", fold.fold)),
            )?;
        }
    }
    write_json(
        &CvOutput {
            seed: cfg.seed,
            data: &data.data,
            config: &cfg,
            report: &report,
        },
        dir.join("metrics.json"),
    )?;
    let auc = match report.auc {
        Some(s) => format!("{:.2} ± {:.2}", 100.0 * s.mean, 100.0 * s.std),
        None => "n/a".to_owned(),
    };
    println!(
        "accuracy: {:.2} ± {:.2}, auc: {auc}",
        100.0 * report.accuracy.mean,
        100.0 * report.accuracy.std
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<SavedModel> {
    read_json(path)
}

fn load_unseen(
    model: &SavedModel,
    path: &Path,
    id_col: Option<&str>,
) -> Result<(Vec<String>, Matrix)> {
    let (ids, x, report) = load_features(path, id_col, &model.feature_names)?;
    if report.imputed_cells > 0 {
        log::info!(
            "{}: imputed {} missing cells",
            path.display(),
            report.imputed_cells
        );
    }
    let x = match &model.standardizer {
        Some(s) => s.transform(&x)?,
        None => x,
    };
    Ok((ids, x))
}

fn infer(model_path: &Path, data: &Path, id_col: Option<&str>, out: &OutArgs) -> Result<()> {
    let model = load_model(model_path)?;
    let (ids, x) = load_unseen(&model, data, id_col)?;
    let dir = out_dir(out)?;
    let probs = softmax_rows(&inductive_logits(&model.params, &model.train_features, &x)?);
    let pred = predict(&probs);

    let path = dir.join("predictions.csv");
    let mut text = String::from("id,prediction");
    for c in &model.class_names {
        text.push_str(&format!(",p_{c}"));
    }
    text.push('\n');
    for (i, id) in ids.iter().enumerate() {
        text.push_str(&format!("{id},{}", model.class_names[pred[i]]));
        for v in probs.row(i) {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!(
        "seed {}: predicted {} rows -> {}",
        model.seed,
        ids.len(),
        path.display()
    );
    Ok(())
}

fn recovery_config(args: &RecoveryArgs, dim: usize, seed: u64) -> RecoveryConfig {
    RecoveryConfig {
        embed_dim: dim,
        iterations: args.iterations,
        lr: args.lr,
        seed,
        ..RecoveryConfig::default()
    }
}

fn synth_recover(
    nodes: usize,
    dim: usize,
    args: &RecoveryArgs,
    seed: u64,
    out: &OutArgs,
) -> Result<()> {
    let graph = generate_graph(nodes, args.edge_prob, seed)?;
    let y = neighbor_sum_targets(&graph, &Matrix::identity(nodes))?;
    let result = recover_graph(&y, &recovery_config(args, dim, seed))?;
    let dir = out_dir(out)?;
    let ids: Vec<String> = (0..nodes).map(|i| i.to_string()).collect();
    export_adjacency(&graph.adjacency, &ids, dir.join("ground_truth.csv"))?;
    export_adjacency(&result.adjacency, &ids, dir.join("learned.csv"))?;
    write_json(
        &RecoveryOutput {
            seed,
            nodes,
            dim,
            edge_probability: args.edge_prob,
            final_mse: result.mse,
            agreement: result.agreement,
            loss_history: &result.loss_history,
        },
        dir.join("recovery.json"),
    )?;
    println!(
        "seed {seed}: final mse {:.6e}, edge agreement {:.4}",
        result.mse, result.agreement
    );
    Ok(())
}

fn synth_curves(
    nodes: &[usize],
    dims: &[usize],
    seeds: u64,
    args: &RecoveryArgs,
    out: &OutArgs,
) -> Result<()> {
    let seeds: Vec<u64> = (0..seeds).collect();
    let curves = recovery_curves(
        nodes,
        dims,
        &seeds,
        args.edge_prob,
        &recovery_config(args, 0, 0),
    )?;
    let dir = out_dir(out)?;
    write_curves_csv(&curves, dir.join("curves.csv"))?;
    write_curve_summary_csv(&curves, dir.join("curves_summary.csv"))?;
    println!("seeds 0..{}", seeds.len());
    println!("nodes dim mse_mean mse_std agreement_mean");
    for c in &curves.cells {
        println!(
            "{} {} {:.4e} {:.4e} {:.4}",
            c.nodes, c.dim, c.mse.mean, c.mse.std, c.agreement.mean
        );
    }
    Ok(())
}

fn export_graph(
    model_path: &Path,
    data: Option<&Path>,
    id_col: Option<&str>,
    out: &OutArgs,
) -> Result<()> {
    let model = load_model(model_path)?;
    let mut ids = model.train_ids.clone();
    let x = match data {
        Some(path) => {
            let (new_ids, new_x) = load_unseen(&model, path, id_col)?;
            ids.extend(new_ids);
            Matrix::concat_rows(&[&model.train_features, &new_x])?
        }
        None => model.train_features.clone(),
    };
    let pass = forward(&x, &model.params, Graph::Latent, false)?;
    let dir = out_dir(out)?;
    let path: PathBuf = dir.join("adjacency.csv");
    export_adjacency(pass.adjacency(), &ids, &path)?;
    println!(
        "seed {}: {} nodes, temperature {:.4}, threshold {:.4} -> {}",
        model.seed,
        ids.len(),
        model.params.edge.temperature(),
        model.params.edge.threshold,
        path.display()
    );
    Ok(())
}

fn gradcheck_cmd(instances: usize, seed: u64) -> Result<()> {
    let report = gradcheck::run_suite(instances, seed)?;
    for c in &report.checks {
        println!(
            "{:<26} {:.3e} (tol {:.0e}) {}",
            c.name,
            c.max_rel_error,
            c.tolerance,
            if c.passed() { "ok" } else { "FAILED" }
        );
    }
    println!(
        "seed {seed}: max relative error {:.3e}",
        report.max_rel_error()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Contract("finite-difference check failed".into()))
    }
}
