//! Dataset ingestion, preprocessing and artifact export.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::training::EpochRecord;

/// Node features with dense integer labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Matrix,
    /// Labels in `[0, class_names.len())`.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated ids, class names and feature names.
    pub fn from_parts(x: Matrix, labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        let ds = Dataset {
            ids: (0..x.rows()).map(|i| i.to_string()).collect(),
            feature_names: (0..x.cols()).map(|j| format!("f{j}")).collect(),
            class_names: (0..classes).map(|c| c.to_string()).collect(),
            x,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.labels.len() != n || self.ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "dataset has {n} feature rows, {} labels and {} ids",
                self.labels.len(),
                self.ids.len()
            )));
        }
        if self.feature_names.len() != self.x.cols() {
            return Err(Error::InvalidInput(format!(
                "{} feature names for {} feature columns",
                self.feature_names.len(),
                self.x.cols()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&l| l >= self.classes()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {})",
                self.classes()
            )));
        }
        if !self.x.is_finite() {
            return Err(Error::InvalidInput(
                "feature matrix contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Rows `indices`, keeping the class and feature vocabularies.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            x: self.x.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn with_features(&self, x: Matrix) -> Dataset {
        assert_eq!(x.shape(), self.x.shape());
        Dataset { x, ..self.clone() }
    }
}

/// Which columns of a CSV file hold features.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureSelection {
    /// Every column other than the id and label columns.
    Rest,
    Named(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    /// Node id column; rows are numbered when absent.
    pub id_col: Option<String>,
    pub label_col: String,
    pub features: FeatureSelection,
}

impl CsvSchema {
    pub fn new(label_col: impl Into<String>) -> Self {
        CsvSchema {
            id_col: None,
            label_col: label_col.into(),
            features: FeatureSelection::Rest,
        }
    }
}

/// Cleanup performed while loading.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_rows: usize,
    pub imputed_cells: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "?")
}

struct Table {
    ids: Vec<String>,
    labels: Vec<String>,
    x: Matrix,
    feature_names: Vec<String>,
}

/// Reads a headed CSV file. Rows without a label are dropped; missing
/// feature cells are replaced by the mean of the column's present values.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(Dataset, LoadReport)> {
    let mut report = LoadReport::default();
    let table = read_table(
        path.as_ref(),
        Some(&schema.label_col),
        schema.id_col.as_deref(),
        &schema.features,
        &mut report,
    )?;
    let (class_names, labels) = encode_labels(&table.labels);
    let dataset = Dataset {
        ids: table.ids,
        x: table.x,
        labels,
        class_names,
        feature_names: table.feature_names,
    };
    dataset.validate()?;
    Ok((dataset, report))
}

/// Reads the named feature columns of an unlabeled CSV file, returning
/// node ids and features. Missing cells are imputed as in [`load_csv`].
pub fn load_features(
    path: impl AsRef<Path>,
    id_col: Option<&str>,
    features: &[String],
) -> Result<(Vec<String>, Matrix, LoadReport)> {
    let mut report = LoadReport::default();
    let selection = FeatureSelection::Named(features.to_vec());
    let table = read_table(path.as_ref(), None, id_col, &selection, &mut report)?;
    Ok((table.ids, table.x, report))
}

fn read_table(
    path: &Path,
    label_col: Option<&str>,
    id_col: Option<&str>,
    features: &FeatureSelection,
    report: &mut LoadReport,
) -> Result<Table> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: name.to_owned(),
                message: "column not found in header".into(),
            })
    };
    let label_idx = label_col.map(find).transpose()?;
    let id_idx = id_col.map(find).transpose()?;
    let feature_idx: Vec<usize> = match features {
        FeatureSelection::Rest => (0..headers.len())
            .filter(|&j| Some(j) != label_idx && Some(j) != id_idx)
            .collect(),
        FeatureSelection::Named(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
    };
    if feature_idx.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no feature columns selected",
            path.display()
        )));
    }

    let mut ids = Vec::new();
    let mut raw_labels = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // header is line 1
        let line = r + 2;
        if let Some(j) = label_idx {
            let label = record.get(j).unwrap_or("");
            if is_missing(label) {
                report.dropped_rows += 1;
                continue;
            }
            raw_labels.push(label.to_owned());
        }
        ids.push(match id_idx {
            Some(j) => record.get(j).unwrap_or("").to_owned(),
            None => (line - 2).to_string(),
        });
        for &j in &feature_idx {
            let cell = record.get(j).unwrap_or("");
            if is_missing(cell) {
                cells.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: line,
                column: headers[j].clone(),
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    row: line,
                    column: headers[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            cells.push(Some(v));
        }
    }
    if report.dropped_rows > 0 {
        log::warn!(
            "{}: dropped {} rows with a missing label",
            path.display(),
            report.dropped_rows
        );
    }

    let d = feature_idx.len();
    let n = ids.len();
    let mut means = vec![0.0; d];
    for (j, mean) in means.iter_mut().enumerate() {
        let present: Vec<f64> = (0..n).filter_map(|i| cells[i * d + j]).collect();
        if present.is_empty() {
            log::warn!(
                "{}: column '{}' has no values; imputing 0",
                path.display(),
                headers[feature_idx[j]]
            );
        } else {
            *mean = present.iter().sum::<f64>() / present.len() as f64;
        }
    }
    let data: Vec<f64> = cells
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.unwrap_or_else(|| {
                report.imputed_cells += 1;
                means[k % d]
            })
        })
        .collect();
    if report.imputed_cells > 0 {
        log::info!(
            "{}: imputed {} missing feature cells with column means",
            path.display(),
            report.imputed_cells
        );
    }

    Ok(Table {
        ids,
        labels: raw_labels,
        x: Matrix::from_vec(n, d, data)?,
        feature_names: feature_idx.iter().map(|&j| headers[j].clone()).collect(),
    })
}

/// Sorted vocabulary (numerically when every label parses as a number)
/// and dense codes.
fn encode_labels(raw: &[String]) -> (Vec<String>, Vec<usize>) {
    let mut names: Vec<String> = raw
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut pairs: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = pairs.into_iter().map(|(_, s)| s).collect();
    }
    let labels = raw
        .iter()
        .map(|l| {
            names
                .iter()
                .position(|n| n == l)
                .expect("label in vocabulary")
        })
        .collect();
    (names, labels)
}

/// Writes `dataset` as a headed CSV (`id`, features, `label`) with
/// shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["id".to_owned()];
    header.extend(dataset.feature_names.iter().cloned());
    header.push("label".to_owned());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..dataset.len() {
        let mut rec = vec![dataset.ids[i].clone()];
        rec.extend(dataset.x.row(i).iter().map(|v| v.to_string()));
        rec.push(dataset.class_names[dataset.labels[i]].clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Bins `values` by `edges`: label `b` iff `edges[b] <= v < edges[b+1]`,
/// with the top bin closed on the right.
pub fn quantize_labels(values: &[f64], edges: &[f64]) -> Result<Vec<usize>> {
    if edges.len() < 2
        || edges
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
    {
        return Err(Error::InvalidInput(format!(
            "bin edges must be strictly increasing with at least two entries, got {edges:?}"
        )));
    }
    let lo = edges[0];
    let hi = edges[edges.len() - 1];
    let offenders: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| !(v >= lo && v <= hi))
        .map(|(i, v)| format!("#{i}={v}"))
        .collect();
    if !offenders.is_empty() {
        return Err(Error::InvalidInput(format!(
            "values outside [{lo}, {hi}]: {}",
            offenders.join(", ")
        )));
    }
    let bins = edges.len() - 1;
    Ok(values
        .iter()
        .map(|&v| edges[1..].partition_point(|&e| e <= v).min(bins - 1))
        .collect())
}

/// Per-column affine map to zero mean and unit (population) variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Zero marks a constant column, which is mapped to zero.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        let mut means = Vec::with_capacity(x.cols());
        let mut stds = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let col = x.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let constant = std <= 1e-12 * mean.abs().max(1.0);
            if constant {
                log::warn!("feature column {j} is constant; mapping it to zero");
            }
            means.push(mean);
            stds.push(if constant { 0.0 } else { std });
        }
        Ok(Standardizer { means, stds })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(Error::shape(
                "standardize",
                x.shape(),
                (x.rows(), self.means.len()),
            ));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            if self.stds[j] == 0.0 {
                0.0
            } else {
                (x[(i, j)] - self.means[j]) / self.stds[j]
            }
        }))
    }

    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.stds.len())
            .filter(|&j| self.stds[j] == 0.0)
            .collect()
    }
}

/// Zero-mean, unit-variance columns; constant columns become zero.
pub fn standardize(x: &Matrix) -> Result<Matrix> {
    Standardizer::fit(x)?.transform(x)
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_owned()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}

/// Dense adjacency CSV: a header row of node ids (first cell empty), then
/// one row per node led by its id.
pub fn export_adjacency(a: &Matrix, node_ids: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if a.rows() != a.cols() || a.rows() != node_ids.len() {
        return Err(Error::shape(
            "export_adjacency",
            a.shape(),
            (node_ids.len(), node_ids.len()),
        ));
    }
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![String::new()];
    header.extend(node_ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in node_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(a.row(i).iter().map(|&v| format_sig6(v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_adjacency`].
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<(Vec<String>, Matrix)> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let ids: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .skip(1)
        .map(str::to_owned)
        .collect();
    let n = ids.len();
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (j, cell) in rec.iter().skip(1).enumerate() {
            data.push(cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                row: r + 2,
                column: ids.get(j).cloned().unwrap_or_default(),
                message: format!("non-numeric value '{cell}'"),
            })?);
        }
        rows += 1;
    }
    Ok((ids, Matrix::from_vec(rows, n, data)?))
}

/// Training history as CSV: `epoch,lr,loss,train_acc,val_acc`.
pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "epoch,lr,loss,train_acc,val_acc").map_err(io)?;
    for h in history {
        let val = h.val_acc.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", h.epoch, h.lr, h.loss, h.train_acc, val).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
