//! Sensor CSV ingestion: subsampling, column triage, median imputation,
//! binary status mapping, and min–max rescaling into a [`DataSet`], plus the
//! real-data evaluation run.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};
use crate::factor::{correlation_matrix, eigen_scree};
use crate::metrics::MetricsReport;
use crate::study::{method_predictions, Method, StudyParams};

/// Why a sensor column was excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    AllMissing,
    ZeroVariance,
}

/// What ingestion did to each column, for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total_rows: usize,
    pub kept_rows: usize,
    pub dropped_columns: Vec<(String, DropReason)>,
    /// (column, min, max) used for the [0,1] rescale.
    pub column_bounds: Vec<(String, f64, f64)>,
    pub imputed_cells: usize,
}

/// Default status interpretation: NORMAL is operative, anything else failed.
fn default_status(value: &str) -> u8 {
    u8::from(value == "NORMAL")
}

pub fn ingest_sensor_csv(
    path: &Path,
    subsample_every: usize,
    status_column: &str,
    status_map: Option<&HashMap<String, u8>>,
) -> Result<(DataSet, IngestReport)> {
    let file = std::fs::File::open(path)?;
    ingest_sensor_reader(file, subsample_every, status_column, status_map)
}

pub fn ingest_sensor_reader<R: Read>(
    input: R,
    subsample_every: usize,
    status_column: &str,
    status_map: Option<&HashMap<String, u8>>,
) -> Result<(DataSet, IngestReport)> {
    if subsample_every == 0 {
        return Err(Error::InvalidParameter("subsample interval must be ≥ 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let status_idx = header
        .iter()
        .position(|h| h == status_column)
        .ok_or_else(|| Error::DegenerateData(format!("status column '{status_column}' missing")))?;

    // keep the first row and every `subsample_every`-th after it
    let mut raw: Vec<Vec<Option<f64>>> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut total_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        let keep = total_rows % subsample_every == 0;
        total_rows += 1;
        if !keep {
            continue;
        }
        let status = record.get(status_idx).unwrap_or("").trim();
        let label = match status_map {
            Some(map) => *map.get(status).ok_or_else(|| {
                Error::DegenerateData(format!("status '{status}' not covered by the mapping"))
            })?,
            None => default_status(status),
        };
        labels.push(label);
        let row = (0..header.len())
            .filter(|&j| j != status_idx)
            .map(|j| record.get(j).and_then(|c| c.trim().parse::<f64>().ok()))
            .collect();
        raw.push(row);
    }
    if raw.is_empty() {
        return Err(Error::DegenerateData("no data rows in file".into()));
    }
    let sensor_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != status_idx)
        .map(|(_, h)| h.clone())
        .collect();

    // column triage on the subsampled rows
    let kept_rows = raw.len();
    let mut dropped = Vec::new();
    let mut kept_cols = Vec::new();
    for (j, name) in sensor_names.iter().enumerate() {
        let present: Vec<f64> = raw.iter().filter_map(|r| r[j]).collect();
        if present.is_empty() {
            dropped.push((name.clone(), DropReason::AllMissing));
            continue;
        }
        let (lo, hi) = present
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if lo == hi {
            dropped.push((name.clone(), DropReason::ZeroVariance));
            continue;
        }
        kept_cols.push((j, name.clone(), lo, hi));
    }
    if kept_cols.is_empty() {
        return Err(Error::DegenerateData("no usable sensor columns survive triage".into()));
    }

    // median imputation, then min–max rescale with the reported bounds
    let mut imputed_cells = 0usize;
    let mut states = DMatrix::zeros(kept_rows, kept_cols.len());
    for (out_j, &(j, _, lo, hi)) in kept_cols.iter().enumerate() {
        let mut present: Vec<f64> = raw.iter().filter_map(|r| r[j]).collect();
        present.sort_by(|a, b| a.total_cmp(b));
        let mid = present.len() / 2;
        let median = if present.len() % 2 == 1 {
            present[mid]
        } else {
            0.5 * (present[mid - 1] + present[mid])
        };
        for (i, row) in raw.iter().enumerate() {
            let v = row[j].unwrap_or_else(|| {
                imputed_cells += 1;
                median
            });
            states[(i, out_j)] = (v - lo) / (hi - lo);
        }
    }

    let report = IngestReport {
        total_rows,
        kept_rows,
        dropped_columns: dropped,
        column_bounds: kept_cols.iter().map(|(_, n, lo, hi)| (n.clone(), *lo, *hi)).collect(),
        imputed_cells,
    };
    Ok((DataSet::new(states, labels)?, report))
}

/// One method's test-set row in the real-data table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataRow {
    pub method: Method,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataResult {
    pub rows: Vec<RealDataRow>,
    /// Sensor correlation matrix (full data), for the heat-map export.
    pub correlation: DMatrix<f64>,
    /// Correlation eigenvalues, descending, for the scree export.
    pub scree: Vec<f64>,
}

/// 80/20 split, fit every requested method on the train half, Table-style
/// classification metrics on the test half.
pub fn run_real_data(
    ds: &DataSet,
    methods: &[Method],
    params: &StudyParams,
    seed: u64,
) -> Result<RealDataResult> {
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let (train, test) = ds.split_train_test(params.train_fraction, seed)?;
    if !train.has_both_classes() || !test.has_both_classes() {
        return Err(Error::DegenerateData(
            "train/test split leaves a single-class set; adjust the seed or data".into(),
        ));
    }
    let correlation = correlation_matrix(ds.states())?;
    let scree = eigen_scree(ds.states())?;
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let (probs, classes) = method_predictions(method, &train, &test, params, seed)?;
        let counts = crate::metrics::confusion(test.labels(), &classes)?;
        let mut report = crate::metrics::classification_metrics(&counts);
        report.auc = crate::metrics::auc_estimate(&probs, test.labels()).ok();
        rows.push(RealDataRow { method, report });
    }
    Ok(RealDataResult { rows, correlation, scree })
}

pub fn render_real_data_csv(result: &RealDataResult) -> String {
    let mut out = String::from("method,sensitivity,specificity,accuracy,tpv,f1,auc\n");
    let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.method,
            fmt_opt(row.report.sensitivity),
            fmt_opt(row.report.specificity),
            fmt_opt(row.report.accuracy),
            fmt_opt(row.report.tpv),
            fmt_opt(row.report.f1),
            fmt_opt(row.report.auc),
        ));
    }
    out
}

pub fn render_correlation_csv(correlation: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..correlation.nrows() {
        let row: Vec<String> =
            (0..correlation.ncols()).map(|j| format!("{:.8}", correlation[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn render_scree_csv(scree: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, v) in scree.iter().enumerate() {
        out.push_str(&format!("{},{v:.8}\n", i + 1));
    }
    out
}
