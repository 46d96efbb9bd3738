//! Data containers shared by the whole crate: component-state matrices with
//! binary system labels, column standardization, and train/test splitting.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Observed sample: one row per system, one column per component state in
/// [0,1], plus the binary system state. Simulated data additionally carries
/// the analytic reliability of each configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    states: DMatrix<f64>,
    labels: Vec<u8>,
    true_reliability: Option<Vec<f64>>,
}

impl DataSet {
    pub fn new(states: DMatrix<f64>, labels: Vec<u8>) -> Result<Self> {
        Self::with_reliability(states, labels, None)
    }

    pub fn with_reliability(
        states: DMatrix<f64>,
        labels: Vec<u8>,
        true_reliability: Option<Vec<f64>>,
    ) -> Result<Self> {
        if states.nrows() == 0 || states.ncols() == 0 {
            return Err(Error::DegenerateData("empty state matrix".into()));
        }
        if states.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} state rows vs {} labels",
                states.nrows(),
                labels.len()
            )));
        }
        if let Some(v) = states.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::DegenerateData(format!("state {v} out of range [0,1]")));
        }
        if let Some(y) = labels.iter().find(|y| **y > 1) {
            return Err(Error::DegenerateData(format!("label {y} not in {{0,1}}")));
        }
        if let Some(r) = &true_reliability {
            if r.len() != labels.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} reliabilities vs {} labels",
                    r.len(),
                    labels.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::DegenerateData(format!(
                    "true reliability {v} out of range [0,1]"
                )));
            }
        }
        Ok(Self { states, labels, true_reliability })
    }

    pub fn n(&self) -> usize {
        self.states.nrows()
    }

    pub fn p(&self) -> usize {
        self.states.ncols()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn true_reliability(&self) -> Option<&[f64]> {
        self.true_reliability.as_deref()
    }

    /// Both classes present?
    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&y| y == 0) && self.labels.iter().any(|&y| y == 1)
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let states = DMatrix::from_fn(indices.len(), self.p(), |i, j| self.states[(indices[i], j)]);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let true_reliability = self
            .true_reliability
            .as_ref()
            .map(|r| indices.iter().map(|&i| r[i]).collect());
        Self { states, labels, true_reliability }
    }

    /// Random train/test split; `fraction` of the rows (rounded) go to train.
    /// Deterministic for a fixed seed.
    pub fn split_train_test(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) || fraction == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "split fraction {fraction} outside (0,1)"
            )));
        }
        let n = self.n();
        let n1 = (fraction * n as f64).round() as usize;
        if n1 == 0 || n1 == n {
            return Err(Error::DegenerateData(format!(
                "split of {n} rows at fraction {fraction} leaves an empty set"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let (train_idx, test_idx) = idx.split_at(n1);
        Ok((self.subset(train_idx), self.subset(test_idx)))
    }

    /// FNV-1a hash of the full content; used to verify that every method in a
    /// study replication sees byte-identical data.
    pub fn content_hash(&self) -> u64 {
        const OFFSET: u64 = 0xcbf29ce484222325;
        const PRIME: u64 = 0x100000001b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.n() as u64).to_le_bytes());
        eat(&(self.p() as u64).to_le_bytes());
        for i in 0..self.n() {
            for j in 0..self.p() {
                eat(&self.states[(i, j)].to_le_bytes());
            }
            eat(&[self.labels[i]]);
            if let Some(r) = &self.true_reliability {
                eat(&r[i].to_le_bytes());
            }
        }
        h
    }

    /// CSV with header `x1,...,xp,y[,true_r]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        if self.true_reliability.is_some() {
            header.push("true_r".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = (0..self.p()).map(|j| self.states[(i, j)].to_string()).collect();
            rec.push(self.labels[i].to_string());
            if let Some(r) = &self.true_reliability {
                rec.push(r[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let has_r = cols.last() == Some(&"true_r");
        let p = cols.len() - 1 - usize::from(has_r);
        if p == 0 || cols.get(p) != Some(&"y") {
            return Err(Error::DegenerateData(
                "expected CSV header x1,...,xp,y[,true_r]".into(),
            ));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        let mut rel = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::DegenerateData(format!("non-numeric cell {s:?}")))
            };
            let mut row = Vec::with_capacity(p);
            for j in 0..p {
                row.push(parse(&rec[j])?);
            }
            let y = parse(&rec[p])?;
            if y != 0.0 && y != 1.0 {
                return Err(Error::DegenerateData(format!("label {y} not in {{0,1}}")));
            }
            labels.push(y as u8);
            if has_r {
                rel.push(parse(&rec[p + 1])?);
            }
            rows.push(row);
        }
        let n = rows.len();
        let states = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::with_reliability(states, labels, has_r.then_some(rel))
    }

    pub fn read_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Column means and sample standard deviations (n−1 denominator) of a
/// training matrix; applied unchanged to any later matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Scaler {
    pub fn fit(states: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = states.shape();
        if n < 2 {
            return Err(Error::DegenerateData(format!(
                "need at least 2 rows to standardize, got {n}"
            )));
        }
        let mut means = Vec::with_capacity(p);
        let mut sds = Vec::with_capacity(p);
        for j in 0..p {
            let col = states.column(j);
            let mu = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mu) * (v - mu)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            if sd == 0.0 {
                return Err(Error::DegenerateData(format!("column {} has zero variance", j + 1)));
            }
            means.push(mu);
            sds.push(sd);
        }
        Ok(Self { means, sds })
    }

    pub fn apply(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if states.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns vs scaler of length {}",
                states.ncols(),
                self.means.len()
            )));
        }
        Ok(DMatrix::from_fn(states.nrows(), states.ncols(), |i, j| {
            (states[(i, j)] - self.means[j]) / self.sds[j]
        }))
    }
}
