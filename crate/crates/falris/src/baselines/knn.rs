//! k-nearest-neighbour classifier under the Minkowski metric.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};

/// (Σ|a_i − b_i|^q)^{1/q}, q ≥ 1.
pub fn minkowski_distance(a: &[f64], b: &[f64], q: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if q < 1.0 {
        return Err(Error::InvalidParameter(format!("Minkowski exponent {q} must be ≥ 1")));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(q)).sum::<f64>().powf(1.0 / q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    train_states: DMatrix<f64>,
    train_labels: Vec<u8>,
    k: usize,
    q: f64,
}

impl KnnModel {
    pub fn fit(train: &DataSet, k: usize, q: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if k > train.n() {
            return Err(Error::InvalidParameter(format!(
                "k={k} exceeds training size {}",
                train.n()
            )));
        }
        if q < 1.0 {
            return Err(Error::InvalidParameter(format!("Minkowski exponent {q} must be ≥ 1")));
        }
        Ok(Self {
            train_states: train.states().clone(),
            train_labels: train.labels().to_vec(),
            k,
            q,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Fraction of the k nearest training points labelled 1. Distance ties
    /// are broken toward the lower training index.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let n = self.train_states.nrows();
        let mut order: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let row: Vec<f64> = self.train_states.row(i).iter().copied().collect();
                minkowski_distance(&row, x, self.q).map(|d| (d, i))
            })
            .collect::<Result<_>>()?;
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ones = order[..self.k].iter().filter(|&&(_, i)| self.train_labels[i] == 1).count();
        Ok(ones as f64 / self.k as f64)
    }

    /// 1 iff the neighbour fraction is ≥ 0.5.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= 0.5))
    }
}
