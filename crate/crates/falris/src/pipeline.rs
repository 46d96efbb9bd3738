//! End-to-end reliability estimator: standardize → factor scores → local
//! logistic fits with a cross-validated bandwidth → isotonic projection →
//! ROC (Youden) classification threshold.

use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

use crate::dataset::{DataSet, Scaler};
use crate::error::{Error, Result};
use crate::factor::{self, FactorModel, FactorSelection};
use crate::isotonic::{comparable_pairs, isotonic_project};
use crate::loclogit::{
    bandwidth_grid, fit_local_logistic, logistic, loocv_bandwidth, predict_at_center,
};
use crate::metrics::youden_threshold;

const FORMAT_VERSION: u32 = 1;
/// Bandwidth used when a query point is beyond every training window.
const GLOBAL_H: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub version: u32,
    pub scaler: Scaler,
    pub factor_model: FactorModel,
    pub factor_selection: FactorSelection,
    pub bandwidth: f64,
    pub train_scores: DMatrix<f64>,
    pub train_labels: Vec<u8>,
    pub threshold: f64,
    pub train_predictions: Vec<f64>,
    pub seed: u64,
}

/// Predicted reliabilities for a configuration matrix. `fallback_points`
/// lists row indices whose local window was empty (predicted by the global
/// fit instead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub reliabilities: Vec<f64>,
    pub fallback_points: Vec<usize>,
}

/// Fit the full estimator on a training sample. `alpha` is the level of the
/// factor-count test; everything downstream of the data is deterministic, so
/// `seed` is recorded for provenance only.
pub fn fit_pipeline(train: &DataSet, alpha: f64, seed: u64) -> Result<FittedPipeline> {
    if !train.has_both_classes() {
        return Err(Error::DegenerateData(
            "degenerate labels: training sample needs both classes".into(),
        ));
    }
    let scaler = Scaler::fit(train.states())?;
    let u = scaler.apply(train.states())?;
    let factor_selection = factor::select_num_factors(&u, alpha).map_err(|e| {
        match factor::eigen_scree(&u) {
            Ok(ev) => Error::Numerical(format!(
                "factor selection failed: {e}; correlation eigenvalues {ev:?}"
            )),
            Err(_) => e,
        }
    })?;
    let factor_model = factor::fit_fa(&u, factor_selection.p0)?;
    let train_scores = factor::scores(&factor_model, &u)?;

    let grid = bandwidth_grid(&train_scores)?;
    let bandwidth = loocv_bandwidth(&train_scores, train.labels(), &grid)?;

    let (raw, _) =
        local_predictions_at(&train_scores, train.labels(), &train_scores, bandwidth)?;
    let order = comparable_pairs(train.states());
    let train_predictions = isotonic_project(&raw, &order)?;
    let threshold = youden_threshold(&train_predictions, train.labels())?;

    Ok(FittedPipeline {
        version: FORMAT_VERSION,
        scaler,
        factor_model,
        factor_selection,
        bandwidth,
        train_scores,
        train_labels: train.labels().to_vec(),
        threshold,
        train_predictions,
        seed,
    })
}

impl FittedPipeline {
    /// Reliability estimates for new configurations: train-scaler
    /// standardization, train score weights, local fits on the training
    /// observations at h_CV, then isotonic projection over the new points'
    /// own partial order.
    pub fn predict(&self, states: &DMatrix<f64>) -> Result<Prediction> {
        let u = self.scaler.apply(states)?;
        let z = factor::scores(&self.factor_model, &u)?;
        let (raw, fallback_points) =
            local_predictions_at(&self.train_scores, &self.train_labels, &z, self.bandwidth)?;
        let order = comparable_pairs(states);
        let reliabilities = isotonic_project(&raw, &order)?;
        Ok(Prediction { reliabilities, fallback_points })
    }

    /// 1 iff reliability ≥ the train-derived Youden threshold.
    pub fn classify(&self, reliabilities: &[f64]) -> Vec<u8> {
        reliabilities.iter().map(|&r| u8::from(r >= self.threshold)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let out: Self = serde_json::from_str(text)?;
        if out.version != FORMAT_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported pipeline format version {}",
                out.version
            )));
        }
        Ok(out)
    }
}

/// Local fits on (z, y) centered at each row of `targets`.
fn local_predictions_at(
    z: &DMatrix<f64>,
    y: &[u8],
    targets: &DMatrix<f64>,
    h: f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut out = Vec::with_capacity(targets.nrows());
    let mut fallbacks = Vec::new();
    let mut global_fit = None;
    for i in 0..targets.nrows() {
        let z0: Vec<f64> = targets.row(i).iter().copied().collect();
        match fit_local_logistic(z, y, &z0, h) {
            Ok(fit) => out.push(predict_at_center(&fit)),
            Err(Error::DegenerateData(_)) => {
                // empty window: fall back to the global (unweighted) fit,
                // centered at the training mean so the problem stays
                // well-conditioned, and extrapolate its linear predictor
                if global_fit.is_none() {
                    let mean: Vec<f64> =
                        (0..z.ncols()).map(|c| z.column(c).mean()).collect();
                    global_fit = Some((fit_local_logistic(z, y, &mean, GLOBAL_H)?, mean));
                }
                let (fit, mean) = global_fit.as_ref().unwrap();
                let eta = fit.coefficients[0]
                    + (0..z.ncols())
                        .map(|c| fit.coefficients[c + 1] * (z0[c] - mean[c]))
                        .sum::<f64>();
                out.push(logistic(eta));
                fallbacks.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((out, fallbacks))
}
