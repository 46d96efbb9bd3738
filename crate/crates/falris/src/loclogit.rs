//! Kernel-weighted local logistic regression in factor space with LOOCV
//! bandwidth selection, plus back-transformation of local coefficients to
//! the original component space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{Error, Result};
use crate::factor::FactorModel;

const RIDGE: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
// Newton safeguards for (quasi-)separated windows: steps are length-capped
// and iteration stops once a coefficient passes the saturation bound, so
// |b0| stays ≤ 34 and logistic(b0) remains strictly inside (0,1) in f64
// (saturation to exactly 1.0 starts near 36.7).
const MAX_STEP: f64 = 4.0;
const SATURATION_BOUND: f64 = 30.0;

/// Local logistic fit centered at a query point: covariates (1, z − z0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub center: Vec<f64>,
    /// (b0, b1..b_{p0})
    pub coefficients: DVector<f64>,
    pub bandwidth: f64,
    pub converged: bool,
    /// Weighted labels were pure (or the fit ran to the saturation guard);
    /// the ridge penalty keeps the coefficients finite regardless.
    pub separation: bool,
}

/// Local coefficients mapped back to component space:
/// β0 = b0, β_j = σ_j⁻¹ Γ_{j·} b_{−0}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackTransformed {
    pub beta: Vec<f64>,
    pub center_x: Vec<f64>,
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^eta), overflow-safe.
fn log1p_exp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Gaussian kernel weights w_i = exp(−‖z_i − z0‖²/(2h²)).
pub fn kernel_weights(z: &DMatrix<f64>, z0: &[f64], h: f64) -> Result<DVector<f64>> {
    if h <= 0.0 {
        return Err(Error::InvalidParameter(format!("bandwidth {h} must be positive")));
    }
    if z.ncols() != z0.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} score columns vs center of length {}",
            z.ncols(),
            z0.len()
        )));
    }
    Ok(DVector::from_iterator(
        z.nrows(),
        z.row_iter().map(|row| {
            let d2: f64 = row.iter().zip(z0).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * h * h)).exp()
        }),
    ))
}

/// Penalized negative log-likelihood: −Σ w_i [y_i η_i − log(1+e^{η_i})] + λ‖b‖².
fn penalized_nll(x: &DMatrix<f64>, y: &[u8], w: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let eta = x * b;
    let mut nll = 0.0;
    for i in 0..y.len() {
        nll -= w[i] * (f64::from(y[i]) * eta[i] - log1p_exp(eta[i]));
    }
    nll + RIDGE * b.norm_squared()
}

/// Weighted ridge-penalized logistic fit with covariates (1, z − z0), solved
/// by Newton/IRLS with step halving.
pub fn fit_local_logistic(
    z: &DMatrix<f64>,
    y: &[u8],
    z0: &[f64],
    h: f64,
) -> Result<LocalFit> {
    if z.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} score rows vs {} labels",
            z.nrows(),
            y.len()
        )));
    }
    let w = kernel_weights(z, z0, h)?;
    if w.iter().all(|&wi| wi < 1e-12) {
        return Err(Error::DegenerateData(format!(
            "no observation within reach of the window at h={h}"
        )));
    }
    let (n, p0) = z.shape();
    let x = DMatrix::from_fn(n, p0 + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            z[(i, j - 1)] - z0[j - 1]
        }
    });

    let w_pos: f64 = (0..n).filter(|&i| y[i] == 1).map(|i| w[i]).sum();
    let w_neg: f64 = (0..n).filter(|&i| y[i] == 0).map(|i| w[i]).sum();
    let mut separation = w_pos < 1e-12 || w_neg < 1e-12;

    let dim = p0 + 1;
    let mut b = DVector::zeros(dim);
    let mut nll = penalized_nll(&x, y, &w, &b);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let eta = &x * &b;
        let mut grad = DVector::from_element(dim, 0.0);
        let mut hess = DMatrix::from_element(dim, dim, 0.0);
        for i in 0..n {
            let p = logistic(eta[i]);
            let r = w[i] * (f64::from(y[i]) - p);
            let s = w[i] * p * (1.0 - p);
            for a in 0..dim {
                grad[a] += x[(i, a)] * r;
                for c in a..dim {
                    hess[(a, c)] += x[(i, a)] * s * x[(i, c)];
                }
            }
        }
        for a in 0..dim {
            grad[a] -= 2.0 * RIDGE * b[a];
            hess[(a, a)] += 2.0 * RIDGE;
            for c in 0..a {
                hess[(a, c)] = hess[(c, a)];
            }
        }
        if grad.norm() <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut step = hess
            .cholesky()
            .ok_or_else(|| Error::Numerical("IRLS normal equations not PD".into()))?
            .solve(&grad);
        let longest = step.amax();
        if longest > MAX_STEP {
            step *= MAX_STEP / longest;
        }
        // halve until the penalized NLL improves
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &b + &step * scale;
            let cand_nll = penalized_nll(&x, y, &w, &cand);
            if cand_nll <= nll + 1e-14 {
                b = cand;
                nll = cand_nll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break; // numerically at the optimum already
        }
        if b.amax() > SATURATION_BOUND {
            // past this point the window likelihood is flat to float
            // precision; iterating further only drifts b outward
            separation = true;
            break;
        }
    }
    if !converged {
        // a final gradient check: step-halving may exit at the optimum
        let eta = &x * &b;
        let mut grad = DVector::from_element(dim, 0.0);
        for i in 0..n {
            let r = w[i] * (f64::from(y[i]) - logistic(eta[i]));
            for a in 0..dim {
                grad[a] += x[(i, a)] * r;
            }
        }
        for a in 0..dim {
            grad[a] -= 2.0 * RIDGE * b[a];
        }
        converged = grad.norm() <= GRAD_TOL;
    }
    if !converged && !separation {
        return Err(Error::NonConvergence(format!(
            "local logistic fit did not reach gradient tolerance at h={h}"
        )));
    }
    Ok(LocalFit { center: z0.to_vec(), coefficients: b, bandwidth: h, converged, separation })
}

/// Predicted probability at the window center: logistic(b0).
pub fn predict_at_center(fit: &LocalFit) -> f64 {
    logistic(fit.coefficients[0])
}

/// LOOCV score Q(h) = Σ_i R̃_h(z_i)² − 2 Σ_i Y_i R̃_h^{(−i)}(z_i).
pub fn loocv_q(z: &DMatrix<f64>, y: &[u8], h: f64) -> Result<f64> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::DegenerateData("LOOCV needs at least 2 observations".into()));
    }
    let mut q = 0.0;
    for i in 0..n {
        let zi: Vec<f64> = z.row(i).iter().copied().collect();
        let full = fit_local_logistic(z, y, &zi, h)?;
        let r_full = predict_at_center(&full);
        q += r_full * r_full;

        let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let z_loo = z.select_rows(keep.iter());
        let y_loo: Vec<u8> = keep.iter().map(|&j| y[j]).collect();
        let loo = fit_local_logistic(&z_loo, &y_loo, &zi, h)?;
        q -= 2.0 * f64::from(y[i]) * predict_at_center(&loo);
    }
    Ok(q)
}

/// Smallest-Q bandwidth from the grid; ties (within 1e−12) go to the smaller
/// h. Bandwidths that fail at any center are skipped; failing everywhere is
/// an error.
pub fn loocv_bandwidth(z: &DMatrix<f64>, y: &[u8], grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty bandwidth grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    let mut failures = Vec::new();
    for &h in &sorted {
        match loocv_q(z, y, h) {
            Ok(q) => {
                if best.is_none_or(|(_, bq)| q < bq - 1e-12) {
                    best = Some((h, q));
                }
            }
            Err(e) => failures.push(format!("h={h}: {e}")),
        }
    }
    match best {
        Some((h, _)) => Ok(h),
        None => Err(Error::NonConvergence(format!(
            "every bandwidth failed [{}]",
            failures.join("; ")
        ))),
    }
}

/// 20 geometrically spaced bandwidths between the 5th percentile and twice
/// the maximum of the pairwise score distances.
pub fn bandwidth_grid(z: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::DegenerateData("bandwidth grid needs at least 2 points".into()));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = (0..z.ncols()).map(|c| (z[(i, c)] - z[(j, c)]).powi(2)).sum();
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let hi = 2.0 * dists[dists.len() - 1];
    if hi <= 0.0 {
        return Err(Error::DegenerateData("all score points coincide".into()));
    }
    let mut lo = percentile_linear(&dists, 0.05);
    if lo <= 0.0 {
        lo = hi * 1e-6; // duplicate points may pull the percentile to zero
    }
    if lo >= hi {
        return Ok(vec![hi]);
    }
    let m = 20;
    Ok((0..m)
        .map(|t| lo * (hi / lo).powf(t as f64 / (m - 1) as f64))
        .collect())
}

/// Linear-interpolation percentile of sorted data, q in [0,1].
fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    let idx = q * (sorted.len() - 1) as f64;
    let lo = idx.floor() as usize;
    let hi = idx.ceil() as usize;
    let frac = idx - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// β0 = b0; β_j = σ_j⁻¹ Γ_{j·} b_{−0}: the local slopes expressed against
/// the unstandardized component states.
pub fn back_transform(
    fit: &LocalFit,
    scaler: &Scaler,
    model: &FactorModel,
    x0: &[f64],
) -> Result<BackTransformed> {
    let p = scaler.sds.len();
    let p0 = model.p0();
    if fit.coefficients.len() != p0 + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients vs p0+1={}",
            fit.coefficients.len(),
            p0 + 1
        )));
    }
    if model.p() != p || x0.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "scaler p={p}, model p={}, x0 len={}",
            model.p(),
            x0.len()
        )));
    }
    let gamma = model.score_weights();
    let mut beta = Vec::with_capacity(p + 1);
    beta.push(fit.coefficients[0]);
    for j in 0..p {
        let dot: f64 = (0..p0).map(|k| gamma[(j, k)] * fit.coefficients[k + 1]).sum();
        beta.push(dot / scaler.sds[j]);
    }
    Ok(BackTransformed { beta, center_x: x0.to_vec() })
}
