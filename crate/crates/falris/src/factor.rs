//! Maximum-likelihood factor analysis of a correlation matrix, fitted by EM,
//! with varimax rotation, regression score weights, and the sequential
//! likelihood-ratio test for the number of factors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Lower bound kept on uniquenesses (Heywood-case guard).
const PSI_FLOOR: f64 = 0.005;
const EM_MAX_ITER: usize = 500;
const EM_TOL: f64 = 1e-8;

/// Fitted factor model: R ≈ ΛΛᵀ + Ψ on the correlation scale.
///
/// `score_weights` is Γ = R⁻¹Λ, so factor scores are Z = UΓ for standardized
/// data U (regression/Thomson scores).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    loadings: DMatrix<f64>,
    uniquenesses: DVector<f64>,
    score_weights: DMatrix<f64>,
    p0: usize,
}

impl FactorModel {
    /// Assemble a model from explicit parts (e.g., weights computed
    /// elsewhere), checking shape and communality invariants.
    pub fn from_parts(
        loadings: DMatrix<f64>,
        uniquenesses: DVector<f64>,
        score_weights: DMatrix<f64>,
    ) -> Result<Self> {
        let (p, p0) = loadings.shape();
        if uniquenesses.len() != p || score_weights.shape() != (p, p0) {
            return Err(Error::DimensionMismatch(
                "loadings, uniquenesses, and score weights disagree on p or p0".into(),
            ));
        }
        for j in 0..p {
            let h2: f64 = (0..p0).map(|k| loadings[(j, k)] * loadings[(j, k)]).sum();
            if !((-1e-8..=1.0 + 1e-8).contains(&h2))
                || (uniquenesses[j] - (1.0 - h2)).abs() > 1e-8
            {
                return Err(Error::InvalidParameter(format!(
                    "row {j}: communality {h2} and uniqueness {} are inconsistent",
                    uniquenesses[j]
                )));
            }
        }
        Ok(Self { loadings, uniquenesses, score_weights, p0 })
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn uniquenesses(&self) -> &DVector<f64> {
        &self.uniquenesses
    }

    pub fn score_weights(&self) -> &DMatrix<f64> {
        &self.score_weights
    }

    pub fn p0(&self) -> usize {
        self.p0
    }

    pub fn p(&self) -> usize {
        self.loadings.nrows()
    }

    /// Row sums of squared loadings;, by construction, 1 − uniqueness.
    pub fn communalities(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            self.loadings.row_iter().map(|r| r.iter().map(|v| v * v).sum()),
        )
    }
}

/// Outcome of the sequential factor-count search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSelection {
    pub p0: usize,
    /// True when every identifiable count was rejected and `p0` is the cap.
    pub all_rejected: bool,
    /// p-value per tested count, starting at p0 = 1.
    pub p_values: Vec<f64>,
}

/// Largest p0 satisfying the identifiability bound (p − p0)² ≥ p + p0.
pub fn max_identifiable_factors(p: usize) -> usize {
    (1..=p).filter(|&k| identifiable(p, k)).last().unwrap_or(0)
}

fn identifiable(p: usize, p0: usize) -> bool {
    let d = p as i64 - p0 as i64;
    d * d >= (p + p0) as i64
}

/// Sample correlation matrix of the columns of `u`.
pub fn correlation_matrix(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = u.shape();
    if n < 2 {
        return Err(Error::DegenerateData("need at least 2 rows for a correlation".into()));
    }
    let means: Vec<f64> = (0..p).map(|j| u.column(j).sum() / n as f64).collect();
    let mut c = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let mut s = 0.0;
            for i in 0..n {
                s += (u[(i, a)] - means[a]) * (u[(i, b)] - means[b]);
            }
            c[(a, b)] = s;
            c[(b, a)] = s;
        }
    }
    let mut r = DMatrix::zeros(p, p);
    for a in 0..p {
        if c[(a, a)] <= 0.0 {
            return Err(Error::DegenerateData(format!("column {} has zero variance", a + 1)));
        }
    }
    for a in 0..p {
        for b in 0..p {
            r[(a, b)] = c[(a, b)] / (c[(a, a)] * c[(b, b)]).sqrt();
        }
    }
    Ok(r)
}

/// Eigenvalues of the sample correlation matrix, descending (scree data).
pub fn eigen_scree(u: &DMatrix<f64>) -> Result<Vec<f64>> {
    let r = correlation_matrix(u)?;
    let mut ev: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// ML factor model of standardized data `u` with `p0` factors.
pub fn fit_fa(u: &DMatrix<f64>, p0: usize) -> Result<FactorModel> {
    let (n, p) = u.shape();
    if n <= p {
        return Err(Error::DegenerateData(format!("n={n} must exceed p={p}")));
    }
    fit_fa_corr(&correlation_matrix(u)?, p0)
}

/// ML factor model of an explicit correlation matrix.
pub fn fit_fa_corr(r: &DMatrix<f64>, p0: usize) -> Result<FactorModel> {
    let (lambda, psi, _) = em_fit(r, p0)?;
    finish_model(r, lambda, psi, p0)
}

fn finish_model(
    r: &DMatrix<f64>,
    lambda: DMatrix<f64>,
    _psi: Vec<f64>,
    p0: usize,
) -> Result<FactorModel> {
    let p = r.nrows();
    let mut lambda = if p0 >= 2 { varimax(&lambda).0 } else { lambda };

    // sign convention: the largest-|loading| entry of each column is positive
    for k in 0..p0 {
        let mut arg = 0;
        for j in 1..p {
            if lambda[(j, k)].abs() > lambda[(arg, k)].abs() {
                arg = j;
            }
        }
        if lambda[(arg, k)] < 0.0 {
            for j in 0..p {
                lambda[(j, k)] = -lambda[(j, k)];
            }
        }
    }

    // uniquenesses tied exactly to communalities, with the floor enforced by
    // rescaling offending rows
    let mut psi = DVector::zeros(p);
    for j in 0..p {
        let mut h2: f64 = (0..p0).map(|k| lambda[(j, k)] * lambda[(j, k)]).sum();
        if h2 > 1.0 - PSI_FLOOR {
            let scale = ((1.0 - PSI_FLOOR) / h2).sqrt();
            for k in 0..p0 {
                lambda[(j, k)] *= scale;
            }
            h2 = 1.0 - PSI_FLOOR;
        }
        psi[j] = 1.0 - h2;
    }

    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("correlation matrix is not positive definite".into()))?;
    let score_weights = chol.solve(&lambda);
    Ok(FactorModel { loadings: lambda, uniquenesses: psi, score_weights, p0 })
}

/// EM iterations. Returns unrotated loadings, uniquenesses, and the
/// discrepancy value F = log det Σ − log det R + tr(RΣ⁻¹) − p per accepted
/// iterate (non-increasing; proportional to the negative profile
/// log-likelihood).
///
/// Plain EM has a linear rate that collapses near saturated models (measured
/// in the thousands of iterations for tail cases), so each iteration is a
/// SQUAREM cycle: two EM base steps plus a safeguarded extrapolation kept
/// only when it does not increase F. If the cycle budget runs out before the
/// tolerance is met, a quasi-Newton pass on the profiled likelihood over Ψ
/// (the same objective `factanal` optimizes) finishes from the EM iterate.
fn em_fit(r: &DMatrix<f64>, p0: usize) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let p = r.nrows();
    if r.ncols() != p {
        return Err(Error::DimensionMismatch("correlation matrix must be square".into()));
    }
    if p0 < 1 {
        return Err(Error::InvalidParameter("p0 must be at least 1".into()));
    }
    if !identifiable(p, p0) {
        return Err(Error::InvalidParameter(format!(
            "p0={p0} violates the identifiability bound (p−p0)² ≥ p+p0 at p={p}"
        )));
    }

    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("correlation matrix is not positive definite".into()))?
        .inverse();
    // factanal-style start, then the conditional-ML loadings given Ψ
    let psi0: Vec<f64> =
        (0..p).map(|j| ((1.0 - 0.5 * p0 as f64 / p as f64) / r_inv[(j, j)]).max(PSI_FLOOR)).collect();
    let mut lambda = conditional_loadings(r, &psi0, p0);
    let mut psi = psi0;

    let log_det_r = log_det_spd(r)?;
    let discrepancy = |lambda: &DMatrix<f64>, psi: &[f64]| -> Result<f64> {
        let (sigma_inv, log_det_sigma) = woodbury_inverse(lambda, psi)?;
        Ok(log_det_sigma - log_det_r + (r * &sigma_inv).trace() - p as f64)
    };

    let mut f = discrepancy(&lambda, &psi)?;
    let mut trace = vec![f];
    for _ in 0..EM_MAX_ITER {
        let (l1, s1) = em_step(r, &lambda, &psi)?;
        let (l2, s2) = em_step(r, &l1, &s1)?;

        // SQUAREM (SqS3) extrapolation over the flattened (Λ, Ψ) parameters
        let mut r_norm2 = 0.0;
        let mut v_norm2 = 0.0;
        for k in 0..p * p0 {
            let d1 = l1.as_slice()[k] - lambda.as_slice()[k];
            let d2 = l2.as_slice()[k] - l1.as_slice()[k];
            r_norm2 += d1 * d1;
            v_norm2 += (d2 - d1) * (d2 - d1);
        }
        for j in 0..p {
            let d1 = s1[j] - psi[j];
            let d2 = s2[j] - s1[j];
            r_norm2 += d1 * d1;
            v_norm2 += (d2 - d1) * (d2 - d1);
        }

        let (mut next_l, mut next_s) = (l2, s2);
        if v_norm2 > 1e-300 {
            let alpha = -(r_norm2 / v_norm2).sqrt().max(1.0);
            let mut le = lambda.clone();
            for k in 0..p * p0 {
                let t0 = lambda.as_slice()[k];
                let d1 = l1.as_slice()[k] - t0;
                let d2 = next_l.as_slice()[k] - l1.as_slice()[k];
                le.as_mut_slice()[k] = t0 - 2.0 * alpha * d1 + alpha * alpha * (d2 - d1);
            }
            let mut se = psi.clone();
            for j in 0..p {
                let d1 = s1[j] - psi[j];
                let d2 = next_s[j] - s1[j];
                se[j] = (psi[j] - 2.0 * alpha * d1 + alpha * alpha * (d2 - d1)).clamp(PSI_FLOOR, 4.0);
            }
            // one stabilizing EM step, then keep only if F did not get worse
            if let Ok((ls, ss)) = em_step(r, &le, &se) {
                let f_base = discrepancy(&next_l, &next_s)?;
                if let Ok(f_ext) = discrepancy(&ls, &ss) {
                    if f_ext.is_finite() && f_ext <= f_base {
                        next_l = ls;
                        next_s = ss;
                    }
                }
            }
        }

        lambda = next_l;
        psi = next_s;
        let f_new = discrepancy(&lambda, &psi)?;
        trace.push(f_new);
        if (f - f_new).abs() < EM_TOL || f_new < 1e-14 {
            return Ok((lambda, psi, trace));
        }
        f = f_new;
    }

    let (psi, _, converged) = polish_profile(r, &psi, p0, f, &mut trace);
    if converged {
        let lambda = conditional_loadings(r, &psi, p0);
        return Ok((lambda, psi, trace));
    }
    Err(Error::NonConvergence(format!(
        "factor EM did not converge in {EM_MAX_ITER} iterations"
    )))
}

/// One Rubin–Thayer EM update on (Λ, Ψ) for the correlation-matrix factor
/// model; never increases the discrepancy.
fn em_step(
    r: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    psi: &[f64],
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (p, p0) = lambda.shape();
    let (sigma_inv, _) = woodbury_inverse(lambda, psi)?;
    let beta = lambda.transpose() * &sigma_inv; // p0×p
    let cxz = r * beta.transpose(); // p×p0
    let czz = DMatrix::identity(p0, p0) - &beta * lambda + &beta * &cxz; // p0×p0
    let czz_inv = czz
        .cholesky()
        .ok_or_else(|| Error::Numerical("factor second-moment matrix not PD".into()))?
        .inverse();
    let lambda_new = &cxz * czz_inv;
    let mut psi_new = vec![0.0; p];
    for j in 0..p {
        let mut fitted = 0.0;
        for k in 0..p0 {
            fitted += lambda_new[(j, k)] * cxz[(j, k)];
        }
        psi_new[j] = (1.0 - fitted).max(PSI_FLOOR);
    }
    Ok((lambda_new, psi_new))
}

/// Discrepancy profiled over the loadings: F(Ψ) = Σ_{j>p0}(θ_j − ln θ_j) − (p−p0)
/// with θ the descending eigenvalues of Ψ^{-1/2} R Ψ^{-1/2}.
fn profile_discrepancy(r: &DMatrix<f64>, psi: &[f64], p0: usize) -> f64 {
    let p = r.nrows();
    let mut m = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            m[(a, b)] = r[(a, b)] / (psi[a] * psi[b]).sqrt();
        }
    }
    let mut theta: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    theta.sort_by(|a, b| b.total_cmp(a));
    let mut f = -((p - p0) as f64);
    for &t in &theta[p0..] {
        if t <= 0.0 {
            return f64::INFINITY;
        }
        f += t - t.ln();
    }
    f
}

/// ∂F/∂ψ_j = (Σ_jj − R_jj)/ψ_j² at the conditional loadings (Lawley).
fn profile_gradient(r: &DMatrix<f64>, psi: &[f64], p0: usize) -> Vec<f64> {
    let p = r.nrows();
    let lambda = conditional_loadings(r, psi, p0);
    (0..p)
        .map(|j| {
            let h2: f64 = (0..p0).map(|k| lambda[(j, k)] * lambda[(j, k)]).sum();
            (h2 + psi[j] - r[(j, j)]) / (psi[j] * psi[j])
        })
        .collect()
}

/// BFGS on the profiled discrepancy over sigmoid-bounded Ψ ∈ [floor, 1],
/// starting from the EM iterate so it stays in the same basin. Appends
/// accepted objective values to `trace` (Armijo keeps them decreasing).
/// Returns (Ψ, F, converged).
fn polish_profile(
    r: &DMatrix<f64>,
    psi_start: &[f64],
    p0: usize,
    f_start: f64,
    trace: &mut Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    const MAX_POLISH: usize = 300;
    let p = psi_start.len();
    let span = 1.0 - PSI_FLOOR;
    let sigmoid = |t: f64| if t >= 0.0 { 1.0 / (1.0 + (-t).exp()) } else { t.exp() / (1.0 + t.exp()) };
    let to_psi = |t: &DVector<f64>| -> Vec<f64> {
        t.iter().map(|&v| PSI_FLOOR + span * sigmoid(v)).collect()
    };
    let eval = |t: &DVector<f64>| -> (f64, DVector<f64>, Vec<f64>) {
        let psi = to_psi(t);
        let f = profile_discrepancy(r, &psi, p0);
        let g_psi = profile_gradient(r, &psi, p0);
        let g = DVector::from_fn(p, |j, _| {
            let s = sigmoid(t[j]);
            g_psi[j] * span * s * (1.0 - s)
        });
        (f, g, psi)
    };

    let mut t = DVector::from_fn(p, |j, _| {
        let z = ((psi_start[j] - PSI_FLOOR) / span).clamp(1e-9, 1.0 - 1e-9);
        (z / (1.0 - z)).ln()
    });
    let (mut f, mut g, mut psi) = eval(&t);
    if !f.is_finite() || f > f_start + 1e-9 {
        return (psi_start.to_vec(), f_start, false);
    }
    let mut h = DMatrix::<f64>::identity(p, p);
    for _ in 0..MAX_POLISH {
        let mut d = -(&h * &g);
        if d.dot(&g) >= 0.0 {
            h = DMatrix::identity(p, p);
            d = -g.clone();
        }
        let slope = d.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let t_new = &t + &d * step;
            let (f_new, g_new, psi_new) = eval(&t_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                accepted = Some((t_new, f_new, g_new, psi_new));
                break;
            }
            step *= 0.5;
        }
        let Some((t_new, f_new, g_new, psi_new)) = accepted else {
            // line search exhausted: already at numerical stationarity
            return (psi, f, (f_start - f) >= 0.0 && g.amax() < 1e-6);
        };
        let s_vec = &t_new - &t;
        let y_vec = &g_new - &g;
        let sy = s_vec.dot(&y_vec);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let hy = &h * &y_vec;
            let yhy = y_vec.dot(&hy);
            h += (&s_vec * s_vec.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s_vec.transpose() + &s_vec * hy.transpose()) * rho;
        }
        let done = (f - f_new).abs() < EM_TOL;
        t = t_new;
        g = g_new;
        psi = psi_new;
        f = f_new;
        trace.push(f);
        if done {
            return (psi, f, true);
        }
    }
    (psi, f, false)
}

/// Conditional ML loadings given uniquenesses (Lawley): top eigenpairs of
/// Ψ^{-1/2} R Ψ^{-1/2}.
fn conditional_loadings(r: &DMatrix<f64>, psi: &[f64], p0: usize) -> DMatrix<f64> {
    let p = r.nrows();
    let mut m = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            m[(a, b)] = r[(a, b)] / (psi[a] * psi[b]).sqrt();
        }
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut lambda = DMatrix::zeros(p, p0);
    for (k, &idx) in order.iter().take(p0).enumerate() {
        let scale = (eig.eigenvalues[idx] - 1.0).max(0.0).sqrt();
        for j in 0..p {
            lambda[(j, k)] = psi[j].sqrt() * eig.eigenvectors[(j, idx)] * scale;
        }
    }
    lambda
}

/// (Σ⁻¹, log det Σ) for Σ = ΛΛᵀ + Ψ without forming a p×p inverse from
/// scratch: Σ⁻¹ = Ψ⁻¹ − Ψ⁻¹Λ(I + ΛᵀΨ⁻¹Λ)⁻¹ΛᵀΨ⁻¹.
fn woodbury_inverse(lambda: &DMatrix<f64>, psi: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let (p, p0) = lambda.shape();
    let mut psi_inv_lambda = lambda.clone();
    for j in 0..p {
        for k in 0..p0 {
            psi_inv_lambda[(j, k)] /= psi[j];
        }
    }
    let core = DMatrix::identity(p0, p0) + lambda.transpose() * &psi_inv_lambda;
    let chol = core
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Woodbury core not PD".into()))?;
    let core_inv = chol.inverse();
    let mut sigma_inv = &psi_inv_lambda * core_inv * psi_inv_lambda.transpose();
    for a in 0..p {
        for b in 0..p {
            sigma_inv[(a, b)] = -sigma_inv[(a, b)];
        }
        sigma_inv[(a, a)] += 1.0 / psi[a];
    }
    // det Σ = det(core)·Πψ_j (matrix determinant lemma)
    let mut log_det = 0.0;
    for j in 0..p {
        log_det += psi[j].ln();
    }
    for k in 0..p0 {
        log_det += 2.0 * chol.l_dirty()[(k, k)].ln();
    }
    Ok((sigma_inv, log_det))
}

fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok((0..m.nrows()).map(|k| 2.0 * chol.l_dirty()[(k, k)].ln()).sum())
}

/// Varimax rotation with Kaiser normalization. Returns (rotated, rotation);
/// rotation is orthogonal, so ΛΛᵀ is preserved.
pub fn varimax(lambda: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, k) = lambda.shape();
    if k < 2 {
        return (lambda.clone(), DMatrix::identity(k, k));
    }
    let sc: Vec<f64> = (0..p)
        .map(|j| lambda.row(j).iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12))
        .collect();
    let mut x = lambda.clone();
    for j in 0..p {
        for c in 0..k {
            x[(j, c)] /= sc[j];
        }
    }
    let mut rot = DMatrix::identity(k, k);
    let mut d = 0.0;
    for _ in 0..1000 {
        let z = &x * &rot;
        let mut cubed = z.clone();
        cubed.apply(|v| *v = *v * *v * *v);
        let col_ms: Vec<f64> =
            (0..k).map(|c| z.column(c).iter().map(|v| v * v).sum::<f64>() / p as f64).collect();
        let mut adj = z.clone();
        for j in 0..p {
            for c in 0..k {
                adj[(j, c)] *= col_ms[c];
            }
        }
        let b = x.transpose() * (cubed - adj);
        let svd = b.svd(true, true);
        rot = svd.u.as_ref().unwrap() * svd.v_t.as_ref().unwrap();
        let d_new: f64 = svd.singular_values.iter().sum();
        if d_new < d * (1.0 + 1e-5) {
            break;
        }
        d = d_new;
    }
    let mut out = &x * &rot;
    for j in 0..p {
        for c in 0..k {
            out[(j, c)] *= sc[j];
        }
    }
    (out, rot)
}

/// Factor scores Z = UΓ.
pub fn scores(model: &FactorModel, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.ncols() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns vs model p={}",
            u.ncols(),
            model.p()
        )));
    }
    Ok(u * &model.score_weights)
}

/// Smallest factor count whose likelihood-ratio goodness-of-fit test is not
/// rejected at `alpha`, capped at the identifiability bound.
pub fn select_num_factors(u: &DMatrix<f64>, alpha: f64) -> Result<FactorSelection> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0,1)")));
    }
    let (n, p) = u.shape();
    if n <= p {
        return Err(Error::DegenerateData(format!("n={n} must exceed p={p}")));
    }
    let r = correlation_matrix(u)?;
    let cap = max_identifiable_factors(p);
    if cap == 0 {
        return Err(Error::InvalidParameter(format!("no identifiable factor count at p={p}")));
    }
    let mut p_values = Vec::new();
    for p0 in 1..=cap {
        let (_, _, trace) = em_fit(&r, p0)?;
        let f_min = *trace.last().expect("em trace non-empty");
        let df = ((p - p0) * (p - p0)) as i64 - (p + p0) as i64;
        debug_assert!(df >= 0 && df % 2 == 0);
        let df = (df / 2) as f64;
        let pv = if df == 0.0 {
            1.0 // saturated: nothing left to test
        } else {
            let stat =
                ((n - 1) as f64 - (2.0 * p as f64 + 5.0) / 6.0 - 2.0 * p0 as f64 / 3.0) * f_min;
            1.0 - ChiSquared::new(df).expect("df > 0").cdf(stat.max(0.0))
        };
        p_values.push(pv);
        if pv >= alpha {
            return Ok(FactorSelection { p0, all_rejected: false, p_values });
        }
    }
    Ok(FactorSelection { p0: cap, all_rejected: true, p_values })
}
