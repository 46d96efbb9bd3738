//! Acceptance gate: eight study-level criteria, one test and one printed
//! pass/fail line each. The 100-replication benchmark study is computed once
//! and shared; everything is seeded, so reruns are bit-identical.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use falris::baselines::MlpModel;
use falris::factor::fit_fa_corr;
use falris::ingest::{ingest_sensor_csv, run_real_data};
use falris::isotonic::{comparable_pairs, isotonic_project_raw, PartialOrder};
use falris::loclogit::{fit_local_logistic, loocv_q};
use falris::metrics::{auc_estimate, BootstrapMode};
use falris::pipeline::fit_pipeline;
use falris::simulate::{simulate_dataset, true_reliability, SimConfig};
use falris::study::{
    compare_methods, run_simulation_study, Method, MetricName, StudyConfig, StudyParams,
    StudyResult, ALL_METHODS,
};

const STUDY_SEED: u64 = 2024;
const REPLICATIONS: usize = 100;
const N: usize = 125;
const SYSTEMS: [u8; 4] = [1, 2, 3, 4];
const RUNTIME_BUDGET: Duration = Duration::from_secs(30 * 60);

struct SharedStudy {
    result: StudyResult,
    elapsed: Duration,
}

/// The Table-scale study: 100 replications × 4 systems × 4 methods.
fn shared_study() -> &'static SharedStudy {
    static STUDY: OnceLock<SharedStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let cfg = StudyConfig::new(SYSTEMS.to_vec(), REPLICATIONS, N, STUDY_SEED);
        let start = Instant::now();
        let result = run_simulation_study(&cfg).expect("benchmark study must complete");
        SharedStudy { result, elapsed: start.elapsed() }
    })
}

fn verdict(criterion: u8, pass: bool, detail: &str) -> bool {
    println!("criterion {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn mean(result: &StudyResult, system: u8, method: Method, metric: MetricName) -> f64 {
    result
        .mean_of(system, method, metric)
        .unwrap_or_else(|| panic!("no {metric} mean for {method} on system {system}"))
}

fn fmt4(values: &[f64]) -> String {
    let cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", cells.join(", "))
}

#[test]
fn criterion_1_auc_trends_and_scale() {
    let shared = shared_study();
    let fa: Vec<f64> =
        SYSTEMS.iter().map(|&s| mean(&shared.result, s, Method::FaLrIs, MetricName::Auc)).collect();
    let ann: Vec<f64> =
        SYSTEMS.iter().map(|&s| mean(&shared.result, s, Method::Ann, MetricName::Auc)).collect();
    let knn: Vec<f64> =
        SYSTEMS.iter().map(|&s| mean(&shared.result, s, Method::Knn, MetricName::Auc)).collect();
    let rf: Vec<f64> =
        SYSTEMS.iter().map(|&s| mean(&shared.result, s, Method::Rf, MetricName::Auc)).collect();

    let beats_knn_rf = (0..4).all(|i| fa[i] > knn[i] && fa[i] > rf[i]);
    let beats_ann = (0..4).all(|i| fa[i] > ann[i]);
    let anchor = (fa[0] - 0.8218).abs() <= 0.07;
    let in_budget = shared.elapsed <= RUNTIME_BUDGET;

    let pass = beats_knn_rf && beats_ann && anchor && in_budget;
    let detail = format!(
        "fa={} ann={} knn={} rf={}; fa>knn,rf: {beats_knn_rf}; fa>ann: {beats_ann}; \
         |fa1−0.8218|≤0.07: {anchor}; runtime {:.0?} ≤ 30 min: {in_budget}",
        fmt4(&fa),
        fmt4(&ann),
        fmt4(&knn),
        fmt4(&rf),
        shared.elapsed
    );
    assert!(verdict(1, pass, &detail), "{detail}");
}

#[test]
fn criterion_2_mse_separation() {
    let shared = shared_study();
    let get = |s, m| mean(&shared.result, s, m, MetricName::Mse);
    let mut clauses = Vec::new();
    let mut pass = true;
    for system in [1u8, 2] {
        let (fa, ann) = (get(system, Method::FaLrIs), get(system, Method::Ann));
        let (knn, rf) = (get(system, Method::Knn), get(system, Method::Rf));
        let ok = knn >= 0.10 && rf >= 0.10 && fa <= 0.06 && ann <= 0.06;
        pass &= ok;
        clauses.push(format!(
            "sys{system}: fa={fa:.4} ann={ann:.4} (≤0.06) knn={knn:.4} rf={rf:.4} (≥0.10) → {ok}"
        ));
    }
    let anchor = (get(1, Method::FaLrIs) - 0.0202).abs() <= 0.02;
    pass &= anchor;
    let detail = format!("{}; |fa1−0.0202|≤0.02: {anchor}", clauses.join("; "));
    assert!(verdict(2, pass, &detail), "{detail}");
}

#[test]
fn criterion_3_accuracy_lead_on_complex_systems() {
    let shared = shared_study();
    let mut pass = true;
    let mut clauses = Vec::new();
    for system in [3u8, 4] {
        let acc: Vec<f64> = ALL_METHODS
            .iter()
            .map(|&m| mean(&shared.result, system, m, MetricName::Accuracy))
            .collect();
        let fa_highest = acc[1..].iter().all(|&other| acc[0] >= other);
        pass &= fa_highest;
        clauses.push(format!(
            "sys{system}: fa={:.4} ann={:.4} knn={:.4} rf={:.4} → fa highest: {fa_highest}",
            acc[0], acc[1], acc[2], acc[3]
        ));
    }
    let detail = clauses.join("; ");
    assert!(verdict(3, pass, &detail), "{detail}");
}

#[test]
fn criterion_4_bootstrap_significance_vs_ann() {
    let shared = shared_study();
    let rows = compare_methods(
        &shared.result,
        MetricName::Auc,
        Method::FaLrIs,
        Method::Ann,
        10_000,
        STUDY_SEED,
        BootstrapMode::Standard,
    )
    .expect("comparison runs");
    let mut pass = true;
    let mut clauses = Vec::new();
    for row in &rows {
        let ok = row.p_value < 0.05;
        pass &= ok;
        clauses.push(format!(
            "sys{}: Δ̄={:+.4} p={:.4} → {ok}",
            row.system, row.mean_difference, row.p_value
        ));
    }
    let detail = clauses.join("; ");
    assert!(verdict(4, pass, &detail), "{detail}");
}

// ---------------------------------------------------------------------------
// criterion 5: dual-route oracles, all implemented locally in this file

/// Brute-force least-squares isotonic oracle: every subset of order edges is
/// tried as an active (equality) set, pooled with union-find; the best
/// feasible candidate is optimal because the true solution's active set is
/// among the subsets.
fn oracle_isotonic_objective(values: &[f64], po: &PartialOrder) -> f64 {
    let n = values.len();
    let edges = po.edges();
    assert!(edges.len() <= 18, "oracle capped at 18 edges");
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << edges.len()) {
        let mut parent: Vec<usize> = (0..n).collect();
        for (e, &(a, b)) in edges.iter().enumerate() {
            if mask >> e & 1 == 1 {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            sum[r] += values[i];
            count[r] += 1;
        }
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let r = find(&mut parent, i);
                sum[r] / count[r] as f64
            })
            .collect();
        if edges.iter().all(|&(a, b)| g[a] <= g[b] + 1e-12) {
            best = best.min(values.iter().zip(&g).map(|(v, x)| (v - x) * (v - x)).sum());
        }
    }
    best
}

fn check_isotonic_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 40 {
        let n = rng.random_range(3..=10);
        let states = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
        let po = comparable_pairs(&states);
        if po.edges().is_empty() || po.edges().len() > 18 {
            continue;
        }
        let values: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let g = isotonic_project_raw(&values, &po).unwrap();
        let objective: f64 = values.iter().zip(&g).map(|(v, x)| (v - x) * (v - x)).sum();
        worst = worst.max((objective - oracle_isotonic_objective(&values, &po)).abs());
        checked += 1;
    }
    (worst <= 1e-8, format!("isotonic 40 instances worst |Δobj|={worst:.2e}"))
}

/// The same penalized weighted likelihood assembled from scratch:
/// Σ w_i [log(1+e^{η_i}) − y_i η_i] + 1e−6 ‖b‖², covariates (1, z − z0).
fn oracle_local_nll(z: &DMatrix<f64>, y: &[u8], z0: &[f64], h: f64, b: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..z.nrows() {
        let d2: f64 = (0..z.ncols()).map(|c| (z[(i, c)] - z0[c]).powi(2)).sum();
        let w = (-d2 / (2.0 * h * h)).exp();
        let eta: f64 =
            b[0] + (0..z.ncols()).map(|c| b[c + 1] * (z[(i, c)] - z0[c])).sum::<f64>();
        let log1p_exp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        total += w * (log1p_exp - f64::from(y[i]) * eta);
    }
    total + 1e-6 * b.iter().map(|v| v * v).sum::<f64>()
}

/// Independent optimizer: Newton over central-difference derivatives of
/// `oracle_local_nll`, no shared code with the library fit.
fn oracle_local_fit(z: &DMatrix<f64>, y: &[u8], z0: &[f64], h: f64) -> DVector<f64> {
    let dim = z.ncols() + 1;
    let objective = |b: &DVector<f64>| oracle_local_nll(z, y, z0, h, b);
    let mut b = DVector::zeros(dim);
    let eps = 1e-5;
    for _ in 0..200 {
        let mut grad = DVector::zeros(dim);
        for a in 0..dim {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[a] += eps;
            bm[a] -= eps;
            grad[a] = (objective(&bp) - objective(&bm)) / (2.0 * eps);
        }
        if grad.norm() < 1e-10 {
            break;
        }
        let mut hess = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            for c in 0..dim {
                let mut bpp = b.clone();
                let mut bpm = b.clone();
                let mut bmp = b.clone();
                let mut bmm = b.clone();
                bpp[a] += eps;
                bpp[c] += eps;
                bpm[a] += eps;
                bpm[c] -= eps;
                bmp[a] -= eps;
                bmp[c] += eps;
                bmm[a] -= eps;
                bmm[c] -= eps;
                hess[(a, c)] = (objective(&bpp) - objective(&bpm) - objective(&bmp)
                    + objective(&bmm))
                    / (4.0 * eps * eps);
            }
        }
        let step = hess.lu().solve(&grad).expect("oracle Hessian solvable");
        let base = objective(&b);
        let mut scale = 1.0;
        for _ in 0..40 {
            let cand = &b - &step * scale;
            if objective(&cand) <= base {
                b = cand;
                break;
            }
            scale *= 0.5;
        }
    }
    b
}

fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn random_scores(n: usize, p0: usize, seed: u64) -> (DMatrix<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::from_fn(n, p0, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n).map(|i| u8::from(rng.random::<f64>() < logistic(z.row(i).sum()))).collect();
    (z, y)
}

fn check_local_logistic_oracle() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for seed in [11u64, 12, 13] {
        let (z, y) = random_scores(25, 2, seed);
        for h in [0.7, 1.5] {
            let z0 = [0.1, -0.2];
            let fit = fit_local_logistic(&z, &y, &z0, h).unwrap();
            let oracle = oracle_local_fit(&z, &y, &z0, h);
            for a in 0..3 {
                worst = worst.max((fit.coefficients[a] - oracle[a]).abs());
            }
        }
    }
    (worst <= 1e-6, format!("local logistic 6 fits worst |Δb|={worst:.2e}"))
}

fn check_loocv_oracle() -> (bool, String) {
    // Q(h) reassembled naively: every leave-one-out subsample refitted
    // explicitly, the score summed term by term
    let n = 30;
    let (z, y) = random_scores(n, 2, 29);
    let mut worst: f64 = 0.0;
    for h in [0.8, 1.6] {
        let fast = loocv_q(&z, &y, h).unwrap();
        let mut q = 0.0;
        for i in 0..n {
            let zi: Vec<f64> = z.row(i).iter().copied().collect();
            let full = fit_local_logistic(&z, &y, &zi, h).unwrap();
            q += logistic(full.coefficients[0]).powi(2);
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let z_loo = z.select_rows(keep.iter());
            let y_loo: Vec<u8> = keep.iter().map(|&j| y[j]).collect();
            let loo = fit_local_logistic(&z_loo, &y_loo, &zi, h).unwrap();
            q -= 2.0 * f64::from(y[i]) * logistic(loo.coefficients[0]);
        }
        worst = worst.max((fast - q).abs());
    }
    (worst <= 1e-8, format!("LOOCV n=30 worst |ΔQ|={worst:.2e}"))
}

fn check_auc_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut exact_ok = true;
    // quantized scores force cross-class ties; enumeration must match exactly
    for _ in 0..25 {
        let n = rng.random_range(4..40);
        let scores: Vec<f64> =
            (0..n).map(|_| (rng.random::<f64>() * 8.0).floor() / 8.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        if n1 == 0 || n1 == labels.len() {
            continue;
        }
        let mut wins = 0usize;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 && scores[j] < scores[i] {
                    wins += 1;
                }
            }
        }
        let enumerated = wins as f64 / (n1 * (labels.len() - n1)) as f64;
        exact_ok &= auc_estimate(&scores, &labels).unwrap() == enumerated;
    }

    // tie-free data: the rank-based Mann–Whitney statistic is the same number
    let mut mw_worst: f64 = 0.0;
    for round in 0..10 {
        let n = 30;
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..scores.len())
            .map(|i| u8::from((i + round) % 3 == 0))
            .collect();
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        if n1 == 0 || n1 == labels.len() {
            continue;
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let rank_sum: f64 = order
            .iter()
            .enumerate()
            .filter(|(_, &i)| labels[i] == 1)
            .map(|(r, _)| (r + 1) as f64)
            .sum();
        let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
        let mw = u / (n1 * (scores.len() - n1)) as f64;
        mw_worst = mw_worst.max((auc_estimate(&scores, &labels).unwrap() - mw).abs());
    }
    (
        exact_ok && mw_worst <= 1e-12,
        format!("AUC enumeration exact: {exact_ok}, Mann–Whitney worst Δ={mw_worst:.2e}"),
    )
}

fn check_mlp_gradient_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let p = 6;
    let n = 12;
    let states = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>());
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 0)).collect();
    let rows: Vec<usize> = (0..n).collect();
    let model = MlpModel::init(p, 3);
    let (_, gw, gb) = model.loss_and_gradients(&states, &labels, &rows).unwrap();

    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for l in 0..3 {
        let (rows_l, cols_l) = (gw[l].nrows(), gw[l].ncols());
        for flat in (0..rows_l * cols_l).step_by(7) {
            let (i, j) = (flat / cols_l, flat % cols_l);
            let mut plus = model.clone();
            let mut minus = model.clone();
            plus.weights[l][(i, j)] += eps;
            minus.weights[l][(i, j)] -= eps;
            let lp = plus.loss_and_gradients(&states, &labels, &rows).unwrap().0;
            let lm = minus.loss_and_gradients(&states, &labels, &rows).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            worst = worst.max((fd - gw[l][(i, j)]).abs() / fd.abs().max(1.0));
            checked += 1;
        }
        for b in (0..gb[l].len()).step_by(3) {
            let mut plus = model.clone();
            let mut minus = model.clone();
            plus.biases[l][b] += eps;
            minus.biases[l][b] -= eps;
            let lp = plus.loss_and_gradients(&states, &labels, &rows).unwrap().0;
            let lm = minus.loss_and_gradients(&states, &labels, &rows).unwrap().0;
            let fd = (lp - lm) / (2.0 * eps);
            worst = worst.max((fd - gb[l][b]).abs() / fd.abs().max(1.0));
            checked += 1;
        }
    }
    (worst <= 1e-4, format!("MLP {checked} parameters worst rel err={worst:.2e}"))
}

#[test]
fn criterion_5_oracle_equivalences() {
    let checks = [
        check_isotonic_oracle(),
        check_loocv_oracle(),
        check_local_logistic_oracle(),
        check_auc_oracles(),
        check_mlp_gradient_oracle(),
    ];
    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail =
        checks.iter().map(|(_, d)| d.as_str()).collect::<Vec<_>>().join("; ");
    assert!(verdict(5, pass, &detail), "{detail}");
}

#[test]
fn criterion_6_zero_monotonicity_violations() {
    let mut violations = 0usize;
    let mut pairs = 0usize;
    let mut runs = 0usize;
    for &system in &SYSTEMS {
        for rep in 0..5u64 {
            let cfg = SimConfig::new(N, 0xC0FFEE + u64::from(system) * 1000 + rep);
            let ds = simulate_dataset(system, &cfg).unwrap();
            let (train, test) = ds.split_train_test(0.8, cfg.seed ^ 0x5EED).unwrap();
            let fitted = fit_pipeline(&train, 0.05, cfg.seed).unwrap();
            let train_order = comparable_pairs(train.states());
            for &(a, b) in train_order.edges() {
                pairs += 1;
                if fitted.train_predictions[a] > fitted.train_predictions[b] {
                    violations += 1;
                }
            }
            let prediction = fitted.predict(test.states()).unwrap();
            let test_order = comparable_pairs(test.states());
            for &(a, b) in test_order.edges() {
                pairs += 1;
                if prediction.reliabilities[a] > prediction.reliabilities[b] {
                    violations += 1;
                }
            }
            runs += 1;
        }
    }
    let pass = violations == 0;
    let detail =
        format!("{violations} violations across {pairs} comparable pairs in {runs} fitted runs");
    assert!(verdict(6, pass, &detail), "{detail}");
}

#[test]
fn criterion_7_analytic_values() {
    let cfg = SimConfig::new(N, 0);
    let r_07 = true_reliability(0.7, &cfg);
    let r_05 = true_reliability(0.5, &cfg);
    let ok_07 = (r_07 - 0.841345).abs() <= 1e-5;
    let ok_05 = r_05 == 0.5;

    // equicorrelated block: ρ = λ² = 0.81 has the closed form λ=0.9, ψ=0.19
    let p = 9;
    let r = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.81 });
    let model = fit_fa_corr(&r, 1).unwrap();
    let lambda_err = (0..p)
        .map(|j| (model.loadings()[(j, 0)] - 0.9).abs())
        .fold(0.0f64, f64::max);
    let psi_err = (0..p)
        .map(|j| (model.uniquenesses()[j] - 0.19).abs())
        .fold(0.0f64, f64::max);
    let ok_fa = lambda_err <= 1e-3 && psi_err <= 1e-3;

    let pass = ok_07 && ok_05 && ok_fa;
    let detail = format!(
        "R(0.7)={r_07:.6} (±1e−5: {ok_07}); R(0.5)={r_05} (exact: {ok_05}); \
         equicorrelation max|λ−0.9|={lambda_err:.2e}, max|ψ−0.19|={psi_err:.2e} ({ok_fa})"
    );
    assert!(verdict(7, pass, &detail), "{detail}");
}

fn pump_csv() -> Option<PathBuf> {
    if let Ok(path) = std::env::var("PUMP_SENSOR_CSV") {
        let p = PathBuf::from(path);
        return p.exists().then_some(p);
    }
    let repo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/pump_sensor.csv");
    repo.exists().then_some(repo)
}

#[test]
fn criterion_8_real_data_pipeline() {
    let params = StudyParams::default();
    let (pass, detail) = if let Some(path) = pump_csv() {
        let (ds, report) = ingest_sensor_csv(&path, 60, "machine_status", None).unwrap();
        let n_ok = report.kept_rows == 3672;
        let result = run_real_data(&ds, &ALL_METHODS, &params, STUDY_SEED).unwrap();
        let fa_sens = result.rows[0].report.sensitivity.unwrap_or(f64::NAN);
        let sens_ok = fa_sens >= 0.95;
        (
            n_ok && sens_ok,
            format!(
                "pump CSV: kept {} rows (=3672: {n_ok}); FA sensitivity {fa_sens:.4} ≥ 0.95: {sens_ok}",
                report.kept_rows
            ),
        )
    } else {
        let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sensor_fixture.csv");
        let (ds, report) = ingest_sensor_csv(&fixture, 2, "machine_status", None).unwrap();
        let result = run_real_data(&ds, &ALL_METHODS, &params, STUDY_SEED).unwrap();
        let mut defined = true;
        for row in &result.rows {
            let r = &row.report;
            defined &= [r.sensitivity, r.specificity, r.accuracy, r.tpv, r.f1, r.auc]
                .iter()
                .all(Option::is_some);
        }
        let fa_sens = result.rows[0].report.sensitivity.unwrap_or(f64::NAN);
        (
            defined && result.rows.len() == 4,
            format!(
                "bundled fixture: {} rows ingested, all metrics defined for 4 methods: {defined} \
                 (FA sensitivity {fa_sens:.4})",
                report.kept_rows
            ),
        )
    };
    assert!(verdict(8, pass, &detail), "{detail}");
}
