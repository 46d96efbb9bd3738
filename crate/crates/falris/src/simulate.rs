//! Benchmark-system simulator: min/max structure functions over component
//! states drawn from a block-correlated Gaussian copula, with latent-normal
//! labelling and analytic true reliability.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};

/// Min/max expression tree over 0-based component indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Leaf(usize),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
}

impl Expr {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Leaf(i) => x[*i],
            Expr::Min(children) => children.iter().map(|c| c.eval(x)).fold(f64::INFINITY, f64::min),
            Expr::Max(children) => {
                children.iter().map(|c| c.eval(x)).fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    fn visit_leaves(&self, f: &mut impl FnMut(usize)) {
        match self {
            Expr::Leaf(i) => f(*i),
            Expr::Min(children) | Expr::Max(children) => {
                for c in children {
                    c.visit_leaves(f);
                }
            }
        }
    }

    fn is_empty_node(&self) -> bool {
        matches!(self, Expr::Min(c) | Expr::Max(c) if c.is_empty())
    }
}

/// A system: structure function plus the partition of components into
/// dependence blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureSpec {
    expr: Expr,
    p: usize,
    blocks: Vec<Vec<usize>>,
}

impl StructureSpec {
    pub fn new(expr: Expr, p: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("p must be positive".into()));
        }
        if expr.is_empty_node() {
            return Err(Error::InvalidParameter("empty expression tree".into()));
        }
        let mut bad = None;
        expr.visit_leaves(&mut |i| {
            if i >= p {
                bad = Some(i);
            }
        });
        if let Some(i) = bad {
            return Err(Error::InvalidParameter(format!("leaf index {i} outside 0..{p}")));
        }
        let mut seen = vec![0usize; p];
        for blk in &blocks {
            for &i in blk {
                if i >= p {
                    return Err(Error::InvalidParameter(format!(
                        "block member {i} outside 0..{p}"
                    )));
                }
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            return Err(Error::InvalidParameter(
                "blocks must partition the component set".into(),
            ));
        }
        Ok(Self { expr, p, blocks })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Structure function φ(x).
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "{} states vs p={}",
                x.len(),
                self.p
            )));
        }
        Ok(self.expr.eval(x))
    }
}

/// Simulation parameters. ρ is the within-block latent correlation; labels
/// come from a latent N(φ(x), σ) crossing the threshold y0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rho: f64,
    pub sigma: f64,
    pub y0: f64,
    pub n: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { rho: 0.9, sigma: 0.2, y0: 0.5, n, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho {} outside [0,1)", self.rho)));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("sigma {} must be > 0", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.y0) || self.y0 == 0.0 {
            return Err(Error::InvalidParameter(format!("y0 {} outside (0,1)", self.y0)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// The four benchmark systems.
///
/// 1: series of three parallel groups, p=9
/// 2: series of four parallel groups, p=10
/// 3: bridge whose five nodes are 3-component parallel blocks, p=15
/// 4: bridge whose five nodes are 5-component bridges, p=25
pub fn builtin_system(id: u8) -> Result<StructureSpec> {
    use Expr::{Leaf, Max, Min};
    let leaf = |i: usize| Leaf(i - 1); // formulas below are written 1-based
    match id {
        1 => StructureSpec::new(
            Min(vec![
                Max(vec![leaf(1), Min(vec![leaf(2), leaf(3)])]),
                Max(vec![Min(vec![leaf(4), leaf(5)]), Min(vec![leaf(6), leaf(7)])]),
                Min(vec![leaf(8), leaf(9)]),
            ]),
            9,
            vec![vec![0, 1, 2], vec![3, 4, 5, 6], vec![7, 8]],
        ),
        2 => StructureSpec::new(
            Min(vec![
                Max(vec![leaf(1), leaf(2)]),
                Max(vec![leaf(3), leaf(4)]),
                Max(vec![leaf(5), leaf(6), leaf(7)]),
                Max(vec![leaf(8), leaf(9), leaf(10)]),
            ]),
            10,
            vec![vec![0, 1], vec![2, 3], vec![4, 5, 6], vec![7, 8, 9]],
        ),
        3 => {
            let node = |k: usize| {
                Max(vec![leaf(3 * k - 2), leaf(3 * k - 1), leaf(3 * k)])
            };
            StructureSpec::new(
                bridge(node(1), node(2), node(3), node(4), node(5)),
                15,
                (0..5).map(|k| (3 * k..3 * k + 3).collect()).collect(),
            )
        }
        4 => {
            let node = |j: usize| {
                let (a, b, c, d, e) =
                    (leaf(5 * j - 4), leaf(5 * j - 3), leaf(5 * j - 2), leaf(5 * j - 1), leaf(5 * j));
                bridge(a, b, c, d, e)
            };
            StructureSpec::new(
                bridge(node(1), node(2), node(3), node(4), node(5)),
                25,
                (0..5).map(|k| (5 * k..5 * k + 5).collect()).collect(),
            )
        }
        _ => Err(Error::InvalidParameter(format!("unknown system id {id}"))),
    }
}

/// Bridge structure over five nodes: paths {1,4}, {1,3,5}, {2,3,4}, {2,5}.
fn bridge(n1: Expr, n2: Expr, n3: Expr, n4: Expr, n5: Expr) -> Expr {
    use Expr::{Max, Min};
    Max(vec![
        Min(vec![n1.clone(), n4.clone()]),
        Min(vec![n1, n3.clone(), n5.clone()]),
        Min(vec![n2.clone(), n3, n4]),
        Min(vec![n2, n5]),
    ])
}

/// Component-state matrix: within each block the latent normals share a
/// common factor (equicorrelation ρ), blocks are independent, and each
/// coordinate is pushed through Φ to a uniform state.
pub fn sample_component_states(spec: &StructureSpec, cfg: &SimConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(draw_states(spec, cfg, &mut rng))
}

fn draw_states(spec: &StructureSpec, cfg: &SimConfig, rng: &mut impl Rng) -> DMatrix<f64> {
    let (a, b) = (cfg.rho.sqrt(), (1.0 - cfg.rho).sqrt());
    let mut states = DMatrix::zeros(cfg.n, spec.p);
    for i in 0..cfg.n {
        for blk in &spec.blocks {
            let w: f64 = rng.sample(StandardNormal);
            for &j in blk {
                let eps: f64 = rng.sample(StandardNormal);
                states[(i, j)] = normal_cdf(a * w + b * eps);
            }
        }
    }
    states
}

/// P(system operative | configuration with structure value `phi`):
/// 1 − Φ((y0 − φ)/σ).
pub fn true_reliability(phi: f64, cfg: &SimConfig) -> f64 {
    1.0 - normal_cdf((cfg.y0 - phi) / cfg.sigma)
}

/// Full simulated sample for a built-in system: states, Bernoulli labels,
/// and the analytic reliability of each row.
pub fn simulate_dataset(id: u8, cfg: &SimConfig) -> Result<DataSet> {
    let spec = builtin_system(id)?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let states = draw_states(&spec, cfg, &mut rng);
    let mut labels = Vec::with_capacity(cfg.n);
    let mut rel = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let x: Vec<f64> = states.row(i).iter().copied().collect();
        let r = true_reliability(spec.evaluate(&x)?, cfg);
        rel.push(r);
        labels.push(u8::from(rng.random::<f64>() < r));
    }
    DataSet::with_reliability(states, labels, Some(rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn builtin_shapes() {
        for (id, p, nblocks) in [(1u8, 9, 3), (2, 10, 4), (3, 15, 5), (4, 25, 5)] {
            let spec = builtin_system(id).unwrap();
            assert_eq!(spec.p(), p, "system {id}");
            assert_eq!(spec.blocks().len(), nblocks, "system {id}");
        }
        assert!(builtin_system(5).is_err());
        assert!(builtin_system(0).is_err());
    }

    #[test]
    fn structure_boundary_states() {
        for id in 1..=4u8 {
            let spec = builtin_system(id).unwrap();
            assert_abs_diff_eq!(spec.evaluate(&vec![1.0; spec.p()]).unwrap(), 1.0);
            assert_abs_diff_eq!(spec.evaluate(&vec![0.0; spec.p()]).unwrap(), 0.0);
        }
    }

    #[test]
    fn system1_hand_evaluation() {
        let spec = builtin_system(1).unwrap();
        let x = [0.2, 0.9, 0.8, 0.1, 0.5, 0.7, 0.6, 0.9, 0.4];
        assert_abs_diff_eq!(spec.evaluate(&x).unwrap(), 0.4);
    }

    #[test]
    fn evaluate_rejects_wrong_length() {
        let spec = builtin_system(1).unwrap();
        assert!(spec.evaluate(&[0.5; 8]).is_err());
    }

    #[test]
    fn spec_validation() {
        use Expr::{Leaf, Min};
        assert!(StructureSpec::new(Leaf(3), 3, vec![vec![0, 1, 2]]).is_err()); // leaf out of range
        assert!(StructureSpec::new(Min(vec![]), 2, vec![vec![0, 1]]).is_err()); // empty node
        assert!(StructureSpec::new(Leaf(0), 2, vec![vec![0]]).is_err()); // not a partition
        assert!(StructureSpec::new(Leaf(0), 2, vec![vec![0, 1], vec![1]]).is_err()); // duplicate
    }

    #[test]
    fn reliability_analytic_values() {
        let cfg = SimConfig::new(1, 0);
        assert_abs_diff_eq!(true_reliability(0.5, &cfg), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(true_reliability(0.7, &cfg), 0.841345, epsilon = 1e-5);
        assert_abs_diff_eq!(true_reliability(0.3, &cfg), 0.158655, epsilon = 1e-5);
    }

    #[test]
    fn states_independent_when_rho_zero() {
        let spec = builtin_system(1).unwrap();
        let cfg = SimConfig { rho: 0.0, n: 10_000, ..SimConfig::new(10_000, 7) };
        let states = sample_component_states(&spec, &cfg).unwrap();
        for a in 0..3 {
            for b in (a + 1)..3 {
                assert!(pearson(&states, a, b).abs() < 0.1);
            }
        }
    }

    #[test]
    fn in_block_uniform_correlation() {
        let spec = builtin_system(1).unwrap();
        let cfg = SimConfig::new(10_000, 11);
        let states = sample_component_states(&spec, &cfg).unwrap();
        // components 0,1,2 share a block; expected (6/π)·asin(ρ/2)
        let expected = 6.0 / std::f64::consts::PI * (0.45f64).asin();
        assert_abs_diff_eq!(pearson(&states, 0, 1), expected, epsilon = 0.02);
        assert_abs_diff_eq!(pearson(&states, 1, 2), expected, epsilon = 0.02);
        // across blocks ~ 0
        assert!(pearson(&states, 0, 5).abs() < 0.05);
        assert!(states.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn simulate_is_deterministic_and_complete() {
        let cfg = SimConfig::new(125, 42);
        let a = simulate_dataset(1, &cfg).unwrap();
        let b = simulate_dataset(1, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.p()), (125, 9));
        assert!(a.true_reliability().is_some());
    }

    #[test]
    fn label_rate_tracks_reliability_mean() {
        let cfg = SimConfig::new(10_000, 3);
        let ds = simulate_dataset(1, &cfg).unwrap();
        let r_mean: f64 =
            ds.true_reliability().unwrap().iter().sum::<f64>() / ds.n() as f64;
        let y_mean: f64 = ds.labels().iter().map(|&y| y as f64).sum::<f64>() / ds.n() as f64;
        let se = (r_mean * (1.0 - r_mean) / ds.n() as f64).sqrt();
        assert!(
            (y_mean - r_mean).abs() < 2.0 * se + 0.01,
            "label rate {y_mean} vs reliability mean {r_mean}"
        );
    }

    fn pearson(m: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = m.nrows() as f64;
        let (ma, mb) = (m.column(a).sum() / n, m.column(b).sum() / n);
        let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
        for i in 0..m.nrows() {
            let (da, db) = (m[(i, a)] - ma, m[(i, b)] - mb);
            num += da * db;
            va += da * da;
            vb += db * db;
        }
        num / (va.sqrt() * vb.sqrt())
    }

    proptest! {
        #[test]
        fn coherence_of_builtin_systems(
            id in 1u8..=4,
            base in proptest::collection::vec(0.0f64..1.0, 25),
            bump in proptest::collection::vec(0.0f64..0.3, 25),
        ) {
            let spec = builtin_system(id).unwrap();
            let p = spec.p();
            let lo: Vec<f64> = base[..p].to_vec();
            let hi: Vec<f64> = lo.iter().zip(&bump[..p]).map(|(x, d)| (x + d).min(1.0)).collect();
            let phi_lo = spec.evaluate(&lo).unwrap();
            let phi_hi = spec.evaluate(&hi).unwrap();
            prop_assert!(phi_lo <= phi_hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&phi_lo));
        }

        #[test]
        fn reliability_monotone_in_phi(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let cfg = SimConfig::new(1, 0);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(true_reliability(lo, &cfg) <= true_reliability(hi, &cfg));
        }
    }
}
