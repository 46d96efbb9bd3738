//! Feedforward network p → 15 → 80 → 1 (ReLU, ReLU, sigmoid) trained with
//! Adam on mean binary cross-entropy.

use nalgebra::{DMatrix, DVector};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};

pub const HIDDEN: [usize; 2] = [15, 80];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(seed: u64) -> Self {
        Self { epochs: 125, batch: 64, learning_rate: 1e-3, seed }
    }
}

/// Weights[l] maps layer l activations (columns) to layer l+1 (rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// log(1+e^v) without overflow.
fn log1p_exp(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

impl MlpModel {
    /// He-normal initialization, deterministic per seed.
    pub fn init(p: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [p, HIDDEN[0], HIDDEN[1], 1];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..3 {
            let scale = (2.0 / dims[l] as f64).sqrt();
            weights.push(DMatrix::from_fn(dims[l + 1], dims[l], |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }));
            biases.push(DVector::zeros(dims[l + 1]));
        }
        Self { weights, biases }
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].ncols()
    }

    /// Output probability for one configuration.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs vs network width {}",
                x.len(),
                self.input_width()
            )));
        }
        let mut a = DVector::from_column_slice(x);
        for l in 0..2 {
            a = &self.weights[l] * a + &self.biases[l];
            a.apply(|v| *v = relu(*v));
        }
        let logit = (&self.weights[2] * a + &self.biases[2])[0];
        Ok(sigmoid(logit))
    }

    /// 1 iff the network probability is ≥ 0.5.
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= 0.5))
    }

    /// Mean binary cross-entropy over a batch and its gradient for every
    /// parameter, by backpropagation. Public so the gradients can be checked
    /// against finite differences.
    pub fn loss_and_gradients(
        &self,
        states: &DMatrix<f64>,
        labels: &[u8],
        rows: &[usize],
    ) -> Result<(f64, Vec<DMatrix<f64>>, Vec<DVector<f64>>)> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        if states.ncols() != self.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns vs network width {}",
                states.ncols(),
                self.input_width()
            )));
        }
        let mut gw: Vec<DMatrix<f64>> =
            self.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
        let mut gb: Vec<DVector<f64>> =
            self.biases.iter().map(|b| DVector::zeros(b.len())).collect();
        let mut loss = 0.0;
        let inv = 1.0 / rows.len() as f64;
        for &i in rows {
            let x = DVector::from_iterator(states.ncols(), states.row(i).iter().copied());
            // forward, keeping activations
            let mut acts = vec![x];
            for l in 0..2 {
                let mut a = &self.weights[l] * &acts[l] + &self.biases[l];
                a.apply(|v| *v = relu(*v));
                acts.push(a);
            }
            let logit = (&self.weights[2] * &acts[2] + &self.biases[2])[0];
            let y = f64::from(labels[i]);
            loss += inv * (log1p_exp(logit) - y * logit);

            // backward: d(loss)/d(logit) = σ(logit) − y
            let mut delta = DVector::from_element(1, inv * (sigmoid(logit) - y));
            for l in (0..3).rev() {
                gb[l] += &delta;
                gw[l] += &delta * acts[l].transpose();
                if l > 0 {
                    let mut back = self.weights[l].transpose() * delta;
                    for j in 0..back.len() {
                        if acts[l][j] <= 0.0 {
                            back[j] = 0.0; // ReLU gate
                        }
                    }
                    delta = back;
                }
            }
        }
        Ok((loss, gw, gb))
    }
}

/// Adam training over seeded epoch shuffles.
pub fn mlp_train(train: &DataSet, cfg: &MlpConfig) -> Result<MlpModel> {
    if !train.has_both_classes() {
        return Err(Error::DegenerateData("training labels are single-class".into()));
    }
    if cfg.batch == 0 || cfg.epochs == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::InvalidParameter(
            "epochs, batch, and learning rate must be positive".into(),
        ));
    }
    let mut model = MlpModel::init(train.p(), cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // init used stream 0

    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut mw: Vec<DMatrix<f64>> =
        model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect();
    let mut vw = mw.clone();
    let mut mb: Vec<DVector<f64>> = model.biases.iter().map(|b| DVector::zeros(b.len())).collect();
    let mut vb = mb.clone();
    let mut t = 0u32;

    let mut order: Vec<usize> = (0..train.n()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch) {
            let (loss, gw, gb) = model.loss_and_gradients(train.states(), train.labels(), batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch} (step {t})"
                )));
            }
            t += 1;
            let correction = (1.0 - beta1.powi(t as i32), 1.0 - beta2.powi(t as i32));
            for l in 0..3 {
                adam_update(
                    &mut model.weights[l],
                    &gw[l],
                    &mut mw[l],
                    &mut vw[l],
                    cfg.learning_rate,
                    beta1,
                    beta2,
                    eps,
                    correction,
                );
                adam_update_vec(
                    &mut model.biases[l],
                    &gb[l],
                    &mut mb[l],
                    &mut vb[l],
                    cfg.learning_rate,
                    beta1,
                    beta2,
                    eps,
                    correction,
                );
            }
        }
    }
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    w: &mut DMatrix<f64>,
    g: &DMatrix<f64>,
    m: &mut DMatrix<f64>,
    v: &mut DMatrix<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    correction: (f64, f64),
) {
    for idx in 0..w.len() {
        m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
        v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
        let m_hat = m[idx] / correction.0;
        let v_hat = v[idx] / correction.1;
        w[idx] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update_vec(
    w: &mut DVector<f64>,
    g: &DVector<f64>,
    m: &mut DVector<f64>,
    v: &mut DVector<f64>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    correction: (f64, f64),
) {
    for idx in 0..w.len() {
        m[idx] = beta1 * m[idx] + (1.0 - beta1) * g[idx];
        v[idx] = beta2 * v[idx] + (1.0 - beta2) * g[idx] * g[idx];
        let m_hat = m[idx] / correction.0;
        let v_hat = v[idx] / correction.1;
        w[idx] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Forward pass helper mirroring the contract name.
pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<f64> {
    model.predict_proba(x)
}
