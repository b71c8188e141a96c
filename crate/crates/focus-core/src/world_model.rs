//! Per-target world-model regressors whose inputs are masked by a causal
//! graph, with bootstrap ensembles for uncertainty, plus the exact
//! closed-form ridge regression shared by policy learning and the theory
//! verification suite.

use crate::data::{CausalGraph, DimensionSchema, TransitionDataset};
use crate::error::{FocusError, Result};
use crate::linalg::Cholesky;
use crate::seeding::{child_rng, split_seed};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Closed-form ridge solution `beta = (XᵀX + kI)⁻¹ Xᵀy`, no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSolution {
    pub beta: Array1<f64>,
    pub k: f64,
    pub training_mse: f64,
}

/// Solve the ridge normal equations by Cholesky. With `k = 0` the system
/// must be full rank; callers get directed to a positive `k` otherwise.
pub fn ridge_fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, k: f64) -> Result<RidgeSolution> {
    if k < 0.0 {
        return Err(FocusError::InvalidArgument(format!(
            "ridge coefficient must be non-negative, got {k}"
        )));
    }
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(FocusError::ShapeMismatch(format!(
            "ridge_fit got {n} rows but {} targets",
            y.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(FocusError::InvalidArgument("ridge_fit inputs must be finite".into()));
    }
    if d == 0 {
        return Ok(RidgeSolution {
            beta: Array1::zeros(0),
            k,
            training_mse: y.iter().map(|v| v * v).sum::<f64>() / n as f64,
        });
    }
    let mut gram = x.t().dot(&x);
    for i in 0..d {
        gram[(i, i)] += k;
    }
    let chol = Cholesky::new(&gram).map_err(|e| {
        if k == 0.0 {
            FocusError::Singular(format!(
                "normal equations are singular with k = 0 ({e}); set k > 0"
            ))
        } else {
            FocusError::Singular(e.to_string())
        }
    })?;
    let beta = chol.solve_vec(&x.t().dot(&y));
    let resid = &x.dot(&beta) - &y;
    let training_mse = resid.iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok(RidgeSolution {
        beta,
        k,
        training_mse,
    })
}

/// Closed-form ridge coefficient `k = σ²_spu / (β*)²`.
pub fn hoerl_kennard_k(beta_star: f64, sigma_spu_sq: f64) -> Result<f64> {
    if beta_star == 0.0 {
        return Err(FocusError::InvalidArgument(
            "hoerl_kennard_k needs a non-zero ground-truth coefficient".into(),
        ));
    }
    if sigma_spu_sq < 0.0 {
        return Err(FocusError::InvalidArgument(
            "sigma_spu_sq must be non-negative".into(),
        ));
    }
    Ok(sigma_spu_sq / (beta_star * beta_star))
}

/// Regressor family for the per-target models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    LinearRidge,
    /// Two tanh hidden layers, fixed width and training budget.
    Mlp,
}

/// Per-sample ridge weight of the masked linear models. This is the
/// Hoerl-Kennard value of the car environment's designed spurious pair
/// (residual variance of one velocity component on the other, per unit
/// coefficient), so the plain all-inputs baseline reproduces the
/// weight-leakage the theory describes.
pub const RIDGE_WEIGHT_PER_SAMPLE: f64 = 2e-4;

const MLP_HIDDEN: usize = 16;
const MLP_STEPS: usize = 600;
const MLP_BATCH: usize = 128;
const MLP_LEARNING_RATE: f64 = 1e-2;
const MLP_WEIGHT_DECAY: f64 = 1e-4;

/// One bootstrap-fitted regressor over the masked inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor {
    Linear {
        beta: Array1<f64>,
        intercept: f64,
    },
    Mlp(MlpNet),
}

impl Regressor {
    fn predict_one(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Linear { beta, intercept } => {
                intercept + beta.iter().zip(x.iter()).map(|(b, v)| b * v).sum::<f64>()
            }
            Regressor::Mlp(net) => net.forward(x),
        }
    }
}

/// Small fixed tanh network with standardized inputs and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array1<f64>,
    b3: f64,
    x_mean: Array1<f64>,
    x_sd: Array1<f64>,
    y_mean: f64,
    y_sd: f64,
}

impl MlpNet {
    fn forward(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut xn = Array1::<f64>::zeros(d);
        for i in 0..d {
            xn[i] = (x[i] - self.x_mean[i]) / self.x_sd[i];
        }
        let h1 = (self.w1.dot(&xn) + &self.b1).mapv(f64::tanh);
        let h2 = (self.w2.dot(&h1) + &self.b2).mapv(f64::tanh);
        let out = self.w3.dot(&h2) + self.b3;
        self.y_mean + self.y_sd * out
    }

    fn fit(x: &Array2<f64>, y: &Array1<f64>, seed: u64) -> Self {
        let (n, d) = x.dim();
        let mut rng = child_rng(seed, 0);

        let x_mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
        let mut x_sd = Array1::<f64>::zeros(d);
        for j in 0..d {
            let col = x.column(j);
            let var = col.iter().map(|v| (v - x_mean[j]) * (v - x_mean[j])).sum::<f64>() / n as f64;
            x_sd[j] = var.sqrt().max(1e-9);
        }
        let y_mean = y.sum() / n as f64;
        let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
        let y_sd = y_var.sqrt().max(1e-9);

        let mut xn = x.clone();
        for j in 0..d {
            let mut col = xn.column_mut(j);
            col.mapv_inplace(|v| (v - x_mean[j]) / x_sd[j]);
        }
        let yn: Array1<f64> = y.iter().map(|v| (v - y_mean) / y_sd).collect();

        let mut init = |rows: usize, cols: usize| {
            let scale = (1.0 / cols.max(1) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        };
        let mut w1 = init(MLP_HIDDEN, d);
        let mut w2 = init(MLP_HIDDEN, MLP_HIDDEN);
        let mut w3v = init(1, MLP_HIDDEN);
        let mut b1 = Array1::<f64>::zeros(MLP_HIDDEN);
        let mut b2 = Array1::<f64>::zeros(MLP_HIDDEN);
        let mut b3 = 0.0f64;

        // Adam state
        let mut m: Vec<Array2<f64>> = vec![
            Array2::zeros(w1.dim()),
            Array2::zeros(w2.dim()),
            Array2::zeros(w3v.dim()),
        ];
        let mut v: Vec<Array2<f64>> = m.clone();
        let mut mb = [Array1::<f64>::zeros(MLP_HIDDEN), Array1::<f64>::zeros(MLP_HIDDEN)];
        let mut vb = mb.clone();
        let (mut mb3, mut vb3) = (0.0f64, 0.0f64);
        let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);

        for step in 1..=MLP_STEPS {
            let batch: Vec<usize> = (0..MLP_BATCH.min(n))
                .map(|_| rng.random_range(0..n))
                .collect();
            let bs = batch.len();
            let mut gw1 = Array2::<f64>::zeros(w1.dim());
            let mut gw2 = Array2::<f64>::zeros(w2.dim());
            let mut gw3 = Array2::<f64>::zeros(w3v.dim());
            let mut gb1 = Array1::<f64>::zeros(MLP_HIDDEN);
            let mut gb2 = Array1::<f64>::zeros(MLP_HIDDEN);
            let mut gb3 = 0.0f64;

            for &i in &batch {
                let xi = xn.row(i).to_owned();
                let a1 = w1.dot(&xi) + &b1;
                let h1 = a1.mapv(f64::tanh);
                let a2 = w2.dot(&h1) + &b2;
                let h2 = a2.mapv(f64::tanh);
                let w3 = w3v.row(0);
                let out = w3.dot(&h2) + b3;
                let err = out - yn[i];

                // output layer
                for j in 0..MLP_HIDDEN {
                    gw3[(0, j)] += err * h2[j];
                }
                gb3 += err;
                // second hidden
                let mut d2 = Array1::<f64>::zeros(MLP_HIDDEN);
                for j in 0..MLP_HIDDEN {
                    d2[j] = err * w3[j] * (1.0 - h2[j] * h2[j]);
                }
                for j in 0..MLP_HIDDEN {
                    if d2[j] != 0.0 {
                        for k in 0..MLP_HIDDEN {
                            gw2[(j, k)] += d2[j] * h1[k];
                        }
                        gb2[j] += d2[j];
                    }
                }
                // first hidden
                let mut d1 = Array1::<f64>::zeros(MLP_HIDDEN);
                for k in 0..MLP_HIDDEN {
                    let mut s = 0.0;
                    for j in 0..MLP_HIDDEN {
                        s += d2[j] * w2[(j, k)];
                    }
                    d1[k] = s * (1.0 - h1[k] * h1[k]);
                }
                for j in 0..MLP_HIDDEN {
                    if d1[j] != 0.0 {
                        for k in 0..d {
                            gw1[(j, k)] += d1[j] * xi[k];
                        }
                        gb1[j] += d1[j];
                    }
                }
            }

            let inv = 1.0 / bs as f64;
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            let mut adam2 = |w: &mut Array2<f64>, g: &Array2<f64>, slot: usize| {
                for (idx, gw) in g.indexed_iter() {
                    let grad = gw * inv + MLP_WEIGHT_DECAY * w[idx];
                    m[slot][idx] = beta1 * m[slot][idx] + (1.0 - beta1) * grad;
                    v[slot][idx] = beta2 * v[slot][idx] + (1.0 - beta2) * grad * grad;
                    let mh = m[slot][idx] / bc1;
                    let vh = v[slot][idx] / bc2;
                    w[idx] -= MLP_LEARNING_RATE * mh / (vh.sqrt() + eps);
                }
            };
            adam2(&mut w1, &gw1, 0);
            adam2(&mut w2, &gw2, 1);
            adam2(&mut w3v, &gw3, 2);
            for (slot, (w, g)) in [(&mut b1, &gb1), (&mut b2, &gb2)].into_iter().enumerate() {
                for j in 0..MLP_HIDDEN {
                    let grad = g[j] * inv;
                    mb[slot][j] = beta1 * mb[slot][j] + (1.0 - beta1) * grad;
                    vb[slot][j] = beta2 * vb[slot][j] + (1.0 - beta2) * grad * grad;
                    w[j] -= MLP_LEARNING_RATE * (mb[slot][j] / bc1) / ((vb[slot][j] / bc2).sqrt() + eps);
                }
            }
            let grad = gb3 * inv;
            mb3 = beta1 * mb3 + (1.0 - beta1) * grad;
            vb3 = beta2 * vb3 + (1.0 - beta2) * grad * grad;
            b3 -= MLP_LEARNING_RATE * (mb3 / bc1) / ((vb3 / bc2).sqrt() + eps);
        }

        Self {
            w1,
            b1,
            w2,
            b2,
            w3: w3v.row(0).to_owned(),
            b3,
            x_mean,
            x_sd,
            y_mean,
            y_sd,
        }
    }
}

/// Ensemble of regressors for one prediction target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEnsemble {
    /// Input indices this target is allowed to see.
    pub parents: Vec<usize>,
    pub members: Vec<Regressor>,
}

/// World model with per-target parent masks and bootstrap ensembles.
/// Target `j < n_s` predicts the next-state dimension `j`; target `n_s`
/// predicts the reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedWorldModel {
    pub schema: DimensionSchema,
    pub mask: Array2<u8>,
    pub kind: ModelKind,
    pub ensemble_size: usize,
    pub seed: u64,
    pub targets: Vec<TargetEnsemble>,
    /// Targets whose parent set was empty; they predict the training mean.
    pub zero_parent_targets: Vec<usize>,
}

/// Fit `ensemble_size` bootstrap regressors per target, each restricted to
/// the masked parent set. Deterministic under `seed`.
pub fn fit_masked_model(
    ds: &TransitionDataset,
    graph: &CausalGraph,
    kind: ModelKind,
    ensemble_size: usize,
    seed: u64,
) -> Result<MaskedWorldModel> {
    if ensemble_size < 2 {
        return Err(FocusError::InvalidConfig(
            "ensemble_size must be at least 2".into(),
        ));
    }
    if ds.schema != graph.schema {
        return Err(FocusError::SchemaMismatch(
            "dataset and graph schemas differ".into(),
        ));
    }
    let n = ds.len();
    let max_parents = (0..graph.schema.n_targets())
        .map(|j| graph.parents_of(j).len())
        .max()
        .unwrap_or(0);
    if n < 10 * max_parents.max(1) {
        return Err(FocusError::InvalidArgument(format!(
            "need at least {} transitions to fit (10 x largest parent set), got {n}",
            10 * max_parents.max(1)
        )));
    }
    let inputs = ds.input_matrix();
    let n_targets = graph.schema.n_targets();

    let fitted: Vec<Result<TargetEnsemble>> = (0..n_targets)
        .into_par_iter()
        .map(|j| {
            let parents = graph.parents_of(j);
            let y = ds.target_column(j);
            let x_full = select_columns(&inputs, &parents);
            let members: Result<Vec<Regressor>> = (0..ensemble_size)
                .map(|member| {
                    let member_seed = split_seed(seed, (j * ensemble_size + member) as u64);
                    let mut rng = child_rng(member_seed, 0);
                    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let xb = x_full.select(ndarray::Axis(0), &rows);
                    let yb = y.select(ndarray::Axis(0), &rows);
                    fit_member(&xb, &yb, kind, member_seed)
                })
                .collect();
            Ok(TargetEnsemble {
                parents,
                members: members?,
            })
        })
        .collect();

    let mut targets = Vec::with_capacity(n_targets);
    let mut zero_parent_targets = Vec::new();
    for (j, t) in fitted.into_iter().enumerate() {
        let t = t?;
        if t.parents.is_empty() {
            zero_parent_targets.push(j);
        }
        targets.push(t);
    }
    Ok(MaskedWorldModel {
        schema: graph.schema.clone(),
        mask: graph.mask.clone(),
        kind,
        ensemble_size,
        seed,
        targets,
        zero_parent_targets,
    })
}

fn select_columns(inputs: &Array2<f64>, cols: &[usize]) -> Array2<f64> {
    let n = inputs.nrows();
    let mut out = Array2::<f64>::zeros((n, cols.len()));
    for (c, &i) in cols.iter().enumerate() {
        out.column_mut(c).assign(&inputs.column(i));
    }
    out
}

/// Centered ridge fit: the intercept is not penalized, so a zero-parent
/// target reduces to the bootstrap-sample mean.
fn fit_member(x: &Array2<f64>, y: &Array1<f64>, kind: ModelKind, seed: u64) -> Result<Regressor> {
    let (n, d) = x.dim();
    match kind {
        ModelKind::LinearRidge => {
            let y_mean = y.sum() / n as f64;
            if d == 0 {
                return Ok(Regressor::Linear {
                    beta: Array1::zeros(0),
                    intercept: y_mean,
                });
            }
            let x_mean = x.mean_axis(ndarray::Axis(0)).expect("non-empty");
            let mut xc = x.clone();
            for mut row in xc.rows_mut() {
                row -= &x_mean;
            }
            let yc: Array1<f64> = y.iter().map(|v| v - y_mean).collect();
            let k = RIDGE_WEIGHT_PER_SAMPLE * n as f64;
            let sol = ridge_fit(xc.view(), yc.view(), k)?;
            let intercept = y_mean - sol.beta.dot(&x_mean);
            Ok(Regressor::Linear {
                beta: sol.beta,
                intercept,
            })
        }
        ModelKind::Mlp => {
            if d == 0 {
                return Ok(Regressor::Linear {
                    beta: Array1::zeros(0),
                    intercept: y.sum() / n as f64,
                });
            }
            Ok(Regressor::Mlp(MlpNet::fit(x, y, seed)))
        }
    }
}

/// Model output for one (state, action) query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub s_next_mean: Vec<f64>,
    pub r_mean: f64,
    /// Max over targets of the ensemble standard deviation.
    pub uncertainty: f64,
}

impl MaskedWorldModel {
    /// Ensemble-mean prediction for every target plus the scalar
    /// disagreement signal.
    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<Prediction> {
        let n_s = self.schema.n_s();
        let n_a = self.schema.n_a();
        if s.len() != n_s || a.len() != n_a {
            return Err(FocusError::ShapeMismatch(format!(
                "predict got state width {} / action width {}, schema wants {} / {}",
                s.len(),
                a.len(),
                n_s,
                n_a
            )));
        }
        let mut input = Vec::with_capacity(n_s + n_a);
        input.extend_from_slice(s);
        input.extend_from_slice(a);

        let mut s_next_mean = vec![0.0; n_s];
        let mut r_mean = 0.0;
        let mut uncertainty: f64 = 0.0;
        let mut masked = Vec::new();
        for (j, ens) in self.targets.iter().enumerate() {
            masked.clear();
            masked.extend(ens.parents.iter().map(|&i| input[i]));
            let preds: Vec<f64> = ens.members.iter().map(|m| m.predict_one(&masked)).collect();
            let mean = preds.iter().sum::<f64>() / preds.len() as f64;
            // identical members must report exactly zero disagreement
            let sd = if preds.iter().all(|p| *p == preds[0]) {
                0.0
            } else {
                (preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>()
                    / preds.len() as f64)
                    .sqrt()
            };
            uncertainty = uncertainty.max(sd);
            if j < n_s {
                s_next_mean[j] = mean;
            } else {
                r_mean = mean;
            }
        }
        Ok(Prediction {
            s_next_mean,
            r_mean,
            uncertainty,
        })
    }

    pub fn graph(&self) -> CausalGraph {
        CausalGraph {
            schema: self.schema.clone(),
            mask: self.mask.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| FocusError::Parse {
            line: 0,
            msg: format!("bad model json: {e}"),
        })
    }
}
