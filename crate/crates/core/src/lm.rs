//! Levenberg–Marquardt training of the inverse network.
//!
//! Each epoch builds the full-batch Jacobian of the residuals
//! `ξ = ŷ - t` with respect to the flattened parameters, solves the damped
//! normal equations `(JᵀJ + μI) Δw = -Jᵀξ` by Cholesky, and accepts the
//! candidate only if it lowers the training MSE. Accepted steps divide `μ`
//! by `β`, rejected steps multiply it by `β`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{mse, Batch, GradScratch, InverseModel, Network, NormParams};

/// Samples per Jacobian block. Rows inside a block are computed in
/// parallel; blocks are folded into `JᵀJ` sequentially, so the sum does
/// not depend on the thread count.
const JACOBIAN_BLOCK_ROWS: usize = 256;

pub const MU_MIN: f64 = 1e-12;
pub const MU_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub mu0: f64,
    pub beta: f64,
    pub max_epochs: usize,
    #[serde(rename = "goal_mse")]
    pub goal: f64,
    pub min_grad: f64,
    pub step_tol: f64,
    pub max_val_failures: usize,
    /// Split and initialisation seed. Not read from config files: runs
    /// take it from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            mu0: 1e-3,
            beta: 10.0,
            max_epochs: 200,
            goal: 1e-3,
            min_grad: 1e-4,
            step_tol: 1e-10,
            max_val_failures: 6,
            seed: 1,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::error::{invalid, require_positive};
        require_positive("mu0", self.mu0)?;
        require_positive("goal_mse", self.goal)?;
        require_positive("min_grad", self.min_grad)?;
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(invalid("beta", format!("must be > 1, got {}", self.beta)));
        }
        if !(self.step_tol.is_finite() && self.step_tol >= 0.0) {
            return Err(invalid("step_tol", "must be >= 0"));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded random partition. Validation and test sizes are
/// `floor(ratio * n)`; training takes the remainder.
pub fn split_data(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<DataSplit> {
    let (r_train, r_val, r_test) = ratios;
    let ok = [r_train, r_val, r_test]
        .iter()
        .all(|r| r.is_finite() && *r > 0.0);
    if !ok || ((r_train + r_val + r_test) - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let n_val = (r_val * n as f64).floor() as usize;
    let n_test = (r_test * n as f64).floor() as usize;
    if n < 3 || n_val == 0 || n_test == 0 || n_val + n_test >= n {
        return Err(Error::Contract(format!(
            "{n} samples cannot give every split at least one sample"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = n - n_val - n_test;
    Ok(DataSplit {
        train: idx[..n_train].to_vec(),
        val: idx[n_train..n_train + n_val].to_vec(),
        test: idx[n_train + n_val..].to_vec(),
    })
}

/// Residuals `ŷ - t` for every sample.
pub fn residuals(net: &Network, batch: &Batch) -> Result<Vec<f64>> {
    let y = net.forward_batch(&batch.inputs)?;
    Ok(y.iter().zip(&batch.targets).map(|(y, t)| y - t).collect())
}

/// `P × N_w` Jacobian of the residuals. Rows come from per-sample
/// reverse-mode passes.
pub fn compute_jacobian(net: &Network, batch: &Batch) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("jacobian of an empty batch".into()));
    }
    let p = batch.len();
    let nw = net.param_count();
    // Row-major scratch, transposed into nalgebra's column-major layout.
    let mut rows = vec![0.0; p * nw];
    rows.par_chunks_mut(nw)
        .zip(batch.inputs.par_iter())
        .for_each_init(GradScratch::default, |scratch, (row, &x)| {
            net.gradient_row(x, row, scratch);
        });
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFault {
            context: "jacobian",
        });
    }
    Ok(DMatrix::from_row_slice(p, nw, &rows))
}

/// Gauss–Newton pieces for one linearisation point.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    /// `JᵀJ`
    pub jtj: DMatrix<f64>,
    /// `Jᵀξ`
    pub jtr: DVector<f64>,
}

impl NormalEquations {
    pub fn from_jacobian(j: &DMatrix<f64>, xi: &DVector<f64>) -> Self {
        Self {
            jtj: j.tr_mul(j),
            jtr: j.tr_mul(xi),
        }
    }

    /// Accumulates `JᵀJ` and `Jᵀξ` block by block without materialising
    /// the full Jacobian. Blocks are summed in index order.
    pub fn accumulate(net: &Network, batch: &Batch, xi: &[f64]) -> Result<Self> {
        let nw = net.param_count();
        let mut jtj = DMatrix::zeros(nw, nw);
        let mut jtr = DVector::zeros(nw);
        let mut cols = vec![0.0; JACOBIAN_BLOCK_ROWS * nw];
        for start in (0..batch.len()).step_by(JACOBIAN_BLOCK_ROWS) {
            let end = (start + JACOBIAN_BLOCK_ROWS).min(batch.len());
            let b = end - start;
            // Each gradient row is one contiguous column of the block's Jᵀ.
            cols[..b * nw]
                .par_chunks_mut(nw)
                .zip(batch.inputs[start..end].par_iter())
                .for_each_init(GradScratch::default, |scratch, (col, &x)| {
                    net.gradient_row(x, col, scratch);
                });
            if cols[..b * nw].iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFault {
                    context: "jacobian",
                });
            }
            let jt = DMatrix::from_column_slice(nw, b, &cols[..b * nw]);
            jtj.gemm(1.0, &jt, &jt.transpose(), 1.0);
            jtr.gemv(1.0, &jt, &DVector::from_column_slice(&xi[start..end]), 1.0);
        }
        Ok(Self { jtj, jtr })
    }

    /// Gradient of the MSE, `(2/P) Jᵀξ`.
    pub fn gradient(&self, p: usize) -> DVector<f64> {
        &self.jtr * (2.0 / p as f64)
    }

    /// Solves `(JᵀJ + μI) Δw = -Jᵀξ`.
    pub fn solve(&self, mu: f64) -> Result<DVector<f64>> {
        let mut a = self.jtj.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += mu;
        }
        let scale = a.diagonal().amax();
        let chol = a.cholesky().ok_or(Error::Factorization { mu })?;
        // Rounding can leave a tiny positive pivot on a numerically
        // singular system; treat that like a failed factorisation.
        let floor = scale * self.jtj.nrows() as f64 * f64::EPSILON;
        if chol.l_dirty().diagonal().iter().any(|d| d * d <= floor) {
            return Err(Error::Factorization { mu });
        }
        let dw = chol.solve(&(-&self.jtr));
        if dw.iter().all(|v| v.is_finite()) {
            Ok(dw)
        } else {
            Err(Error::Factorization { mu })
        }
    }
}

/// One LM step from an explicit Jacobian and residual vector.
pub fn lm_step(j: &DMatrix<f64>, xi: &DVector<f64>, mu: f64) -> Result<DVector<f64>> {
    if j.nrows() != xi.len() {
        return Err(Error::Contract(format!(
            "jacobian has {} rows, residual has {}",
            j.nrows(),
            xi.len()
        )));
    }
    NormalEquations::from_jacobian(j, xi).solve(mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Goal,
    MinGradient,
    StepTolerance,
    MaxEpochs,
    ValidationStop,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Damping used to compute this epoch's step.
    pub mu: f64,
    pub accepted: bool,
    /// Training MSE after the accept/reject decision.
    pub train_mse: f64,
    pub val_mse: f64,
    pub test_mse: f64,
    /// `‖(2/P) Jᵀξ‖` at the linearisation point.
    pub grad_norm: f64,
    pub step_norm: f64,
    pub val_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_mse: f64,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

impl TrainHistory {
    /// Final training MSE (after the last epoch).
    pub fn final_train_mse(&self) -> f64 {
        self.epochs
            .last()
            .map_or(self.initial_train_mse, |e| e.train_mse)
    }

    /// Damping value in effect after each epoch, starting with `mu0`.
    pub fn mu_trajectory(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mu).collect()
    }
}

/// Trains `net` on normalised data. Returns the parameters with the best
/// validation MSE seen (including the initial point).
pub fn train(
    net: &Network,
    train: &Batch,
    val: &Batch,
    test: &Batch,
    cfg: &LmConfig,
) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    for (name, b) in [("train", train), ("val", val), ("test", test)] {
        if b.is_empty() {
            return Err(Error::Contract(format!("{name} batch is empty")));
        }
    }
    let p = train.len();
    let mut net = net.clone();
    let mut w = net.flatten();
    let mut xi = residuals(&net, train)?;
    let mut err = mse_of(&xi);
    let eval =
        |n: &Network, b: &Batch| -> Result<f64> { mse(&n.forward_batch(&b.inputs)?, &b.targets) };

    let initial_train_mse = err;
    let mut best_val = eval(&net, val)?;
    let mut best_w = w.clone();
    let mut best_epoch = 0;
    let mut val_failures = 0;
    let mut mu = cfg.mu0;
    let mut normal: Option<NormalEquations> = None;
    let mut grad_norm = f64::NAN;
    let mut epochs = Vec::new();
    let mut candidate = net.clone();

    let mut stop = StopReason::MaxEpochs;
    for epoch in 1..=cfg.max_epochs {
        if normal.is_none() {
            let ne = NormalEquations::accumulate(&net, train, &xi)?;
            grad_norm = ne.gradient(p).norm();
            normal = Some(ne);
        }
        let ne = normal.as_ref().expect("normal equations computed above");
        let mu_used = mu;

        let (accepted, step_norm) = match ne.solve(mu) {
            Ok(dw) => {
                let cand_w: Vec<f64> = w.iter().zip(dw.iter()).map(|(a, b)| a + b).collect();
                candidate.set_params(&cand_w);
                let cand_xi = match residuals(&candidate, train) {
                    Ok(r) => Some(r),
                    Err(Error::NumericFault { .. }) => None,
                    Err(e) => return Err(e),
                };
                match cand_xi {
                    Some(cand_xi) if mse_of(&cand_xi) < err => {
                        err = mse_of(&cand_xi);
                        xi = cand_xi;
                        w = cand_w;
                        net.set_params(&w);
                        normal = None;
                        (true, dw.norm())
                    }
                    _ => (false, dw.norm()),
                }
            }
            // A failed factorisation counts as a rejected step.
            Err(Error::Factorization { .. }) => (false, f64::INFINITY),
            Err(e) => return Err(e),
        };

        if accepted {
            mu = (mu / cfg.beta).max(MU_MIN);
            let v = eval(&net, val)?;
            if v < best_val {
                best_val = v;
                best_w.clone_from(&w);
                best_epoch = epoch;
                val_failures = 0;
            } else {
                val_failures += 1;
            }
        } else {
            mu *= cfg.beta;
            if mu > MU_MAX {
                epochs.push(EpochRecord {
                    epoch,
                    mu: mu_used,
                    accepted,
                    train_mse: err,
                    val_mse: eval(&net, val)?,
                    test_mse: eval(&net, test)?,
                    grad_norm,
                    step_norm,
                    val_failures,
                });
                return Err(Error::TrainingDiverged {
                    limit: MU_MAX,
                    history: Box::new(TrainHistory {
                        initial_train_mse,
                        epochs,
                        stop_reason: StopReason::Diverged,
                        best_epoch,
                        best_val_mse: best_val,
                    }),
                });
            }
        }

        epochs.push(EpochRecord {
            epoch,
            mu: mu_used,
            accepted,
            train_mse: err,
            val_mse: eval(&net, val)?,
            test_mse: eval(&net, test)?,
            grad_norm,
            step_norm,
            val_failures,
        });

        if err <= cfg.goal {
            stop = StopReason::Goal;
            break;
        }
        if grad_norm < cfg.min_grad {
            stop = StopReason::MinGradient;
            break;
        }
        if step_norm < cfg.step_tol {
            stop = StopReason::StepTolerance;
            break;
        }
        if val_failures >= cfg.max_val_failures {
            stop = StopReason::ValidationStop;
            break;
        }
    }

    // Keep the final point when it ties the best validation score so a
    // run that stops on its goal returns the weights that reached it.
    let final_val = eval(&net, val)?;
    if final_val <= best_val {
        best_val = final_val;
        best_w.clone_from(&w);
        best_epoch = epochs.last().map_or(0, |e| e.epoch);
    }
    net.set_params(&best_w);
    Ok((
        net,
        TrainHistory {
            initial_train_mse,
            epochs,
            stop_reason: stop,
            best_epoch,
            best_val_mse: best_val,
        },
    ))
}

/// End-to-end settings for fitting one side's inverse model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub layer_sizes: Vec<usize>,
    /// Train/validation/test fractions.
    pub split: [f64; 3],
    pub lm: LmConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![1, 30, 25, 15, 10, 5, 1],
            split: [0.70, 0.15, 0.15],
            lm: LmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: TrainHistory,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    /// MSE of the returned model in rpm², per split.
    pub raw_train_mse: f64,
    pub raw_val_mse: f64,
    pub raw_test_mse: f64,
    /// Same, on the normalised scale the trainer optimised.
    pub norm_train_mse: f64,
    pub norm_val_mse: f64,
    pub norm_test_mse: f64,
}

/// Split, fit scaling on the training part only, train, and evaluate on
/// both scales. The split and the initial weights both derive from
/// `cfg.lm.seed`.
pub fn fit_inverse_model(data: &Batch, cfg: &TrainConfig) -> Result<(InverseModel, TrainReport)> {
    let [a, b, c] = cfg.split;
    let split = split_data(data.len(), (a, b, c), cfg.lm.seed)?;
    let raw = [
        data.select(&split.train),
        data.select(&split.val),
        data.select(&split.test),
    ];
    let norm = NormParams::fit(&raw[0])?;
    let [tr, va, te] = raw.clone().map(|b| norm.apply(&b));

    let init = Network::init(&cfg.layer_sizes, cfg.lm.seed)?;
    let (net, history) = train(&init, &tr, &va, &te, &cfg.lm)?;
    let model = InverseModel { net, norm };

    let norm_mse =
        |b: &Batch| -> Result<f64> { mse(&model.net.forward_batch(&b.inputs)?, &b.targets) };
    let raw_mse = |b: &Batch| -> Result<f64> {
        let y = b
            .inputs
            .iter()
            .map(|&v| model.command(v))
            .collect::<Result<Vec<_>>>()?;
        mse(&y, &b.targets)
    };
    let report = TrainReport {
        train_samples: tr.len(),
        val_samples: va.len(),
        test_samples: te.len(),
        raw_train_mse: raw_mse(&raw[0])?,
        raw_val_mse: raw_mse(&raw[1])?,
        raw_test_mse: raw_mse(&raw[2])?,
        norm_train_mse: norm_mse(&tr)?,
        norm_val_mse: norm_mse(&va)?,
        norm_test_mse: norm_mse(&te)?,
        history,
    };
    Ok((model, report))
}

fn mse_of(xi: &[f64]) -> f64 {
    xi.iter().map(|r| r * r).sum::<f64>() / xi.len() as f64
}
