//! Joint adaptation cost over (latent, posterior) tuples, the OT / POT
//! adaptation losses, and the alternating mini-batch optimization: solve
//! the coupling with parameters frozen, then take a gradient step with
//! the coupling (and admissibility weights) frozen.

use alloc::vec::Vec;

use rand::SeedableRng;

use crate::data::{sample_minibatch, EmbeddingSet};
use crate::mat::Mat;
use crate::math;
use crate::model::{
    adam_step, backward, cross_entropy, one_hot, AdamParams, AdamState, AdaptModel, LossSpec,
};
use crate::ot::{sinkhorn, transport_value, uniform_marginal, CostMatrix, Coupling, EPS_STAB};
use crate::pot::{soft_weight, weighted_transport_value, PotParams, WeightMatrix};
use crate::{Error, Result, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptMode {
    JdaOt,
    JdaPot,
    SourceOnly,
}

/// How the entropic regularization strength is chosen per batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonRule {
    Absolute(f64),
    /// `factor * mean(C)` of the cost matrix being solved.
    MeanScaled(f64),
}

impl EpsilonRule {
    pub fn resolve(&self, cost: &CostMatrix) -> f64 {
        match *self {
            EpsilonRule::Absolute(e) => e,
            EpsilonRule::MeanScaled(f) => {
                let eps = f * cost.mean();
                // A constant-zero cost matrix has zero mean; any positive
                // epsilon gives the same (independent) coupling.
                if eps > 0.0 {
                    eps
                } else {
                    1e-9
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JdaHyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub pot: PotParams,
    pub mode: AdaptMode,
    pub epsilon: EpsilonRule,
    pub sinkhorn_max_iter: u32,
    pub sinkhorn_tol: f64,
    pub batch_source: usize,
    pub batch_target: usize,
    pub iterations: u32,
    pub learning_rate: f64,
    pub seed: u64,
    /// Gradient steps taken per coupling solve.
    pub inner_steps: u32,
    /// Solve the coupling on `C .* w` instead of the raw cost. Off by
    /// default: down-weighted pairs have near-zero weighted cost, so the
    /// weighted-cost solver would attract mass to exactly the pairs the
    /// weights try to exclude.
    pub pot_coupling_on_weighted_cost: bool,
}

impl Default for JdaHyperParams {
    fn default() -> Self {
        JdaHyperParams {
            alpha: 1.0,
            beta: 0.001,
            lambda: 1.0,
            pot: PotParams::default(),
            mode: AdaptMode::JdaPot,
            epsilon: EpsilonRule::MeanScaled(0.1),
            sinkhorn_max_iter: 1000,
            sinkhorn_tol: 1e-6,
            batch_source: 64,
            batch_target: 64,
            iterations: 200,
            learning_rate: 0.001,
            seed: 7,
            inner_steps: 1,
            pot_coupling_on_weighted_cost: false,
        }
    }
}

impl JdaHyperParams {
    fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::InvalidParam {
                context: "alpha, beta, lambda must be >= 0",
            });
        }
        if self.batch_source < 1 || self.batch_target < 1 {
            return Err(Error::InvalidParam {
                context: "batch sizes must be >= 1",
            });
        }
        if self.inner_steps < 1 {
            return Err(Error::InvalidParam {
                context: "inner_steps must be >= 1",
            });
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidParam {
                context: "learning rate must be >= 0",
            });
        }
        Ok(())
    }
}

/// `C_ij = alpha * dist(z_i^s, z_j^t) + beta * dist(y_i^s, yhat_j^t)`
/// with the stabilized Euclidean distance on both halves.
pub fn joint_cost(
    z_source: &Mat,
    y_source: &Mat,
    z_target: &Mat,
    y_target_hat: &Mat,
    alpha: f64,
    beta: f64,
) -> Result<CostMatrix> {
    if z_source.n_cols() != z_target.n_cols() {
        return Err(Error::DimMismatch {
            context: "joint_cost latent",
            expected: z_source.n_cols(),
            found: z_target.n_cols(),
        });
    }
    if y_source.n_cols() != y_target_hat.n_cols() {
        return Err(Error::DimMismatch {
            context: "joint_cost labels",
            expected: y_source.n_cols(),
            found: y_target_hat.n_cols(),
        });
    }
    if z_source.n_rows() != y_source.n_rows() || z_target.n_rows() != y_target_hat.n_rows() {
        return Err(Error::DimMismatch {
            context: "joint_cost rows",
            expected: z_source.n_rows(),
            found: y_source.n_rows(),
        });
    }
    let n = z_source.n_rows();
    let m = z_target.n_rows();
    let mut values = Mat::zeros(n, m);
    for i in 0..n {
        let zs = z_source.row(i);
        let ys = y_source.row(i);
        for j in 0..m {
            let zt = z_target.row(j);
            let yt = y_target_hat.row(j);
            let mut cost = 0.0;
            if alpha != 0.0 {
                let mut sq = 0.0;
                for t in 0..zs.len() {
                    let d = zs[t] - zt[t];
                    sq += d * d;
                }
                cost += alpha * math::sqrt(sq + EPS_STAB);
            }
            if beta != 0.0 {
                let mut sq = 0.0;
                for t in 0..ys.len() {
                    let d = ys[t] - yt[t];
                    sq += d * d;
                }
                cost += beta * math::sqrt(sq + EPS_STAB);
            }
            values[(i, j)] = cost;
        }
    }
    CostMatrix::new(values)
}

/// Adaptation loss for one mini-batch cost matrix.
#[derive(Debug, Clone)]
pub struct AdaptationOutcome {
    pub value: f64,
    pub coupling: Option<Coupling>,
    pub pot_weights: Option<WeightMatrix>,
    pub sinkhorn_converged: bool,
    pub sinkhorn_iterations: u32,
    pub marginal_error: f64,
}

/// Solve the coupling for `cost` and aggregate the (possibly weighted)
/// objective. POT solves the coupling on the raw cost and applies the
/// soft weights to the aggregation only, unless `on_weighted_cost` asks
/// for the literal weighted-cost formulation.
pub fn adaptation_loss(
    cost: &CostMatrix,
    mode: AdaptMode,
    pot: &PotParams,
    epsilon: f64,
    max_iter: u32,
    tol: f64,
    on_weighted_cost: bool,
) -> Result<AdaptationOutcome> {
    match mode {
        AdaptMode::SourceOnly => Ok(AdaptationOutcome {
            value: 0.0,
            coupling: None,
            pot_weights: None,
            sinkhorn_converged: true,
            sinkhorn_iterations: 0,
            marginal_error: 0.0,
        }),
        AdaptMode::JdaOt => {
            let mu = uniform_marginal(cost.n_rows());
            let nu = uniform_marginal(cost.n_cols());
            let run = sinkhorn(cost, &mu, &nu, epsilon, max_iter, tol)?;
            let value = transport_value(cost, &run.coupling)?;
            Ok(AdaptationOutcome {
                value,
                coupling: Some(run.coupling),
                pot_weights: None,
                sinkhorn_converged: run.converged,
                sinkhorn_iterations: run.iterations,
                marginal_error: run.marginal_error,
            })
        }
        AdaptMode::JdaPot => {
            let weights = soft_weight(cost, pot);
            let mu = uniform_marginal(cost.n_rows());
            let nu = uniform_marginal(cost.n_cols());
            let run = if on_weighted_cost {
                let mut weighted = cost.values().clone();
                for (c, w) in weighted.iter_mut().zip(weights.weights().iter()) {
                    *c *= w;
                }
                sinkhorn(&CostMatrix::new(weighted)?, &mu, &nu, epsilon, max_iter, tol)?
            } else {
                sinkhorn(cost, &mu, &nu, epsilon, max_iter, tol)?
            };
            let value = weighted_transport_value(cost, &run.coupling, &weights)?;
            Ok(AdaptationOutcome {
                value,
                coupling: Some(run.coupling),
                pot_weights: Some(weights),
                sinkhorn_converged: run.converged,
                sinkhorn_iterations: run.iterations,
                marginal_error: run.marginal_error,
            })
        }
    }
}

/// `ce + lambda * adaptation`.
pub fn total_loss(ce_value: f64, adaptation_value: f64, lambda: f64) -> f64 {
    ce_value + lambda * adaptation_value
}

/// One logged optimization round.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: u32,
    pub ce: f64,
    pub adaptation: f64,
    pub total: f64,
    pub sinkhorn_converged: bool,
    /// Worst marginal violation of the coupling solved this round.
    pub marginal_error: f64,
    /// Total mass of the coupling solved this round (1 when none).
    pub coupling_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
}

/// Alternating optimization. Each round samples a source and a target
/// mini-batch, forms pseudo-labels from the current model, solves the
/// coupling with parameters frozen, then takes `inner_steps` Adam steps
/// on the classification + adaptation objective with the coupling and
/// weights frozen. Target labels are never read. Fully determined by
/// `hp.seed`.
pub fn adapt(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    model: AdaptModel,
    hp: &JdaHyperParams,
) -> Result<(AdaptModel, TrainHistory)> {
    hp.validate()?;
    if source.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            context: "adapt source dim",
            expected: model.input_dim(),
            found: source.dim(),
        });
    }
    if target.dim() != model.input_dim() {
        return Err(Error::DimMismatch {
            context: "adapt target dim",
            expected: model.input_dim(),
            found: target.dim(),
        });
    }
    if source.n_classes() > model.n_classes() {
        return Err(Error::DimMismatch {
            context: "adapt classes",
            expected: model.n_classes(),
            found: source.n_classes(),
        });
    }
    if hp.batch_source > source.n_samples() {
        return Err(Error::BatchSize {
            requested: hp.batch_source,
            available: source.n_samples(),
        });
    }
    if hp.batch_target > target.n_samples() {
        return Err(Error::BatchSize {
            requested: hp.batch_target,
            available: target.n_samples(),
        });
    }
    // Source supervision is mandatory; fail before the loop if any label
    // is unknown.
    source.known_labels()?;

    let mut model = model;
    let mut rng = RngState::seed_from_u64(hp.seed);
    let mut adam = AdamState::new(
        &model,
        AdamParams {
            learning_rate: hp.learning_rate,
            ..AdamParams::default()
        },
    );
    let mut history = TrainHistory::default();

    for iteration in 0..hp.iterations {
        // Both batches are always drawn so the RNG stream (and therefore
        // the source trajectory) is identical across modes.
        let src_batch = sample_minibatch(source, hp.batch_source, &mut rng)?;
        let tgt_batch = sample_minibatch(target, hp.batch_target, &mut rng)?;
        let y_src = one_hot(
            &src_batch
                .labels
                .iter()
                .map(|l| {
                    l.ok_or(Error::InvalidParam {
                        context: "source batch contains unknown labels",
                    })
                })
                .collect::<Result<Vec<usize>>>()?,
            model.n_classes(),
        )?;

        let mut record = None;
        for _ in 0..hp.inner_steps {
            let src_cache = model.forward(&src_batch.vectors)?;
            let ce = cross_entropy(&y_src, &src_cache.probs)?;

            let use_adapt = hp.mode != AdaptMode::SourceOnly && hp.lambda > 0.0;
            let (outcome, tgt_cache) = if use_adapt {
                let tgt_cache = model.forward(&tgt_batch.vectors)?;
                let cost = joint_cost(
                    &src_cache.z,
                    &y_src,
                    &tgt_cache.z,
                    &tgt_cache.probs,
                    hp.alpha,
                    hp.beta,
                )?;
                let epsilon = hp.epsilon.resolve(&cost);
                let outcome = adaptation_loss(
                    &cost,
                    hp.mode,
                    &hp.pot,
                    epsilon,
                    hp.sinkhorn_max_iter,
                    hp.sinkhorn_tol,
                    hp.pot_coupling_on_weighted_cost,
                )?;
                (outcome, Some(tgt_cache))
            } else {
                (
                    AdaptationOutcome {
                        value: 0.0,
                        coupling: None,
                        pot_weights: None,
                        sinkhorn_converged: true,
                        sinkhorn_iterations: 0,
                        marginal_error: 0.0,
                    },
                    None,
                )
            };

            if record.is_none() {
                record = Some(IterationRecord {
                    iteration,
                    ce,
                    adaptation: outcome.value,
                    total: total_loss(ce, outcome.value, hp.lambda),
                    sinkhorn_converged: outcome.sinkhorn_converged,
                    marginal_error: outcome.marginal_error,
                    coupling_mass: outcome
                        .coupling
                        .as_ref()
                        .map(Coupling::total_mass)
                        .unwrap_or(1.0),
                });
            }

            let spec = LossSpec {
                ce_weight: 1.0,
                lambda: hp.lambda,
                alpha: hp.alpha,
                beta: hp.beta,
                gamma: outcome.coupling.as_ref(),
                pot_weights: outcome.pot_weights.as_ref(),
            };
            let grads = backward(&model, &src_cache, &y_src, tgt_cache.as_ref(), &spec)?;
            adam_step(&mut model, &grads, &mut adam);
        }
        history.records.push(record.expect("inner_steps >= 1"));
    }

    Ok((model, history))
}

/// Posterior rows and argmax labels for a whole set; argmax ties go to
/// the lowest class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Mat,
    pub labels: Vec<usize>,
}

pub fn predict(model: &AdaptModel, set: &EmbeddingSet) -> Result<Prediction> {
    let z = model.project(set.vectors())?;
    let probs = model.classify(&z)?;
    let labels = argmax_rows(&probs);
    Ok(Prediction { probs, labels })
}

fn argmax_rows(probs: &Mat) -> Vec<usize> {
    let mut out = Vec::with_capacity(probs.n_rows());
    for i in 0..probs.n_rows() {
        let row = probs.row(i);
        let mut best = 0;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best = j;
                best_v = v;
            }
        }
        out.push(best);
    }
    out
}
