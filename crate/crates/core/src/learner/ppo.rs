//! Clipped-surrogate policy loss and multi-head value loss, each returning
//! its gradient with respect to the network outputs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::gaussian::{entropy, log_prob};
use crate::nn::{ActorCritic, ForwardCache, COST_ROW, VALUE_ROW};
use crate::types::ACTION_DIM;

/// One optimization minibatch.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    /// `B × I` encoded states.
    pub features: Array2<f64>,
    /// Pre-clip actions whose log-probabilities were recorded.
    pub raw_actions: Vec<[f64; ACTION_DIM]>,
    pub log_prob_old: Vec<f64>,
    /// Policy advantages (gated, for the main update).
    pub advantages: Vec<f64>,
    pub target_r: Vec<f64>,
    /// `B × K` cost-value targets.
    pub target_c: Array2<f64>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.log_prob_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prob_old.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyStats {
    /// Total policy loss including the entropy bonus.
    pub loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// `E[log π_old − log π]`.
    pub approx_kl: f64,
}

/// `mean(−min(r·A, clip(r, 1±ε)·A)) − c_H·H(π)`. Adds `∂L/∂out` for the
/// mean rows into `d_out` and returns `∂L/∂log_std`.
#[allow(clippy::too_many_arguments)]
pub fn policy_loss(
    cache: &ForwardCache,
    log_std: &[f64; ACTION_DIM],
    raw_actions: &[[f64; ACTION_DIM]],
    log_prob_old: &[f64],
    advantages: &[f64],
    clip_epsilon: f64,
    entropy_coef: f64,
    d_out: &mut Array2<f64>,
) -> (PolicyStats, [f64; ACTION_DIM]) {
    let b = raw_actions.len();
    let inv_b = 1.0 / b as f64;
    let inv_std = [(-log_std[0]).exp(), (-log_std[1]).exp()];
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut kl = 0.0;
    let mut d_log_std = [0.0; ACTION_DIM];
    for i in 0..b {
        let mean = [cache.out[[i, 0]], cache.out[[i, 1]]];
        let lp = log_prob(&raw_actions[i], &mean, log_std);
        let ratio = (lp - log_prob_old[i]).exp();
        let a = advantages[i];
        let clipped_ratio = ratio.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon);
        let unclipped_term = ratio * a;
        let clipped_term = clipped_ratio * a;
        kl += log_prob_old[i] - lp;
        if (ratio - 1.0).abs() > clip_epsilon {
            clipped += 1;
        }
        // ∂(−min)/∂logp: −r·A when the unclipped branch is the active one.
        let d_lp = if unclipped_term <= clipped_term {
            surrogate += unclipped_term;
            -ratio * a * inv_b
        } else {
            surrogate += clipped_term;
            0.0
        };
        if d_lp != 0.0 {
            for k in 0..ACTION_DIM {
                let z = (raw_actions[i][k] - mean[k]) * inv_std[k];
                d_out[[i, k]] += d_lp * z * inv_std[k];
                d_log_std[k] += d_lp * (z * z - 1.0);
            }
        }
    }
    let ent = entropy(log_std);
    for d in &mut d_log_std {
        *d -= entropy_coef;
    }
    let stats = PolicyStats {
        loss: -surrogate * inv_b - entropy_coef * ent,
        entropy: ent,
        clip_fraction: clipped as f64 * inv_b,
        approx_kl: kl * inv_b,
    };
    (stats, d_log_std)
}

/// `mean[(V_R − y_R)² + (1/K)·Σ_k (V_Ck − y_Ck)²]`; adds `scale·∂L/∂out` for
/// the value rows into `d_out`.
pub fn value_loss(cache: &ForwardCache, target_r: &[f64], target_c: &Array2<f64>, scale: f64, d_out: &mut Array2<f64>) -> f64 {
    let b = target_r.len();
    let k = target_c.ncols();
    let inv_b = 1.0 / b as f64;
    let inv_k = if k == 0 { 0.0 } else { 1.0 / k as f64 };
    let mut loss = 0.0;
    for i in 0..b {
        let e = cache.out[[i, VALUE_ROW]] - target_r[i];
        loss += e * e;
        d_out[[i, VALUE_ROW]] += scale * 2.0 * e * inv_b;
        let mut sq = 0.0;
        for j in 0..k {
            let e = cache.out[[i, COST_ROW + j]] - target_c[[i, j]];
            sq += e * e;
            d_out[[i, COST_ROW + j]] += scale * 2.0 * e * inv_k * inv_b;
        }
        loss += sq * inv_k;
    }
    loss * inv_b
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub policy: PolicyStats,
    pub value: f64,
    /// `policy.loss + value_coef·value`.
    pub total: f64,
}

/// Joint objective `L_π + c_V·L_V` and its full parameter gradient.
pub fn joint_loss(
    net: &ActorCritic,
    batch: &MiniBatch,
    clip_epsilon: f64,
    entropy_coef: f64,
    value_coef: f64,
) -> Result<(LossReport, Vec<f64>)> {
    let (report, mut grad, value_grad) = split_loss(net, batch, clip_epsilon, entropy_coef, value_coef)?;
    for (g, v) in grad.iter_mut().zip(&value_grad) {
        *g += v;
    }
    Ok((report, grad))
}

/// Like [`joint_loss`] but returns `∇L_π` and `∇(c_V·L_V)` separately, so
/// each can be norm-clipped on its own before they are summed.
pub fn split_loss(
    net: &ActorCritic,
    batch: &MiniBatch,
    clip_epsilon: f64,
    entropy_coef: f64,
    value_coef: f64,
) -> Result<(LossReport, Vec<f64>, Vec<f64>)> {
    let cache = net.forward(batch.features.clone())?;
    let log_std = net.log_std();
    let mut d_policy = Array2::zeros(cache.out.raw_dim());
    let (policy, d_log_std) = policy_loss(
        &cache,
        &log_std,
        &batch.raw_actions,
        &batch.log_prob_old,
        &batch.advantages,
        clip_epsilon,
        entropy_coef,
        &mut d_policy,
    );
    let mut d_value = Array2::zeros(cache.out.raw_dim());
    let value = value_loss(&cache, &batch.target_r, &batch.target_c, value_coef, &mut d_value);
    let policy_grad = net.backward(&cache, &d_policy, d_log_std);
    let value_grad = net.backward(&cache, &d_value, [0.0; ACTION_DIM]);
    Ok((
        LossReport {
            policy,
            value,
            total: policy.loss + value_coef * value,
        },
        policy_grad,
        value_grad,
    ))
}

/// Policy-only gradient of the surrogate `mean(r·A)` (no clipping, no
/// entropy) — the per-objective direction used by the conflict diagnostic.
pub fn surrogate_gradient(net: &ActorCritic, cache: &ForwardCache, raw_actions: &[[f64; ACTION_DIM]], log_prob_old: &[f64], advantages: &[f64]) -> Vec<f64> {
    let mut d_out = Array2::zeros(cache.out.raw_dim());
    let log_std = net.log_std();
    // ε = ∞ disables clipping; the sign flip turns the loss gradient into an
    // ascent direction on the surrogate.
    let (_, d_log_std) = policy_loss(cache, &log_std, raw_actions, log_prob_old, advantages, f64::INFINITY, 0.0, &mut d_out);
    d_out.mapv_inplace(|v| -v);
    net.backward(cache, &d_out, [-d_log_std[0], -d_log_std[1]])
}
