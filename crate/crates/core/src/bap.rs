//! Constraint gating.
//!
//! Each constraint's gradient contribution is scaled by a gate `w ∈ (0, 1)`:
//! the posterior probability that the constraint is currently critical. Prior
//! log-odds come from the multiplier history and static class priority,
//! likelihood log-odds from the instantaneous violation evidence. The uniform
//! (`w ≡ 1`) and min-max (one-hot on the worst constraint) strategies are
//! provided behind the same entry point, [`strategy_weights`].
//!
//! Functions are generic over the constraint count so the kernels can be
//! exercised at any `K`.

use serde::{Deserialize, Serialize};

use crate::config::{BapConfig, Strategy};
use crate::types::LagrangeState;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `α·ln(λ_k + ε) + ρ_k`, or zeros when the prior is ablated.
pub fn prior_log_odds<const K: usize>(
    lambda: &[f64; K],
    rho: &[f64; K],
    alpha: f64,
    epsilon: f64,
    use_prior: bool,
) -> [f64; K] {
    if !use_prior {
        return [0.0; K];
    }
    std::array::from_fn(|k| alpha * (lambda[k] + epsilon).ln() + rho[k])
}

/// `η·max(0, C − d) + Â^C`.
pub fn violation_evidence(cost_step: f64, limit: f64, cost_advantage: f64, eta: f64) -> f64 {
    eta * (cost_step - limit).max(0.0) + cost_advantage
}

/// `w[t][k] = σ(β·Δ[t][k] + Φ_prior[k])`.
pub fn posterior_weights<const K: usize>(phi_prior: &[f64; K], delta: &[[f64; K]], beta: f64) -> Vec<[f64; K]> {
    delta
        .iter()
        .map(|d| std::array::from_fn(|k| sigmoid(beta * d[k] + phi_prior[k])))
        .collect()
}

/// `(Â^R − Σ_k w_k λ_k Â^{C_k}) / (1 + Σ_j λ_j)` per step.
pub fn bap_advantage<const K: usize>(
    adv_r: &[f64],
    adv_c: &[[f64; K]],
    w: &[[f64; K]],
    lambda: &[f64; K],
) -> Vec<f64> {
    assert_eq!(adv_r.len(), adv_c.len(), "reward and cost advantages must align");
    assert_eq!(adv_r.len(), w.len(), "advantages and weights must align");
    let norm = 1.0 + lambda.iter().sum::<f64>();
    adv_r
        .iter()
        .zip(adv_c)
        .zip(w)
        .map(|((r, c), w)| {
            let penalty: f64 = (0..K).map(|k| w[k] * lambda[k] * c[k]).sum();
            (r - penalty) / norm
        })
        .collect()
}

/// Gate decomposition for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityPosterior<const K: usize> {
    pub phi_prior: [f64; K],
    pub phi_obs: Vec<[f64; K]>,
    pub delta: Vec<[f64; K]>,
    pub w: Vec<[f64; K]>,
}

impl<const K: usize> PriorityPosterior<K> {
    /// Computes evidence, log-odds and gates from per-step costs and raw cost
    /// advantages.
    pub fn infer(config: &BapConfig, lagrange: &LagrangeParts<'_, K>, costs: &[[f64; K]], adv_c: &[[f64; K]]) -> Self {
        let phi_prior = prior_log_odds(lagrange.lambda, lagrange.rho, config.alpha, config.epsilon, config.use_prior);
        let beta = if config.use_likelihood { config.beta } else { 0.0 };
        let delta: Vec<[f64; K]> = costs
            .iter()
            .zip(adv_c)
            .map(|(c, a)| std::array::from_fn(|k| violation_evidence(c[k], lagrange.limits[k], a[k], config.eta)))
            .collect();
        let phi_obs: Vec<[f64; K]> = delta.iter().map(|d| std::array::from_fn(|k| beta * d[k])).collect();
        let w = phi_obs
            .iter()
            .map(|o| std::array::from_fn(|k| sigmoid(o[k] + phi_prior[k])))
            .collect();
        Self {
            phi_prior,
            phi_obs,
            delta,
            w,
        }
    }
}

/// Borrowed multiplier, priority and limit vectors.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeParts<'a, const K: usize> {
    pub lambda: &'a [f64; K],
    pub rho: &'a [f64; K],
    pub limits: &'a [f64; K],
}

impl<'a> From<&'a LagrangeState> for LagrangeParts<'a, { crate::types::NUM_CONSTRAINTS }> {
    fn from(l: &'a LagrangeState) -> Self {
        Self {
            lambda: &l.lambda,
            rho: &l.rho,
            limits: &l.limits,
        }
    }
}

/// One-hot on `argmax_k λ_k·Â^{C_k}` per step; ties go to the lowest index.
pub fn minmax_weights<const K: usize>(lambda: &[f64; K], adv_c: &[[f64; K]]) -> Vec<[f64; K]> {
    adv_c
        .iter()
        .map(|a| {
            let mut best = 0;
            for k in 1..K {
                if lambda[k] * a[k] > lambda[best] * a[best] {
                    best = k;
                }
            }
            std::array::from_fn(|k| if k == best { 1.0 } else { 0.0 })
        })
        .collect()
}

/// Gates for the configured strategy. The posterior decomposition is returned
/// for the `bap` strategy only. `pin_weight`, when set, overrides every gate.
pub fn strategy_weights<const K: usize>(
    config: &BapConfig,
    lagrange: &LagrangeParts<'_, K>,
    costs: &[[f64; K]],
    adv_c: &[[f64; K]],
) -> (Vec<[f64; K]>, Option<PriorityPosterior<K>>) {
    let (mut w, posterior) = match config.strategy {
        Strategy::Uniform => (vec![[1.0; K]; adv_c.len()], None),
        Strategy::Minmax => (minmax_weights(lagrange.lambda, adv_c), None),
        Strategy::Bap => {
            let p = PriorityPosterior::infer(config, lagrange, costs, adv_c);
            (p.w.clone(), Some(p))
        }
    };
    if let Some(pin) = config.pin_weight {
        w.fill([pin; K]);
    }
    (w, posterior)
}

/// Per-epoch gate statistics for the diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub mean_w: Vec<f64>,
    pub max_w: Vec<f64>,
    pub mean_delta: Vec<f64>,
    pub phi_prior: Vec<f64>,
}

impl GateSummary {
    pub fn new<const K: usize>(w: &[[f64; K]], posterior: Option<&PriorityPosterior<K>>) -> Self {
        let n = w.len().max(1) as f64;
        let mean_w = (0..K).map(|k| w.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let max_w = (0..K)
            .map(|k| w.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max))
            .map(|m| if m.is_finite() { m } else { 0.0 })
            .collect();
        let (mean_delta, phi_prior) = match posterior {
            Some(p) => (
                (0..K).map(|k| p.delta.iter().map(|r| r[k]).sum::<f64>() / n).collect(),
                p.phi_prior.to_vec(),
            ),
            None => (vec![0.0; K], vec![0.0; K]),
        };
        Self {
            mean_w,
            max_w,
            mean_delta,
            phi_prior,
        }
    }
}
