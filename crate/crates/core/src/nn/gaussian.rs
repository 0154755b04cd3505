//! Diagonal Gaussian policy helpers.

use crate::rng::RandomStream;
use crate::types::{ActionVector, ACTION_DIM};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log N(a; μ, diag(σ²))` with `σ = exp(log_std)`.
pub fn log_prob(action: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM]) -> f64 {
    (0..ACTION_DIM)
        .map(|k| {
            let z = (action[k] - mean[k]) * (-log_std[k]).exp();
            -0.5 * z * z - log_std[k] - 0.5 * LN_2PI
        })
        .sum()
}

/// Differential entropy of the diagonal Gaussian.
pub fn entropy(log_std: &[f64; ACTION_DIM]) -> f64 {
    log_std.iter().map(|l| l + 0.5 * (1.0 + LN_2PI)).sum()
}

/// A sampled action: `raw` is the unclipped draw whose log-probability is
/// stored; `action` is what the simulator receives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub raw: [f64; ACTION_DIM],
    pub action: ActionVector,
    pub log_prob: f64,
}

pub fn sample(mean: &[f64; ACTION_DIM], log_std: &[f64; ACTION_DIM], rng: &mut RandomStream) -> Sample {
    let mut raw = [0.0; ACTION_DIM];
    for k in 0..ACTION_DIM {
        raw[k] = mean[k] + log_std[k].exp() * rng.normal();
    }
    Sample {
        raw,
        action: ActionVector::new(raw[0], raw[1]).clipped(),
        log_prob: log_prob(&raw, mean, log_std),
    }
}

/// Deterministic evaluation action: the clipped mean.
pub fn mean_action(mean: &[f64; ACTION_DIM]) -> ActionVector {
    ActionVector::new(mean[0], mean[1]).clipped()
}
