//! Generalized advantage estimation.

/// GAE over a flat sequence whose episodes are delimited by `episode_end`.
///
/// `next_values[t]` is the bootstrap value of the state after step `t`: the
/// critic's estimate for ordinary steps and truncations, 0 for true
/// terminals. The λ-recursion is cut wherever `episode_end[t]` is set.
pub fn compute_gae_bootstrapped(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    episode_end: &[bool],
    gamma: f64,
    gae_lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && next_values.len() == n && episode_end.len() == n,
        "GAE inputs must be aligned"
    );
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        if episode_end[t] {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_values[t] - values[t];
        running = delta + gamma * gae_lambda * running;
        adv[t] = running;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Textbook form: `values` has one extra trailing bootstrap entry and
/// `dones[t]` marks a terminal after step `t` (no bootstrap across it).
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, gae_lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1, "values need a trailing bootstrap entry");
    let next: Vec<f64> = (0..n).map(|t| if dones[t] { 0.0 } else { values[t + 1] }).collect();
    compute_gae_bootstrapped(rewards, &values[..n], &next, dones, gamma, gae_lambda)
}

/// Zero-mean, unit-std copy (std floored at 1e-8).
pub fn normalized(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter().map(|x| (x - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_is_one_step_residual() {
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4, 9.0];
        let (a, y) = compute_gae(&r, &v, &[false; 3], 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(a[t], r[t] - v[t]);
            assert_eq!(y[t], a[t] + v[t]);
        }
    }

    #[test]
    fn zeros_in_zeros_out() {
        let (a, y) = compute_gae(&[0.0; 4], &[0.0; 5], &[false, true, false, false], 0.99, 0.95);
        assert!(a.iter().chain(&y).all(|x| *x == 0.0));
    }

    #[test]
    fn terminal_blocks_bootstrap() {
        let (a, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0, 100.0], &[false, true], 0.9, 1.0);
        assert!((a[1] - 1.0).abs() < 1e-15);
        assert!((a[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn truncation_bootstraps_but_resets_trace() {
        // Step 1 ends a truncated episode: bootstrap 10, but step 2's
        // advantage must not leak into step 1.
        let (a, _) = compute_gae_bootstrapped(
            &[0.0, 0.0, 5.0],
            &[0.0, 0.0, 0.0],
            &[0.0, 10.0, 0.0],
            &[false, true, true],
            0.5,
            1.0,
        );
        assert_eq!(a[1], 5.0);
        assert_eq!(a[0], 2.5);
        assert_eq!(a[2], 5.0);
    }

    #[test]
    fn normalization() {
        let z = normalized(&[1.0, 2.0, 3.0, 4.0]);
        let mean: f64 = z.iter().sum::<f64>() / 4.0;
        let var: f64 = z.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        assert_eq!(normalized(&[2.0, 2.0]), vec![0.0, 0.0]);
    }
}
