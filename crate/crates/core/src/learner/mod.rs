//! The training loop: collect, infer gates, optimize, update multipliers.

pub mod gae;
pub mod ppo;
pub mod rollout;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bap::{bap_advantage, strategy_weights, GateSummary, LagrangeParts};
use crate::config::{Config, Maneuver, Strategy};
use crate::env::{IntersectionEnv, TerminalReason};
use crate::error::{Error, Result};
use crate::evalkit::{episode_record, gradient_conflict, EpisodeRecord, GradientSnapshot};
use crate::nn::adam::{clip_grad_norm, Adam};
use crate::nn::checkpoint::{learning_rates, Checkpoint};
use crate::nn::gaussian::mean_action;
use crate::nn::value_norm::ValueNorm;
use crate::nn::{encode_state, ActorCritic, NetShape, VALUE_ROW};
use crate::rng::{seeded_rng, streams, RandomStream};
use crate::types::{LagrangeState, NUM_CONSTRAINTS, STATE_DIM};

use gae::{compute_gae_bootstrapped, normalized};
use ppo::{split_loss, MiniBatch};
use rollout::{Collector, RolloutBatch};

/// `λ_k ← max(0, λ_k + α_λ(J_k − d_k))`.
pub fn dual_ascent(lagrange: &LagrangeState, episodic_costs: &[f64; NUM_CONSTRAINTS], alpha_lambda: f64) -> LagrangeState {
    let mut next = lagrange.clone();
    for k in 0..NUM_CONSTRAINTS {
        next.lambda[k] = (lagrange.lambda[k] + alpha_lambda * (episodic_costs[k] - lagrange.limits[k])).max(0.0);
    }
    next
}

/// Phase-2 products for one batch.
#[derive(Debug, Clone)]
pub struct Advantages {
    /// Normalized reward advantages.
    pub adv_r: Vec<f64>,
    /// Raw cost advantages.
    pub adv_c: Vec<[f64; NUM_CONSTRAINTS]>,
    pub target_r: Vec<f64>,
    pub target_c: Vec<[f64; NUM_CONSTRAINTS]>,
    pub weights: Vec<[f64; NUM_CONSTRAINTS]>,
    pub adv_bap: Vec<f64>,
    pub gates: GateSummary,
}

pub fn compute_advantages(batch: &RolloutBatch, lagrange: &LagrangeState, config: &Config) -> Advantages {
    let (gamma, lam) = (config.train.gamma, config.train.gae_lambda);
    let (adv_r_raw, target_r) =
        compute_gae_bootstrapped(&batch.rewards, &batch.v_r, &batch.next_v_r, &batch.episode_end, gamma, lam);
    let n = batch.len();
    let mut adv_c = vec![[0.0; NUM_CONSTRAINTS]; n];
    let mut target_c = vec![[0.0; NUM_CONSTRAINTS]; n];
    for k in 0..NUM_CONSTRAINTS {
        let col = |v: &[[f64; NUM_CONSTRAINTS]]| v.iter().map(|x| x[k]).collect::<Vec<f64>>();
        let (a, y) = compute_gae_bootstrapped(
            &col(&batch.costs),
            &col(&batch.v_c),
            &col(&batch.next_v_c),
            &batch.episode_end,
            gamma,
            lam,
        );
        for t in 0..n {
            adv_c[t][k] = a[t];
            target_c[t][k] = y[t];
        }
    }
    let adv_r = normalized(&adv_r_raw);
    let parts = LagrangeParts::from(lagrange);
    let (weights, posterior) = strategy_weights(&config.bap, &parts, &batch.costs, &adv_c);
    let adv_bap = bap_advantage(&adv_r, &adv_c, &weights, &lagrange.lambda);
    let gates = GateSummary::new(&weights, posterior.as_ref());
    Advantages {
        adv_r,
        adv_c,
        target_r,
        target_c,
        weights,
        adv_bap,
        gates,
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub env_steps: u64,
    pub strategy: Strategy,
    /// Episodes completed inside this batch.
    pub episodes: usize,
    pub mean_episode_reward: Option<f64>,
    /// Mean undiscounted episodic cost per constraint (`J_k`).
    pub mean_episode_cost: Option<[f64; NUM_CONSTRAINTS]>,
    pub collision_rate: Option<f64>,
    pub success_rate: Option<f64>,
    pub lambda_before: [f64; NUM_CONSTRAINTS],
    pub lambda_after: [f64; NUM_CONSTRAINTS],
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub gates: GateSummary,
}

#[derive(Debug, Clone)]
pub struct EpochOutput {
    pub report: EpochReport,
    pub conflict: Option<GradientSnapshot>,
}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: Config,
    pub net: ActorCritic,
    pub optimizer: Adam,
    pub lagrange: LagrangeState,
    pub epoch: usize,
    pub env_steps: u64,
    pub value_norm: ValueNorm,
    collector: Collector,
    shuffle_rng: RandomStream,
}

impl Trainer {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let seed = config.train.seed;
        let shape = NetShape::new(STATE_DIM, config.train.hidden_width, NUM_CONSTRAINTS);
        let mut net = ActorCritic::init(shape, &mut seeded_rng(seed, streams::INIT));
        net.set_log_std([config.train.init_log_std; 2]);
        net.project_log_std();
        let optimizer = Adam::new(learning_rates(&net, &config));
        Ok(Self {
            lagrange: LagrangeState::from_config(&config),
            collector: Collector::new(&config),
            shuffle_rng: seeded_rng(seed, streams::SHUFFLE),
            config,
            net,
            optimizer,
            epoch: 0,
            env_steps: 0,
            value_norm: ValueNorm::default(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.epoch as u64,
            env_steps: self.env_steps,
            config: self.config.clone(),
            net: self.net.clone(),
            optimizer: self.optimizer.clone(),
            lagrange: self.lagrange.clone(),
            value_norm: self.value_norm,
        }
    }

    /// Collects a batch, computes gates and advantages, runs the PPO passes
    /// and updates the multipliers.
    pub fn train_epoch(&mut self) -> Result<EpochOutput> {
        let cfg = self.config.clone();
        let t = &cfg.train;
        let epoch = self.epoch;

        let batch = self.collector.collect(&self.net, &self.value_norm, t.steps_per_epoch)?;
        let mut adv = compute_advantages(&batch, &self.lagrange, &cfg);

        let conflict = if t.diag_samples > 0 {
            let n = batch.len();
            let m = t.diag_samples.min(n);
            let rows: Vec<usize> = (0..m).map(|i| i * n / m).collect();
            Some(gradient_conflict(
                epoch,
                &self.net,
                batch.feature_matrix(&rows),
                &rows.iter().map(|&i| batch.raw_actions[i]).collect::<Vec<_>>(),
                &rows.iter().map(|&i| batch.log_prob_old[i]).collect::<Vec<_>>(),
                &rows.iter().map(|&i| adv.adv_r[i]).collect::<Vec<_>>(),
                &rows.iter().map(|&i| adv.adv_c[i]).collect::<Vec<_>>(),
            )?)
        } else {
            None
        };

        if t.normalize_value {
            self.value_norm.update_preserving(&adv.target_r, &mut self.net, VALUE_ROW);
            for y in &mut adv.target_r {
                *y = self.value_norm.normalize(*y);
            }
        }
        let stats = self.optimize(&batch, &adv, epoch)?;

        let lambda_before = self.lagrange.lambda;
        let episodes = &batch.episodes;
        let mean = |f: &dyn Fn(&rollout::CompletedEpisode) -> f64| {
            (!episodes.is_empty()).then(|| episodes.iter().map(f).sum::<f64>() / episodes.len() as f64)
        };
        let j: Option<[f64; NUM_CONSTRAINTS]> = (!episodes.is_empty()).then(|| {
            std::array::from_fn(|k| episodes.iter().map(|e| e.costs[k]).sum::<f64>() / episodes.len() as f64)
        });
        if let Some(j) = &j {
            self.lagrange = dual_ascent(&self.lagrange, j, cfg.lagrange.alpha_lambda);
        }

        self.env_steps += batch.len() as u64;
        self.epoch += 1;
        let report = EpochReport {
            epoch,
            env_steps: self.env_steps,
            strategy: cfg.bap.strategy,
            episodes: episodes.len(),
            mean_episode_reward: mean(&|e| e.reward),
            mean_episode_cost: j,
            collision_rate: mean(&|e| f64::from(u8::from(matches!(e.terminal, TerminalReason::Collision(_))))),
            success_rate: mean(&|e| f64::from(u8::from(e.terminal == TerminalReason::Goal))),
            lambda_before,
            lambda_after: self.lagrange.lambda,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            approx_kl: stats.approx_kl,
            clip_fraction: stats.clip_fraction,
            grad_norm: stats.grad_norm,
            gates: adv.gates,
        };
        Ok(EpochOutput { report, conflict })
    }

    fn optimize(&mut self, batch: &RolloutBatch, adv: &Advantages, epoch: usize) -> Result<OptStats> {
        let t = &self.config.train;
        let n = batch.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut acc = OptStats::default();
        let mut count = 0usize;
        let mut minibatch = 0usize;
        for _ in 0..t.update_passes {
            self.shuffle_rng.shuffle(&mut order);
            for rows in order.chunks(t.minibatch_size.max(1)) {
                let mb = MiniBatch {
                    features: batch.feature_matrix(rows),
                    raw_actions: rows.iter().map(|&i| batch.raw_actions[i]).collect(),
                    log_prob_old: rows.iter().map(|&i| batch.log_prob_old[i]).collect(),
                    advantages: rows.iter().map(|&i| adv.adv_bap[i]).collect(),
                    target_r: rows.iter().map(|&i| adv.target_r[i]).collect(),
                    target_c: Array2::from_shape_fn((rows.len(), NUM_CONSTRAINTS), |(r, k)| adv.target_c[rows[r]][k]),
                };
                let (report, mut grad, mut value_grad) =
                    split_loss(&self.net, &mb, t.clip_epsilon, t.entropy_coef, t.value_coef)?;
                if !report.total.is_finite() || grad.iter().chain(&value_grad).any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, minibatch });
                }
                // Value targets live on a much larger scale than the policy
                // surrogate; clipping the sum would starve the policy.
                let norm = clip_grad_norm(&mut grad, t.max_grad_norm);
                clip_grad_norm(&mut value_grad, t.max_grad_norm);
                for (g, v) in grad.iter_mut().zip(&value_grad) {
                    *g += v;
                }
                self.optimizer.apply(self.net.params_mut(), &grad)?;
                self.net.project_log_std();
                acc.policy_loss += report.policy.loss;
                acc.value_loss += report.value;
                acc.entropy += report.policy.entropy;
                acc.approx_kl += report.policy.approx_kl;
                acc.clip_fraction += report.policy.clip_fraction;
                acc.grad_norm += norm;
                count += 1;
                minibatch += 1;
            }
        }
        if count > 0 {
            let c = count as f64;
            acc.policy_loss /= c;
            acc.value_loss /= c;
            acc.entropy /= c;
            acc.approx_kl /= c;
            acc.clip_fraction /= c;
            acc.grad_norm /= c;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct OptStats {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
    grad_norm: f64,
}

/// Runs `episodes` evaluation episodes with the clipped policy mean. The
/// environment stream depends only on `seed`, so repeated calls agree.
pub fn evaluate_policy(
    net: &ActorCritic,
    config: &Config,
    episodes: usize,
    seed: u64,
    maneuver: Option<Maneuver>,
) -> Result<Vec<EpisodeRecord>> {
    let mut env = IntersectionEnv::new(config, seeded_rng(seed, streams::EVAL));
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut obs = env.reset(maneuver);
        let (mut speeds, mut dense, mut rewards, mut costs, mut accel) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let terminal = loop {
            let head = net.forward_one(&encode_state(&obs))?;
            let out = env.step(mean_action(&head.mean))?;
            speeds.push(env.ego().speed);
            dense.push(out.cost.dense_total());
            rewards.push(out.reward);
            costs.push(out.cost.to_array());
            accel.push(out.ego_accel);
            if let Some(reason) = out.terminal {
                break reason;
            }
            obs = out.state;
        };
        records.push(episode_record(
            episode,
            env.maneuver(),
            terminal,
            &speeds,
            &dense,
            &rewards,
            &costs,
            accel,
        ));
    }
    Ok(records)
}
