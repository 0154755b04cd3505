//! On-policy rollout collection.

use ndarray::Array2;

use crate::config::{Config, Maneuver};
use crate::env::{IntersectionEnv, TerminalReason};
use crate::error::Result;
use crate::nn::gaussian::sample;
use crate::nn::value_norm::ValueNorm;
use crate::nn::{encode_state, ActorCritic, HeadOutputs};
use crate::rng::{seeded_rng, streams, RandomStream};
use crate::types::{ActionVector, StateVector, ACTION_DIM, NUM_CONSTRAINTS, STATE_DIM};

/// Undiscounted totals of an episode that finished inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedEpisode {
    pub maneuver: Maneuver,
    pub terminal: TerminalReason,
    pub length: usize,
    pub reward: f64,
    pub costs: [f64; NUM_CONSTRAINTS],
}

/// Transitions from one collection phase. Each environment's steps are
/// stored contiguously, environments in index order.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    /// Encoded states, row-major `len × STATE_DIM`.
    pub features: Vec<f64>,
    pub raw_actions: Vec<[f64; ACTION_DIM]>,
    pub actions: Vec<ActionVector>,
    pub log_prob_old: Vec<f64>,
    pub rewards: Vec<f64>,
    pub costs: Vec<[f64; NUM_CONSTRAINTS]>,
    pub v_r: Vec<f64>,
    pub v_c: Vec<[f64; NUM_CONSTRAINTS]>,
    /// Bootstrap values for the following state (0 after a true terminal).
    pub next_v_r: Vec<f64>,
    pub next_v_c: Vec<[f64; NUM_CONSTRAINTS]>,
    /// Set on the last step of an episode or of an environment's segment.
    pub episode_end: Vec<bool>,
    pub terminal: Vec<Option<TerminalReason>>,
    pub episodes: Vec<CompletedEpisode>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn feature_matrix(&self, rows: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((rows.len(), STATE_DIM));
        for (r, &i) in rows.iter().enumerate() {
            for (d, s) in m.row_mut(r).iter_mut().zip(&self.features[i * STATE_DIM..(i + 1) * STATE_DIM]) {
                *d = *s;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Default)]
struct Running {
    length: usize,
    reward: f64,
    costs: [f64; NUM_CONSTRAINTS],
}

#[derive(Debug, Clone)]
struct Worker {
    env: IntersectionEnv,
    obs: StateVector,
    head: Option<HeadOutputs>,
    rng: RandomStream,
    running: Running,
}

/// Environments persist across epochs, so episodes may span batches.
#[derive(Debug, Clone)]
pub struct Collector {
    workers: Vec<Worker>,
}

fn cost_array(v: &[f64]) -> [f64; NUM_CONSTRAINTS] {
    std::array::from_fn(|k| v[k])
}

impl Collector {
    pub fn new(config: &Config) -> Self {
        let seed = config.train.seed;
        let workers = (0..config.train.num_envs as u64)
            .map(|i| {
                let mut env = IntersectionEnv::new(config, seeded_rng(seed, streams::ENV_BASE + i));
                let obs = env.reset(None);
                Worker {
                    env,
                    obs,
                    head: None,
                    rng: seeded_rng(seed, streams::POLICY_BASE + i),
                    running: Running::default(),
                }
            })
            .collect();
        Self { workers }
    }

    pub fn num_envs(&self) -> usize {
        self.workers.len()
    }

    /// Collects `steps` transitions under the frozen `net`, split as evenly
    /// as possible across environments (earlier environments take the
    /// remainder). Reward values are recorded de-standardized by `norm`.
    pub fn collect(&mut self, net: &ActorCritic, norm: &ValueNorm, steps: usize) -> Result<RolloutBatch> {
        let mut batch = RolloutBatch::default();
        let e = self.workers.len();
        for (i, w) in self.workers.iter_mut().enumerate() {
            let share = steps / e + usize::from(i < steps % e);
            w.run(net, norm, share, &mut batch)?;
        }
        Ok(batch)
    }
}

impl Worker {
    fn run(&mut self, net: &ActorCritic, norm: &ValueNorm, steps: usize, batch: &mut RolloutBatch) -> Result<()> {
        for t in 0..steps {
            let features = encode_state(&self.obs);
            let head = match self.head.take() {
                Some(h) => h,
                None => net.forward_one(&features)?,
            };
            let s = sample(&head.mean, &head.log_std, &mut self.rng);
            let out = self.env.step(s.action)?;
            let cost = out.cost.to_array();

            batch.features.extend_from_slice(&features);
            batch.raw_actions.push(s.raw);
            batch.actions.push(s.action);
            batch.log_prob_old.push(s.log_prob);
            batch.rewards.push(out.reward);
            batch.costs.push(cost);
            batch.v_r.push(norm.denormalize(head.v_r));
            batch.v_c.push(cost_array(&head.v_c));
            batch.terminal.push(out.terminal);

            self.running.length += 1;
            self.running.reward += out.reward;
            for k in 0..NUM_CONSTRAINTS {
                self.running.costs[k] += cost[k];
            }

            let last = t + 1 == steps;
            match out.terminal {
                Some(reason) => {
                    let (nv_r, nv_c) = if reason == TerminalReason::Timeout {
                        let h = net.forward_one(&encode_state(&out.state))?;
                        (norm.denormalize(h.v_r), cost_array(&h.v_c))
                    } else {
                        (0.0, [0.0; NUM_CONSTRAINTS])
                    };
                    batch.next_v_r.push(nv_r);
                    batch.next_v_c.push(nv_c);
                    batch.episode_end.push(true);
                    let r = std::mem::take(&mut self.running);
                    batch.episodes.push(CompletedEpisode {
                        maneuver: self.env.maneuver(),
                        terminal: reason,
                        length: r.length,
                        reward: r.reward,
                        costs: r.costs,
                    });
                    self.obs = self.env.reset(None);
                }
                None => {
                    let h = net.forward_one(&encode_state(&out.state))?;
                    batch.next_v_r.push(norm.denormalize(h.v_r));
                    batch.next_v_c.push(cost_array(&h.v_c));
                    batch.episode_end.push(last);
                    self.obs = out.state;
                    // The next step reuses this evaluation; across epochs the
                    // network changes, so it must not outlive the batch.
                    self.head = (!last).then_some(h);
                }
            }
        }
        Ok(())
    }
}
