//! Run configuration.
//!
//! The on-disk form is TOML with one table per concern (`[bap]`, `[lagrange]`,
//! `[cost]`, `[reward]`, `[env]`, `[train]`). Every key is optional; missing
//! keys take the defaults below. Overrides (`key=value`) are applied to the
//! parsed table before deserialization, so a bare key such as `gamma` resolves
//! to whichever section owns it, and `train.gamma` addresses it directly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{NUM_CLASSES, NUM_CONSTRAINTS};

/// How the per-constraint gates `w_k` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// `w_k = 1` everywhere: plain PPO-Lagrangian.
    Uniform,
    /// One-hot on the constraint with the largest `λ_k · Â^{C_k}`.
    Minmax,
    /// Posterior gating from prior and likelihood log-odds.
    Bap,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Uniform, Strategy::Minmax, Strategy::Bap];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Minmax => "minmax",
            Strategy::Bap => "bap",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config {
                key: "bap.strategy".into(),
                message: format!("unknown strategy `{s}` (expected uniform, minmax or bap)"),
            })
    }
}

/// Intersection maneuver assigned to the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Maneuver {
    Left,
    Right,
    Straight,
}

impl Maneuver {
    pub const ALL: [Maneuver; 3] = [Maneuver::Left, Maneuver::Right, Maneuver::Straight];

    pub fn name(self) -> &'static str {
        match self {
            Maneuver::Left => "left",
            Maneuver::Right => "right",
            Maneuver::Straight => "straight",
        }
    }
}

impl fmt::Display for Maneuver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Maneuver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Maneuver::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown maneuver `{s}` (expected left, right or straight)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BapConfig {
    /// Prior temperature on `ln(λ_k + ε)`.
    pub alpha: f64,
    /// Likelihood sensitivity on the violation evidence.
    pub beta: f64,
    /// Static priorities per agent class (VRU, side vehicle, rear vehicle).
    pub rho: [f64; NUM_CLASSES],
    /// Scale on the hinge term of the violation evidence.
    pub eta: f64,
    pub epsilon: f64,
    pub strategy: Strategy,
    pub use_prior: bool,
    pub use_likelihood: bool,
    /// Forces every gate to this value after the strategy ran. Diagnostic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin_weight: Option<f64>,
}

impl Default for BapConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 3.0,
            rho: [0.0, -1.5, -2.0],
            eta: 0.01,
            epsilon: 1e-8,
            strategy: Strategy::Bap,
            use_prior: true,
            use_likelihood: true,
            pin_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagrangeConfig {
    pub alpha_lambda: f64,
    pub lambda_init: f64,
    /// Limits `d_k`; indices 0..3 sparse (VRU, side, rear), 3..6 dense.
    pub cost_limits: [f64; NUM_CONSTRAINTS],
}

impl Default for LagrangeConfig {
    fn default() -> Self {
        Self {
            alpha_lambda: 0.035,
            lambda_init: 0.001,
            cost_limits: [0.1, 0.1, 0.1, 100.0, 20.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub c_dense: f64,
    pub c_sparse: f64,
    /// TTC horizon in seconds beyond which collision probability is zero.
    pub tau_ttc: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            c_dense: 5.0,
            c_sparse: 50.0,
            tau_ttc: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_v: f64,
    pub w_idle: f64,
    pub w_track: f64,
    pub w_goal: f64,
    pub w_collision: f64,
    pub w_risk: f64,
    /// Target speed, m/s.
    pub v_tgt: f64,
    /// Idle threshold, m/s.
    pub v_idle: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_v: 3.0,
            w_idle: 0.5,
            w_track: 0.1,
            w_goal: 100.0,
            w_collision: 100.0,
            w_risk: 5.0,
            v_tgt: 8.0,
            v_idle: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub timeout_ticks: usize,
    /// Detection range, m.
    pub d_obs: f64,
    /// VRU activation distance, m.
    pub vru_activation: f64,
    /// VRU intent probabilities (rush, yield, hesitate).
    pub vru_intent: [f64; 3],
    pub vru_rush_speed: [f64; 2],
    pub vru_pause: [f64; 2],
    /// Rear vehicle edge gap, m.
    pub rear_gap: f64,
    /// Probability that the side vehicle cuts in during an episode.
    pub side_cut_in_prob: f64,
    /// Fixes the maneuver instead of sampling it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maneuver: Option<Maneuver>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            timeout_ticks: 800,
            d_obs: 50.0,
            vru_activation: 25.0,
            vru_intent: [0.4, 0.3, 0.3],
            vru_rush_speed: [5.0, 7.0],
            vru_pause: [0.5, 1.5],
            rear_gap: 1.0,
            side_cut_in_prob: 0.5,
            maneuver: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: usize,
    pub steps_per_epoch: usize,
    pub hidden_width: usize,
    /// Initial policy log standard deviation (both action dimensions).
    pub init_log_std: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub minibatch_size: usize,
    pub update_passes: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Fit the reward critic to running-standardized return targets.
    pub normalize_value: bool,
    /// Environments stepped round-robin during collection.
    pub num_envs: usize,
    /// Checkpoint every this many epochs (0 = final only).
    pub checkpoint_interval: usize,
    /// Full evaluation every this many epochs (0 = never during training).
    pub eval_interval: usize,
    pub eval_episodes: usize,
    /// Transitions used by the per-epoch gradient-conflict snapshot (0 disables).
    pub diag_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 4_000_000,
            steps_per_epoch: 200_000,
            hidden_width: 128,
            init_log_std: 0.0,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            minibatch_size: 4000,
            update_passes: 40,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_value: true,
            num_envs: 1,
            checkpoint_interval: 5,
            eval_interval: 0,
            eval_episodes: 100,
            diag_samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bap: BapConfig,
    pub lagrange: LagrangeConfig,
    pub cost: CostConfig,
    pub reward: RewardConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

const SECTIONS: [&str; 6] = ["bap", "lagrange", "cost", "reward", "env", "train"];

impl Config {
    /// Reads a config file; keys it leaves out keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    pub fn load_with_overrides(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
            key: span_key(text, e.span()),
            message: e.message().to_string(),
        })?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let config: Config = table_to_config(table)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `key=value` overrides to an existing config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        Self::from_toml_str(&self.to_toml(), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn content_hash(&self) -> String {
        hex::encode(self.hash_bytes())
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    /// Expands the three per-class priorities onto the six constraints.
    pub fn rho_per_constraint(&self) -> [f64; NUM_CONSTRAINTS] {
        let r = self.bap.rho;
        [r[0], r[1], r[2], r[0], r[1], r[2]]
    }

    pub fn num_epochs(&self) -> usize {
        self.train.total_steps.div_ceil(self.train.steps_per_epoch)
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                bad.push(what.to_string());
            }
        };
        let b = &self.bap;
        check(
            b.alpha.is_finite() && b.alpha >= 0.0,
            "alpha must be >= 0",
        );
        check(b.beta >= 0.0 && b.beta.is_finite(), "beta must be >= 0");
        check(b.eta >= 0.0 && b.eta.is_finite(), "eta must be >= 0");
        check(b.epsilon > 0.0, "epsilon must be > 0");
        check(b.rho.iter().all(|r| r.is_finite()), "rho must be finite");
        if let Some(w) = b.pin_weight {
            check((0.0..=1.0).contains(&w), "pin_weight must lie in [0, 1]");
        }
        let l = &self.lagrange;
        check(l.alpha_lambda > 0.0, "alpha_lambda must be > 0");
        check(l.lambda_init >= 0.0, "lambda_init must be >= 0");
        check(l.cost_limits.iter().all(|d| *d >= 0.0), "cost_limits must be >= 0");
        let c = &self.cost;
        check(c.c_dense >= 0.0 && c.c_sparse >= 0.0, "cost weights must be >= 0");
        check(c.tau_ttc > 0.0, "tau_ttc must be > 0");
        let r = &self.reward;
        check(r.v_tgt > 0.0, "v_tgt must be > 0");
        let e = &self.env;
        check(e.timeout_ticks > 0, "timeout_ticks must be > 0");
        check(e.d_obs > 0.0, "d_obs must be > 0");
        let intent_sum: f64 = e.vru_intent.iter().sum();
        check(
            e.vru_intent.iter().all(|p| *p >= 0.0) && (intent_sum - 1.0).abs() < 1e-9,
            "vru_intent must be a probability vector",
        );
        check(e.vru_rush_speed[0] <= e.vru_rush_speed[1], "vru_rush_speed must be an interval");
        check(e.vru_pause[0] <= e.vru_pause[1], "vru_pause must be an interval");
        check((0.0..=1.0).contains(&e.side_cut_in_prob), "side_cut_in_prob must lie in [0, 1]");
        let t = &self.train;
        check(t.gamma > 0.0 && t.gamma < 1.0, "gamma must lie in (0, 1)");
        check((0.0..=1.0).contains(&t.gae_lambda), "gae_lambda must lie in [0, 1]");
        check(t.clip_epsilon > 0.0 && t.clip_epsilon < 1.0, "clip_epsilon must lie in (0, 1)");
        check(t.total_steps > 0, "total_steps must be > 0");
        check(t.steps_per_epoch > 0, "steps_per_epoch must be > 0");
        check(t.hidden_width > 0, "hidden_width must be > 0");
        check(t.minibatch_size > 0, "minibatch_size must be > 0");
        check(t.num_envs > 0, "num_envs must be > 0");
        check(t.policy_lr > 0.0 && t.critic_lr > 0.0, "learning rates must be > 0");
        check(t.max_grad_norm > 0.0, "max_grad_norm must be > 0");
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad.join("; ")))
        }
    }
}

fn table_to_config(table: toml::Table) -> Result<Config> {
    Config::deserialize(toml::Value::Table(table)).map_err(|e| {
        let message = e.message().to_string();
        let key = message
            .split('`')
            .nth(1)
            .unwrap_or("<root>")
            .to_string();
        Error::Config { key, message }
    })
}

fn span_key(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    span.and_then(|r| text.get(..r.start))
        .map(|before| format!("line {}", before.lines().count().max(1)))
        .unwrap_or_else(|| "<file>".into())
}

/// Applies a single `key=value` override to a raw config table.
fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov.split_once('=').ok_or_else(|| Error::Config {
        key: ov.to_string(),
        message: "override must have the form key=value".into(),
    })?;
    let key = key.trim();
    let raw = raw.trim();
    let (section, leaf) = match key.split_once('.') {
        Some((s, l)) => (s.to_string(), l.to_string()),
        None => (resolve_section(key)?, key.to_string()),
    };
    if !SECTIONS.contains(&section.as_str()) {
        return Err(Error::Config {
            key: key.into(),
            message: format!("unknown section `{section}`"),
        });
    }
    let value = parse_value(raw);
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(leaf, value);
            Ok(())
        }
        _ => Err(Error::Config {
            key: section,
            message: "expected a table".into(),
        }),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Reuse the TOML grammar for numbers, bools and arrays; anything else is a string.
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn resolve_section(leaf: &str) -> Result<String> {
    let defaults = toml::Value::try_from(Config::default()).expect("defaults serialize");
    let mut owners: Vec<&str> = SECTIONS
        .iter()
        .copied()
        .filter(|s| {
            defaults
                .get(s)
                .and_then(|t| t.as_table())
                .is_some_and(|t| t.contains_key(leaf))
        })
        .collect();
    // Optional keys are absent from the serialized defaults.
    match leaf {
        "pin_weight" => owners.push("bap"),
        "maneuver" => owners.push("env"),
        _ => {}
    }
    match owners.as_slice() {
        [one] => Ok(one.to_string()),
        [] => Err(Error::Config {
            key: leaf.into(),
            message: "unknown configuration key".into(),
        }),
        _ => Err(Error::Config {
            key: leaf.into(),
            message: format!("ambiguous key, qualify it with one of {owners:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let c = Config::from_toml_str("", &[]).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.bap.alpha, 1.0);
        assert_eq!(c.bap.beta, 3.0);
        assert_eq!(c.bap.rho, [0.0, -1.5, -2.0]);
        assert_eq!(c.bap.eta, 0.01);
        assert_eq!(c.lagrange.alpha_lambda, 0.035);
        assert_eq!(c.lagrange.lambda_init, 0.001);
        assert_eq!(c.cost.c_dense, 5.0);
        assert_eq!(c.cost.c_sparse, 50.0);
        assert_eq!(c.lagrange.cost_limits, [0.1, 0.1, 0.1, 100.0, 20.0, 20.0]);
        assert_eq!(c.cost.tau_ttc, 1.5);
        assert_eq!(
            [c.reward.w_v, c.reward.w_idle, c.reward.w_track],
            [3.0, 0.5, 0.1]
        );
        assert_eq!(
            [c.reward.w_goal, c.reward.w_collision, c.reward.w_risk],
            [100.0, 100.0, 5.0]
        );
        assert_eq!(c.train.total_steps, 4_000_000);
        assert_eq!(c.train.steps_per_epoch, 200_000);
        assert_eq!(c.train.hidden_width, 128);
    }

    #[test]
    fn out_of_range_gamma_is_rejected() {
        let err = Config::from_toml_str("[train]\ngamma = 1.5\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("gamma")), "{err}");
        let err = Config::from_toml_str("", &["gamma=1.5".into()]).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn strategy_override_keeps_other_defaults() {
        let c = Config::from_toml_str("", &["strategy=uniform".into()]).unwrap();
        let mut expected = Config::default();
        expected.bap.strategy = Strategy::Uniform;
        assert_eq!(c, expected);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Config::from_toml_str("[bap]\nalpah = 2.0\n", &[]).unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "alpah"),
            other => panic!("unexpected {other}"),
        }
        let err = Config::from_toml_str("", &["nonsense=1".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "nonsense"));
    }

    #[test]
    fn bad_type_is_a_config_error() {
        let err = Config::from_toml_str("[train]\ngamma = \"high\"\n", &[]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }), "{err}");
    }

    #[test]
    fn dotted_and_array_overrides() {
        let c = Config::from_toml_str(
            "",
            &[
                "train.total_steps=4000".into(),
                "rho=[-2.0, -2.0, -2.0]".into(),
                "maneuver=left".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.total_steps, 4000);
        assert_eq!(c.bap.rho, [-2.0; 3]);
        assert_eq!(c.env.maneuver, Some(Maneuver::Left));
    }

    #[test]
    fn save_load_round_trip() {
        let mut c = Config::default();
        c.bap.pin_weight = Some(1.0);
        c.train.seed = 17;
        c.lagrange.alpha_lambda = 0.1 + 0.2;
        let text = c.to_toml();
        let back = Config::from_toml_str(&text, &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn per_constraint_rho_shares_class_priority() {
        let c = Config::default();
        assert_eq!(c.rho_per_constraint(), [0.0, -1.5, -2.0, 0.0, -1.5, -2.0]);
    }
}
