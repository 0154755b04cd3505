use serde::{Deserialize, Serialize};

use super::risk::RiskTerms;
use crate::config::RewardConfig;

/// Logged decomposition of the per-step reward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardComponents {
    pub efficiency: f64,
    pub track: f64,
    pub terminal: f64,
    pub risk: f64,
}

impl RewardComponents {
    pub fn total(&self) -> f64 {
        self.efficiency + self.track + self.terminal + self.risk
    }
}

/// What the reward needs to know about the tick that just happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardContext<'a> {
    pub speed: f64,
    pub lateral_deviation: f64,
    pub risks: &'a [RiskTerms],
    pub goal: bool,
    pub collision: bool,
}

pub fn compute_reward(ctx: &RewardContext<'_>, w: &RewardConfig) -> (f64, RewardComponents) {
    let speed_match = (1.0 - (ctx.speed - w.v_tgt).abs() / w.v_tgt).max(0.0);
    let idle = if ctx.speed < w.v_idle { w.w_idle } else { 0.0 };
    let efficiency = w.w_v * speed_match - idle;
    let track = -w.w_track * ctx.lateral_deviation * ctx.lateral_deviation;
    let mut terminal = 0.0;
    if ctx.goal {
        terminal += w.w_goal;
    }
    if ctx.collision {
        terminal -= w.w_collision;
    }
    let risk = -w.w_risk * ctx.risks.iter().map(RiskTerms::risk).sum::<f64>();
    let components = RewardComponents {
        efficiency,
        track,
        terminal,
        risk,
    };
    (components.total(), components)
}
