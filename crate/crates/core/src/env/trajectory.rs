//! Per-tick trajectory records.

use serde::{Deserialize, Serialize};

use super::agents::AgentState;
use super::reward::RewardComponents;
use super::risk::RiskTerms;
use super::{SceneSnapshot, StepOutcome, TerminalReason};
use crate::types::{ActionVector, CostVector, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub episode: usize,
    pub tick: usize,
    pub ego: AgentState,
    /// Adversaries in (VRU, side, rear) order.
    pub agents: [AgentState; NUM_CLASSES],
    pub action: ActionVector,
    pub reward: f64,
    pub components: RewardComponents,
    pub cost: CostVector,
    pub risks: [RiskTerms; NUM_CLASSES],
    pub terminal: Option<TerminalReason>,
}

impl TrajectoryRecord {
    pub fn new(episode: usize, scene: SceneSnapshot, action: ActionVector, outcome: &StepOutcome) -> Self {
        Self {
            episode,
            tick: scene.tick,
            ego: scene.ego,
            agents: scene.agents,
            action,
            reward: outcome.reward,
            components: outcome.components,
            cost: outcome.cost,
            risks: outcome.risks,
            terminal: outcome.terminal,
        }
    }
}
