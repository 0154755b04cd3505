//! Deterministic 2D intersection simulator.
//!
//! One ego vehicle runs a left, right or straight maneuver at 20 Hz against
//! three scripted adversaries: a red-light-running cyclist, a tailgating rear
//! vehicle and a side vehicle in the adjacent lane that may cut in.

pub mod agents;
pub mod path;
pub mod reward;
pub mod risk;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use crate::config::{Config, Maneuver};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::types::{
    ActionVector, CostVector, HazardClass, StateVector, AGENT_FEATURES, EGO_FEATURES,
    NUM_AGENT_SLOTS, NUM_CLASSES, NUM_WAYPOINTS, WAYPOINT_FEATURES,
};

use agents::{bicycle_step, AgentClass, AgentState, RearVehicle, SideVehicle, VruFsm};
use path::{wrap_angle, ReferencePath, LEAD_IN};
use reward::{compute_reward, RewardComponents, RewardContext};
use risk::{collision_probability, compute_harm, compute_ttc, RiskTerms};

/// Simulation tick, s.
pub const DT: f64 = 0.05;
/// Spacing of the lookahead waypoints, m.
pub const WAYPOINT_SPACING: f64 = 5.0;
/// Ego counts as arrived this close to the path end, m.
pub const GOAL_TOLERANCE: f64 = 1.0;
/// ... and only while within this lateral offset of the route.
pub const GOAL_LATERAL_TOLERANCE: f64 = path::LANE_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "class")]
pub enum TerminalReason {
    Goal,
    Collision(HazardClass),
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: StateVector,
    pub reward: f64,
    pub components: RewardComponents,
    pub cost: CostVector,
    /// Risk terms per hazard class (VRU, side, rear).
    pub risks: [RiskTerms; NUM_CLASSES],
    pub terminal: Option<TerminalReason>,
    /// Ego acceleration vector `[longitudinal, lateral]` over this tick, m/s².
    pub ego_accel: [f64; 2],
}

impl StepOutcome {
    pub fn is_terminal(&self) -> bool {
        self.terminal.is_some()
    }
}

/// Snapshot of every actor, for trajectory logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub tick: usize,
    pub ego: AgentState,
    pub agents: [AgentState; NUM_CLASSES],
}

#[derive(Debug, Clone)]
pub struct IntersectionEnv {
    config: Config,
    rng: RandomStream,
    path: ReferencePath,
    ego: AgentState,
    ego_segment: usize,
    ego_s: f64,
    ego_d: f64,
    vru: VruFsm,
    side: SideVehicle,
    rear: RearVehicle,
    tick: usize,
    done: bool,
}

impl IntersectionEnv {
    /// Builds an environment and resets it once, so it is immediately usable.
    pub fn new(config: &Config, rng: RandomStream) -> Self {
        let path = ReferencePath::for_maneuver(Maneuver::Straight);
        let ego = AgentState::vehicle(AgentClass::Ego, 0.0, 0.0, 0.0, 0.0);
        let mut env = Self {
            config: config.clone(),
            rng,
            rear: RearVehicle::spawn(&path, LEAD_IN, config.env.rear_gap, 0.0),
            side: SideVehicle {
                state: ego,
                long_speed: 0.0,
                target_speed: 0.0,
                cut_in_at: None,
                lateral_target: 0.0,
            },
            path,
            ego,
            ego_segment: 0,
            ego_s: 0.0,
            ego_d: 0.0,
            vru: VruFsm::spawn(),
            tick: 0,
            done: true,
        };
        env.reset(None);
        env
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Starts a new episode. The maneuver is `forced`, else the config's
    /// fixed maneuver, else drawn uniformly.
    pub fn reset(&mut self, forced: Option<Maneuver>) -> StateVector {
        let maneuver = match forced.or(self.config.env.maneuver) {
            Some(m) => m,
            None => Maneuver::ALL[self.rng.index(Maneuver::ALL.len())],
        };
        self.path = ReferencePath::for_maneuver(maneuver);
        let (x, y) = self.path.position_at(LEAD_IN);
        self.ego = AgentState::vehicle(AgentClass::Ego, x, y, self.path.heading_at(LEAD_IN), 0.0);
        let proj = self.path.project(x, y, None);
        self.ego_segment = proj.segment;
        self.ego_s = proj.s;
        self.ego_d = proj.d;
        self.vru = VruFsm::spawn();
        self.rear = RearVehicle::spawn(&self.path, self.ego_s, self.config.env.rear_gap, 0.0);
        self.side = SideVehicle::spawn(&self.ego, &self.config.env, &mut self.rng);
        self.tick = 0;
        self.done = false;
        self.observe()
    }

    pub fn step(&mut self, action: ActionVector) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::usage("step called on a finished episode; call reset first"));
        }
        let lateral_accel = bicycle_step(&mut self.ego, action);
        let proj = self.path.project(self.ego.x, self.ego.y, Some(self.ego_segment));
        self.ego_segment = proj.segment;
        self.ego_s = proj.s;
        self.ego_d = proj.d;

        self.vru.step(&self.ego, &self.config.env, &mut self.rng);
        self.side.step(self.tick, &self.ego);
        self.rear
            .step(&self.path, &self.ego, self.ego_s, self.config.env.rear_gap);
        self.tick += 1;

        let agents = self.agents();
        let tau = self.config.cost.tau_ttc;
        let mut risks = [RiskTerms::default(); NUM_CLASSES];
        for (r, a) in risks.iter_mut().zip(agents.iter()) {
            let ttc = compute_ttc(&self.ego, a);
            *r = RiskTerms {
                probability: collision_probability(ttc, tau)?,
                harm: compute_harm(&self.ego, a),
                ttc,
            };
        }

        // At most one collision class per tick, first in (VRU, side, rear) order.
        let collided = HazardClass::ALL
            .into_iter()
            .find(|c| self.ego.overlaps(&agents[c.index()]));
        let goal = collided.is_none()
            && self.ego_s >= self.path.length() - GOAL_TOLERANCE
            && self.ego_d.abs() <= GOAL_LATERAL_TOLERANCE;
        let terminal = match (collided, goal) {
            (Some(c), _) => Some(TerminalReason::Collision(c)),
            (None, true) => Some(TerminalReason::Goal),
            _ if self.tick >= self.config.env.timeout_ticks => Some(TerminalReason::Timeout),
            _ => None,
        };

        let mut cost = CostVector::default();
        if let Some(c) = collided {
            cost.sparse[c.index()] = self.config.cost.c_sparse;
        }
        for (d, r) in cost.dense.iter_mut().zip(risks.iter()) {
            *d = self.config.cost.c_dense * r.probability * r.harm;
        }

        let (reward, components) = compute_reward(
            &RewardContext {
                speed: self.ego.speed,
                lateral_deviation: self.ego_d,
                risks: &risks,
                goal,
                collision: collided.is_some(),
            },
            &self.config.reward,
        );
        self.done = terminal.is_some();
        Ok(StepOutcome {
            state: self.observe(),
            reward,
            components,
            cost,
            risks,
            terminal,
            ego_accel: [self.ego.accel, lateral_accel],
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    pub fn maneuver(&self) -> Maneuver {
        self.path.maneuver()
    }

    pub fn path(&self) -> &ReferencePath {
        &self.path
    }

    pub fn ego(&self) -> &AgentState {
        &self.ego
    }

    pub fn vru(&self) -> &VruFsm {
        &self.vru
    }

    pub fn side_vehicle(&self) -> &SideVehicle {
        &self.side
    }

    pub fn rear_vehicle(&self) -> &RearVehicle {
        &self.rear
    }

    /// Adversaries in (VRU, side, rear) order.
    pub fn agents(&self) -> [AgentState; NUM_CLASSES] {
        [self.vru.state, self.side.state, self.rear.state]
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        SceneSnapshot {
            tick: self.tick,
            ego: self.ego,
            agents: self.agents(),
        }
    }

    /// Overrides actor states, for tests and scripted replays.
    pub fn set_ego(&mut self, ego: AgentState) {
        self.ego = ego;
        let proj = self.path.project(ego.x, ego.y, None);
        self.ego_segment = proj.segment;
        self.ego_s = proj.s;
        self.ego_d = proj.d;
    }

    pub fn vru_mut(&mut self) -> &mut VruFsm {
        &mut self.vru
    }

    pub fn side_vehicle_mut(&mut self) -> &mut SideVehicle {
        &mut self.side
    }

    pub fn rear_vehicle_mut(&mut self) -> &mut RearVehicle {
        &mut self.rear
    }

    pub fn observe(&self) -> StateVector {
        let d_obs = self.config.env.d_obs;
        let mut v = StateVector::zeros();
        let out = v.as_mut_slice();
        let path_heading = self.path.heading_at(self.ego_s);
        let psi = wrap_angle(self.ego.heading - path_heading);
        out[0] = self.ego_d.clamp(-d_obs, d_obs);
        out[1] = self.ego.speed * psi.cos();
        out[2] = self.ego.speed * psi.sin();
        out[3] = psi;

        let (tx, ty) = (path_heading.cos(), path_heading.sin());
        let (evx, evy) = self.ego.velocity();
        for (slot, agent) in self.agents().iter().enumerate().take(NUM_AGENT_SLOTS) {
            if self.ego.distance_to(agent) > d_obs {
                continue;
            }
            let base = EGO_FEATURES + slot * AGENT_FEATURES;
            let f = &mut out[base..base + AGENT_FEATURES];
            let (dx, dy) = (agent.x - self.ego.x, agent.y - self.ego.y);
            let (avx, avy) = agent.velocity();
            let (dvx, dvy) = (avx - evx, avy - evy);
            f[0] = 1.0;
            f[1 + slot] = 1.0;
            f[4] = (dx * tx + dy * ty).clamp(-d_obs, d_obs);
            f[5] = (-dx * ty + dy * tx).clamp(-d_obs, d_obs);
            f[6] = dvx * tx + dvy * ty;
            f[7] = -dvx * ty + dvy * tx;
        }

        let (hx, hy) = (self.ego.heading.cos(), self.ego.heading.sin());
        let map_base = EGO_FEATURES + NUM_AGENT_SLOTS * AGENT_FEATURES;
        for i in 0..NUM_WAYPOINTS {
            let s = (self.ego_s + WAYPOINT_SPACING * (i + 1) as f64).min(self.path.length());
            let (wx, wy) = self.path.position_at(s);
            let f = &mut out[map_base + i * WAYPOINT_FEATURES..map_base + (i + 1) * WAYPOINT_FEATURES];
            f[0] = ((wx - self.ego.x) * hx + (wy - self.ego.y) * hy).clamp(-d_obs, d_obs);
            f[1] = wrap_angle(self.path.heading_at(s) - self.ego.heading);
        }
        v
    }
}
