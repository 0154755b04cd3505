//! Ego kinematics and the scripted adversaries.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::path::{ReferencePath, LANE_WIDTH};
use super::DT;
use crate::config::EnvConfig;
use crate::rng::RandomStream;
use crate::types::{ActionVector, HazardClass};

pub const WHEELBASE: f64 = 2.8;
pub const MAX_ACCEL: f64 = 3.0;
pub const MAX_BRAKE: f64 = 6.0;
pub const MAX_STEER: f64 = 35.0 * std::f64::consts::PI / 180.0;
pub const MAX_SPEED: f64 = 20.0;
pub const VEHICLE_RADIUS: f64 = 1.0;
pub const VRU_RADIUS: f64 = 0.4;
pub const VEHICLE_MASS: f64 = 1500.0;
pub const VRU_MASS: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentClass {
    Ego,
    Vru,
    SideVehicle,
    RearVehicle,
}

impl AgentClass {
    pub fn hazard(self) -> Option<HazardClass> {
        match self {
            AgentClass::Ego => None,
            AgentClass::Vru => Some(HazardClass::Vru),
            AgentClass::SideVehicle => Some(HazardClass::SideVehicle),
            AgentClass::RearVehicle => Some(HazardClass::RearVehicle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub class: AgentClass,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
    /// Longitudinal acceleration over the last tick, m/s².
    pub accel: f64,
    pub radius: f64,
    pub mass: f64,
}

impl AgentState {
    pub fn vehicle(class: AgentClass, x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self {
            class,
            x,
            y,
            heading,
            speed,
            accel: 0.0,
            radius: VEHICLE_RADIUS,
            mass: VEHICLE_MASS,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.speed * self.heading.cos(), self.speed * self.heading.sin())
    }

    pub fn distance_to(&self, other: &AgentState) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn overlaps(&self, other: &AgentState) -> bool {
        self.distance_to(other) < self.radius + other.radius
    }
}

/// Kinematic bicycle update of the ego (rear-axle reference point).
///
/// Returns the lateral acceleration `v²·tan δ / L` for the comfort trace.
pub fn bicycle_step(ego: &mut AgentState, action: ActionVector) -> f64 {
    let a = action.clipped();
    let accel = if a.a_lon >= 0.0 {
        a.a_lon * MAX_ACCEL
    } else {
        a.a_lon * MAX_BRAKE
    };
    let steer = a.steer * MAX_STEER;
    let v = ego.speed;
    ego.x += v * ego.heading.cos() * DT;
    ego.y += v * ego.heading.sin() * DT;
    let yaw_rate = v / WHEELBASE * steer.tan();
    ego.heading = super::path::wrap_angle(ego.heading + yaw_rate * DT);
    let new_speed = (v + accel * DT).clamp(0.0, MAX_SPEED);
    ego.accel = (new_speed - v) / DT;
    ego.speed = new_speed;
    v * yaw_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VruIntent {
    Rush,
    Yield,
    Hesitate,
}

impl VruIntent {
    pub const ALL: [VruIntent; 3] = [VruIntent::Rush, VruIntent::Yield, VruIntent::Hesitate];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VruMode {
    Dormant,
    Rush,
    Yield,
    HesitatePausing { remaining: f64 },
    HesitateGo,
}

/// Red-light-running cyclist crossing the ego's approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VruFsm {
    pub state: AgentState,
    pub mode: VruMode,
    pub intent: Option<VruIntent>,
    pub rush_speed: f64,
    pub pause: f64,
}

/// Crossing line of the cyclist, y (m).
pub const VRU_CROSSING_Y: f64 = -6.0;
/// Cyclist start, x (m).
pub const VRU_START_X: f64 = -7.0;
const VRU_ACCEL: f64 = 3.0;

impl VruFsm {
    pub fn spawn() -> Self {
        Self {
            state: AgentState {
                class: AgentClass::Vru,
                x: VRU_START_X,
                y: VRU_CROSSING_Y,
                heading: 0.0,
                speed: 0.0,
                accel: 0.0,
                radius: VRU_RADIUS,
                mass: VRU_MASS,
            },
            mode: VruMode::Dormant,
            intent: None,
            rush_speed: 0.0,
            pause: 0.0,
        }
    }

    pub fn step(&mut self, ego: &AgentState, cfg: &EnvConfig, rng: &mut RandomStream) {
        if self.mode == VruMode::Dormant && ego.distance_to(&self.state) <= cfg.vru_activation {
            let intent = VruIntent::ALL[rng.categorical(&cfg.vru_intent)];
            self.rush_speed = rng.uniform(cfg.vru_rush_speed[0], cfg.vru_rush_speed[1]);
            self.pause = rng.uniform(cfg.vru_pause[0], cfg.vru_pause[1]);
            self.intent = Some(intent);
            self.mode = match intent {
                VruIntent::Rush => VruMode::Rush,
                VruIntent::Yield => VruMode::Yield,
                VruIntent::Hesitate => VruMode::HesitatePausing {
                    remaining: self.pause,
                },
            };
        }
        let target = match self.mode {
            VruMode::Dormant | VruMode::Yield => 0.0,
            VruMode::HesitatePausing { remaining } => {
                let remaining = remaining - DT;
                self.mode = if remaining <= 0.0 {
                    VruMode::HesitateGo
                } else {
                    VruMode::HesitatePausing { remaining }
                };
                0.0
            }
            VruMode::Rush | VruMode::HesitateGo => self.rush_speed,
        };
        let s = &mut self.state;
        let dv = (target - s.speed).clamp(-VRU_ACCEL * DT, VRU_ACCEL * DT);
        s.x += s.speed * DT;
        s.speed += dv;
        s.accel = dv / DT;
    }
}

/// Tailgater that tracks the ego along its reference path at a fixed edge gap.
///
/// It reacts to the ego's acceleration after a short delay, so moderate
/// braking is survivable while emergency braking closes the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RearVehicle {
    pub state: AgentState,
    pub s: f64,
    /// Ego accelerations seen over the last `REAR_REACTION_TICKS` ticks.
    seen_accel: [f64; REAR_REACTION_TICKS],
}

const REAR_REACTION_TICKS: usize = 4;
const REAR_ACCEL: f64 = 3.0;
const REAR_BRAKE: f64 = 4.5;
const REAR_SPEED_GAIN: f64 = 2.0;
const REAR_GAP_GAIN: f64 = 1.0;

impl RearVehicle {
    pub fn spawn(path: &ReferencePath, ego_s: f64, gap: f64, speed: f64) -> Self {
        let s = ego_s - 2.0 * VEHICLE_RADIUS - gap;
        let (x, y) = path.position_at(s);
        Self {
            state: AgentState::vehicle(AgentClass::RearVehicle, x, y, path.heading_at(s), speed),
            s,
            seen_accel: [0.0; REAR_REACTION_TICKS],
        }
    }

    pub fn step(&mut self, path: &ReferencePath, ego: &AgentState, ego_s: f64, gap_target: f64) {
        let gap = ego_s - self.s - 2.0 * VEHICLE_RADIUS;
        let delayed = self.seen_accel[0];
        self.seen_accel.rotate_left(1);
        self.seen_accel[REAR_REACTION_TICKS - 1] = ego.accel;
        let accel = (delayed
            + REAR_SPEED_GAIN * (ego.speed - self.state.speed)
            + REAR_GAP_GAIN * (gap - gap_target))
            .clamp(-REAR_BRAKE, REAR_ACCEL);
        let st = &mut self.state;
        self.s += st.speed * DT;
        let new_speed = (st.speed + accel * DT).clamp(0.0, MAX_SPEED);
        st.accel = (new_speed - st.speed) / DT;
        st.speed = new_speed;
        let (x, y) = path.position_at(self.s);
        st.x = x;
        st.y = y;
        st.heading = path.heading_at(self.s);
    }
}

/// Same-direction neighbour in the adjacent lane that may cut in toward the
/// ego lane once per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideVehicle {
    pub state: AgentState,
    /// Northbound speed component, m/s.
    pub long_speed: f64,
    pub target_speed: f64,
    /// Tick at which the cut-in starts, if one happens this episode.
    pub cut_in_at: Option<usize>,
    pub lateral_target: f64,
}

const SIDE_ACCEL: f64 = 2.0;
const SIDE_BRAKE: f64 = 5.0;
const SIDE_LATERAL_SPEED: f64 = 1.4;
const SIDE_FOLLOW_GAP: f64 = 4.0;

impl SideVehicle {
    pub fn spawn(ego: &AgentState, cfg: &EnvConfig, rng: &mut RandomStream) -> Self {
        let dy = rng.uniform(-4.0, 4.0);
        let target_speed = rng.uniform(7.0, 9.0);
        let cut_in = rng.bernoulli(cfg.side_cut_in_prob);
        let t_cut = rng.uniform(2.0, 5.0);
        let cut_in_at = cut_in.then_some((t_cut / DT).round() as usize);
        let x = ego.x + LANE_WIDTH;
        Self {
            state: AgentState::vehicle(AgentClass::SideVehicle, x, ego.y + dy, FRAC_PI_2, 0.0),
            long_speed: 0.0,
            target_speed,
            cut_in_at,
            lateral_target: x,
        }
    }

    pub fn step(&mut self, tick: usize, ego: &AgentState) {
        if self.cut_in_at == Some(tick) {
            self.lateral_target = LANE_WIDTH / 2.0;
        }
        let st = &mut self.state;
        let lat_speed = ((self.lateral_target - st.x) / DT).clamp(-SIDE_LATERAL_SPEED, SIDE_LATERAL_SPEED);

        let mut accel = (self.target_speed - self.long_speed).clamp(-SIDE_BRAKE, SIDE_ACCEL);
        // Car-following when the ego is just ahead in the same lane.
        let ahead = ego.y - st.y;
        let same_lane = (ego.x - st.x).abs() < 2.0 * VEHICLE_RADIUS + 0.5;
        if same_lane && ahead > 0.0 && ahead < 20.0 {
            let gap = ahead - 2.0 * VEHICLE_RADIUS;
            let follow = 1.5 * (ego.speed - self.long_speed) + 0.8 * (gap - SIDE_FOLLOW_GAP);
            accel = accel.min(follow.clamp(-SIDE_BRAKE, SIDE_ACCEL));
        }
        st.x += lat_speed * DT;
        st.y += self.long_speed * DT;
        let new_long = (self.long_speed + accel * DT).clamp(0.0, MAX_SPEED);
        st.accel = (new_long - self.long_speed) / DT;
        self.long_speed = new_long;
        st.speed = lat_speed.hypot(new_long);
        st.heading = if st.speed > 1e-9 {
            new_long.atan2(lat_speed)
        } else {
            FRAC_PI_2
        };
    }
}
