//! Domain types shared across the simulator, networks and learner.

use serde::{Deserialize, Serialize};

use crate::config::Config;

/// Hazard classes, in constraint order.
pub const NUM_CLASSES: usize = 3;
/// Sparse constraints occupy `0..3`, dense constraints `3..6`.
pub const NUM_CONSTRAINTS: usize = 2 * NUM_CLASSES;
/// Tracked agent slots in the social feature group.
pub const NUM_AGENT_SLOTS: usize = 3;
/// Lookahead waypoints in the map feature group.
pub const NUM_WAYPOINTS: usize = 5;

pub const EGO_FEATURES: usize = 4;
pub const AGENT_FEATURES: usize = 8;
pub const WAYPOINT_FEATURES: usize = 2;
pub const STATE_DIM: usize =
    EGO_FEATURES + NUM_AGENT_SLOTS * AGENT_FEATURES + NUM_WAYPOINTS * WAYPOINT_FEATURES;
pub const ACTION_DIM: usize = 2;

/// Agent class of a hazard source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardClass {
    Vru,
    SideVehicle,
    RearVehicle,
}

impl HazardClass {
    pub const ALL: [HazardClass; NUM_CLASSES] =
        [HazardClass::Vru, HazardClass::SideVehicle, HazardClass::RearVehicle];

    pub fn index(self) -> usize {
        match self {
            HazardClass::Vru => 0,
            HazardClass::SideVehicle => 1,
            HazardClass::RearVehicle => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HazardClass::Vru => "vru",
            HazardClass::SideVehicle => "side_vehicle",
            HazardClass::RearVehicle => "rear_vehicle",
        }
    }
}

/// Frenet-frame observation `[ego, social, map]`, flattened.
///
/// Layout: 4 ego features (d, ṡ, ḋ, ψ_rel); then per agent slot (VRU, side,
/// rear) `[exist, type one-hot ×3, Δs, Δd, Δṡ, Δḋ]`; then per lookahead
/// waypoint `[longitudinal distance, heading error]`. Units are SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn zeros() -> Self {
        Self(vec![0.0; STATE_DIM])
    }

    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        (values.len() == STATE_DIM).then_some(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn ego(&self) -> &[f64] {
        &self.0[..EGO_FEATURES]
    }

    pub fn agent(&self, slot: usize) -> &[f64] {
        let start = EGO_FEATURES + slot * AGENT_FEATURES;
        &self.0[start..start + AGENT_FEATURES]
    }

    pub fn waypoint(&self, i: usize) -> &[f64] {
        let start = EGO_FEATURES + NUM_AGENT_SLOTS * AGENT_FEATURES + i * WAYPOINT_FEATURES;
        &self.0[start..start + WAYPOINT_FEATURES]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Normalized control `[a_lon, δ_steer]`, each in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionVector {
    pub a_lon: f64,
    pub steer: f64,
}

impl ActionVector {
    pub fn new(a_lon: f64, steer: f64) -> Self {
        Self { a_lon, steer }
    }

    pub fn clipped(self) -> Self {
        Self {
            a_lon: self.a_lon.clamp(-1.0, 1.0),
            steer: self.steer.clamp(-1.0, 1.0),
        }
    }

    pub fn to_array(self) -> [f64; ACTION_DIM] {
        [self.a_lon, self.steer]
    }
}

/// Per-step safety costs, sparse then dense, each ordered (VRU, side, rear).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostVector {
    pub sparse: [f64; NUM_CLASSES],
    pub dense: [f64; NUM_CLASSES],
}

impl CostVector {
    pub fn to_array(self) -> [f64; NUM_CONSTRAINTS] {
        let [s0, s1, s2] = self.sparse;
        let [d0, d1, d2] = self.dense;
        [s0, s1, s2, d0, d1, d2]
    }

    pub fn dense_total(&self) -> f64 {
        self.dense.iter().sum()
    }
}

/// Lagrange multipliers with the per-constraint priorities and limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeState {
    pub lambda: [f64; NUM_CONSTRAINTS],
    pub rho: [f64; NUM_CONSTRAINTS],
    pub limits: [f64; NUM_CONSTRAINTS],
}

impl LagrangeState {
    pub fn from_config(config: &Config) -> Self {
        Self {
            lambda: [config.lagrange.lambda_init; NUM_CONSTRAINTS],
            rho: config.rho_per_constraint(),
            limits: config.lagrange.cost_limits,
        }
    }

    pub fn lambda_sum(&self) -> f64 {
        self.lambda.iter().sum()
    }
}
