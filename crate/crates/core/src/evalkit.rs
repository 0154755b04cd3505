//! Evaluation metrics and the gradient-conflict diagnostic.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::Maneuver;
use crate::env::{TerminalReason, DT};
use crate::error::{Error, Result};
use crate::learner::ppo::surrogate_gradient;
use crate::nn::ActorCritic;
use crate::types::{HazardClass, ACTION_DIM, NUM_CLASSES, NUM_CONSTRAINTS};

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub maneuver: Maneuver,
    pub terminal: TerminalReason,
    pub ticks: usize,
    pub duration_s: f64,
    pub mean_speed_kmh: f64,
    pub total_dense_cost: f64,
    /// Undefined for episodes shorter than three ticks.
    pub jerk: Option<f64>,
    #[serde(rename = "return")]
    pub episode_return: f64,
    pub cost_sums: [f64; NUM_CONSTRAINTS],
    /// Ego acceleration `[longitudinal, lateral]` per tick. Kept in memory
    /// only.
    #[serde(skip)]
    pub accel_trace: Vec<[f64; 2]>,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.terminal == TerminalReason::Goal
    }

    pub fn collision_class(&self) -> Option<HazardClass> {
        match self.terminal {
            TerminalReason::Collision(c) => Some(c),
            _ => None,
        }
    }
}

fn nonempty(records: &[EpisodeRecord], what: &str) -> Result<()> {
    if records.is_empty() {
        Err(Error::usage(format!("{what} needs at least one episode record")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRate {
    /// Percent of episodes ending in a collision.
    pub total: f64,
    /// Percent per hazard class (VRU, side, rear); sums to `total`.
    pub by_class: [f64; NUM_CLASSES],
}

pub fn collision_rate(records: &[EpisodeRecord]) -> Result<CollisionRate> {
    nonempty(records, "collision_rate")?;
    let n = records.len() as f64;
    let mut counts = [0usize; NUM_CLASSES];
    for r in records {
        if let Some(c) = r.collision_class() {
            counts[c.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    Ok(CollisionRate {
        total: 100.0 * total as f64 / n,
        by_class: counts.map(|c| 100.0 * c as f64 / n),
    })
}

/// Mean over episodes of the per-step dense cost (total / ticks).
pub fn avg_risk(records: &[EpisodeRecord]) -> Result<f64> {
    nonempty(records, "avg_risk")?;
    Ok(records
        .iter()
        .map(|r| r.total_dense_cost / r.ticks.max(1) as f64)
        .sum::<f64>()
        / records.len() as f64)
}

/// Mean duration of successful episodes; `None` when nothing succeeded.
pub fn time_to_goal(records: &[EpisodeRecord]) -> Option<f64> {
    let times: Vec<f64> = records.iter().filter(|r| r.success()).map(|r| r.duration_s).collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}

/// Mean magnitude of the finite-difference jerk, `(1/T)·Σ‖Δa/Δt‖·Δt` with
/// `T = (n−1)·Δt`.
pub fn avg_jerk(trace: &[[f64; 2]], dt: f64) -> Result<f64> {
    if trace.len() < 3 {
        return Err(Error::usage(format!(
            "jerk needs at least 3 acceleration samples, got {}",
            trace.len()
        )));
    }
    let steps = trace.len() - 1;
    let sum: f64 = trace
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt() / dt * dt)
        .sum();
    Ok(sum / (steps as f64 * dt))
}

/// Success percentage per maneuver; `None` marks a maneuver with no episodes.
pub fn success_by_maneuver(records: &[EpisodeRecord]) -> Vec<(Maneuver, Option<f64>)> {
    Maneuver::ALL
        .into_iter()
        .map(|m| {
            let group: Vec<&EpisodeRecord> = records.iter().filter(|r| r.maneuver == m).collect();
            let rate = (!group.is_empty())
                .then(|| 100.0 * group.iter().filter(|r| r.success()).count() as f64 / group.len() as f64);
            (m, rate)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        Some(Self { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// Headline evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub avg_risk: MeanStd,
    pub collision_rate: CollisionRate,
    pub speed_kmh: MeanStd,
    pub time_to_goal_s: Option<MeanStd>,
    pub jerk: Option<MeanStd>,
    pub episode_return: MeanStd,
    pub success_by_maneuver: Vec<(Maneuver, Option<f64>)>,
}

impl Summary {
    pub fn new(records: &[EpisodeRecord]) -> Result<Self> {
        nonempty(records, "summary")?;
        let col = |f: &dyn Fn(&EpisodeRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
        let risk = col(&|r| r.total_dense_cost / r.ticks.max(1) as f64);
        let ttg: Vec<f64> = records.iter().filter(|r| r.success()).map(|r| r.duration_s).collect();
        let jerk: Vec<f64> = records.iter().filter_map(|r| r.jerk).collect();
        Ok(Self {
            episodes: records.len(),
            avg_risk: MeanStd::of(&risk).unwrap(),
            collision_rate: collision_rate(records)?,
            speed_kmh: MeanStd::of(&col(&|r| r.mean_speed_kmh)).unwrap(),
            time_to_goal_s: MeanStd::of(&ttg),
            jerk: MeanStd::of(&jerk),
            episode_return: MeanStd::of(&col(&|r| r.episode_return)).unwrap(),
            success_by_maneuver: success_by_maneuver(records),
        })
    }

    /// Tab-separated tables: headline metrics, collision breakdown, success
    /// by maneuver.
    pub fn to_table(&self) -> String {
        let opt = |m: Option<MeanStd>| m.map_or("undefined".to_string(), |m| m.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "metric\tvalue");
        let _ = writeln!(s, "episodes\t{}", self.episodes);
        let _ = writeln!(s, "avg_risk\t{}", self.avg_risk);
        let _ = writeln!(s, "collision_rate_pct\t{:.2}", self.collision_rate.total);
        let _ = writeln!(s, "avg_speed_kmh\t{}", self.speed_kmh);
        let _ = writeln!(s, "time_to_goal_s\t{}", opt(self.time_to_goal_s));
        let _ = writeln!(s, "avg_jerk\t{}", opt(self.jerk));
        let _ = writeln!(s, "return\t{}", self.episode_return);
        let _ = writeln!(s);
        let _ = writeln!(s, "collision_source\trate_pct");
        for c in HazardClass::ALL {
            let _ = writeln!(s, "{}\t{:.2}", c.name(), self.collision_rate.by_class[c.index()]);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "maneuver\tsuccess_pct");
        for (m, rate) in &self.success_by_maneuver {
            let v = rate.map_or("absent".to_string(), |r| format!("{r:.2}"));
            let _ = writeln!(s, "{m}\t{v}");
        }
        s
    }
}

/// Objective names in gradient order: reward, then the constraints.
pub const OBJECTIVES: [&str; NUM_CONSTRAINTS + 1] = [
    "reward",
    "sparse_vru",
    "sparse_side",
    "sparse_rear",
    "dense_vru",
    "dense_side",
    "dense_rear",
];

/// Per-objective policy gradients and their pairwise cosine similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSnapshot {
    pub epoch: usize,
    pub norms: Vec<f64>,
    /// Set where a gradient is exactly zero; its cosines are reported as 0.
    pub zero: Vec<bool>,
    pub cosine: Vec<Vec<f64>>,
    #[serde(skip)]
    pub gradients: Vec<Vec<f64>>,
}

pub fn cosine_matrix(gradients: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<bool>) {
    let norms: Vec<f64> = gradients.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let zero: Vec<bool> = norms.iter().map(|n| *n == 0.0).collect();
    let n = gradients.len();
    let mut cos = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let c = if zero[i] || zero[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                let dot: f64 = gradients[i].iter().zip(&gradients[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
            cos[i][j] = c;
            cos[j][i] = c;
        }
    }
    (cos, norms, zero)
}

/// Gradients of the unclipped surrogate with the reward advantage and each
/// cost advantage substituted in turn, at the snapshot policy.
pub fn gradient_conflict(
    epoch: usize,
    net: &ActorCritic,
    features: ndarray::Array2<f64>,
    raw_actions: &[[f64; ACTION_DIM]],
    log_prob_old: &[f64],
    adv_r: &[f64],
    adv_c: &[[f64; NUM_CONSTRAINTS]],
) -> Result<GradientSnapshot> {
    let cache = net.forward(features)?;
    let mut gradients = vec![surrogate_gradient(net, &cache, raw_actions, log_prob_old, adv_r)];
    for k in 0..NUM_CONSTRAINTS {
        let a: Vec<f64> = adv_c.iter().map(|c| c[k]).collect();
        gradients.push(surrogate_gradient(net, &cache, raw_actions, log_prob_old, &a));
    }
    let (cosine, norms, zero) = cosine_matrix(&gradients);
    Ok(GradientSnapshot {
        epoch,
        norms,
        zero,
        cosine,
        gradients,
    })
}

/// One `(epoch, pair, cosine)` plot-data row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineRow {
    pub epoch: usize,
    pub pair: String,
    pub cosine: f64,
    pub degenerate: bool,
}

/// Every unordered objective pair of a snapshot, reward pairs included.
pub fn plot_rows(snapshot: &GradientSnapshot) -> Vec<CosineRow> {
    let n = snapshot.cosine.len();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            rows.push(CosineRow {
                epoch: snapshot.epoch,
                pair: format!("{}:{}", OBJECTIVES[i], OBJECTIVES[j]),
                cosine: snapshot.cosine[i][j],
                degenerate: snapshot.zero[i] || snapshot.zero[j],
            });
        }
    }
    rows
}

/// Fraction of epochs in which each constraint pair had a negative cosine;
/// returned as `(pair, fraction)` sorted by pair name.
pub fn negative_fractions(rows: &[CosineRow], constraints_only: bool) -> Vec<(String, f64)> {
    let mut by_pair: std::collections::BTreeMap<String, (usize, usize)> = Default::default();
    for r in rows {
        if constraints_only && r.pair.starts_with("reward:") {
            continue;
        }
        let e = by_pair.entry(r.pair.clone()).or_default();
        e.1 += 1;
        if r.cosine < 0.0 && !r.degenerate {
            e.0 += 1;
        }
    }
    by_pair
        .into_iter()
        .map(|(p, (neg, n))| (p, neg as f64 / n as f64))
        .collect()
}

/// Builds an episode record from per-tick traces.
pub fn episode_record(
    episode: usize,
    maneuver: Maneuver,
    terminal: TerminalReason,
    speeds: &[f64],
    dense_costs: &[f64],
    rewards: &[f64],
    costs: &[[f64; NUM_CONSTRAINTS]],
    accel_trace: Vec<[f64; 2]>,
) -> EpisodeRecord {
    let ticks = speeds.len();
    let mut cost_sums = [0.0; NUM_CONSTRAINTS];
    for c in costs {
        for k in 0..NUM_CONSTRAINTS {
            cost_sums[k] += c[k];
        }
    }
    EpisodeRecord {
        episode,
        maneuver,
        terminal,
        ticks,
        duration_s: ticks as f64 * DT,
        mean_speed_kmh: 3.6 * speeds.iter().sum::<f64>() / ticks.max(1) as f64,
        total_dense_cost: dense_costs.iter().sum(),
        jerk: avg_jerk(&accel_trace, DT).ok(),
        episode_return: rewards.iter().sum(),
        cost_sums,
        accel_trace,
    }
}
