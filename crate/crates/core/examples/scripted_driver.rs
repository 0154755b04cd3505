//! Runs scripted drivers through the intersection and prints outcome
//! frequencies. Useful for checking scenario difficulty after changing
//! adversary parameters.
//!
//!     cargo run --release --example scripted_driver -- [episodes]

use std::collections::BTreeMap;

use bapsrl::env::{IntersectionEnv, TerminalReason};
use bapsrl::{seeded_rng, ActionVector, Config};

/// Pure-pursuit steering plus a proportional speed controller.
fn drive(env: &IntersectionEnv, target_speed: f64) -> ActionVector {
    let ego = env.ego();
    let path = env.path();
    let proj = path.project(ego.x, ego.y, None);
    let look = (proj.s + 6.0).min(path.length());
    let (tx, ty) = path.position_at(look);
    let alpha = (ty - ego.y).atan2(tx - ego.x) - ego.heading;
    let alpha = bapsrl::env::path::wrap_angle(alpha);
    let steer = (2.0 * 2.8 * alpha.sin() / 6.0).atan() / (35f64.to_radians());
    let a = (target_speed - ego.speed) * 0.12;
    ActionVector::new(a.clamp(-1.0, 1.0), steer.clamp(-1.0, 1.0))
}

fn cautious_speed(env: &IntersectionEnv) -> f64 {
    let vru = env.vru();
    let ego = env.ego();
    let dist = ego.distance_to(&vru.state);
    let crossing_ahead = ego.y < vru.state.y + 2.0;
    if crossing_ahead && dist < 22.0 && vru.state.x < ego.x + 2.0 {
        3.0
    } else {
        8.0
    }
}

fn main() {
    let episodes: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let config = Config::default();
    for (name, cautious) in [("greedy", false), ("cautious", true)] {
        let mut env = IntersectionEnv::new(&config, seeded_rng(11, 0));
        let mut outcomes: BTreeMap<String, usize> = BTreeMap::new();
        let mut ticks = 0usize;
        let mut goal_ticks = 0usize;
        let mut dense = [0.0f64; 3];
        let mut ret = 0.0;
        for _ in 0..episodes {
            env.reset(None);
            loop {
                let v = if cautious { cautious_speed(&env) } else { 8.0 };
                let out = env.step(drive(&env, v)).unwrap();
                ret += out.reward;
                for k in 0..3 {
                    dense[k] += out.cost.dense[k];
                }
                if let Some(t) = out.terminal {
                    ticks += env.tick();
                    if t == TerminalReason::Goal {
                        goal_ticks += env.tick();
                    }
                    let key = match t {
                        TerminalReason::Collision(c) => format!("collision:{}", c.name()),
                        other => format!("{other:?}").to_lowercase(),
                    };
                    *outcomes.entry(key).or_default() += 1;
                    break;
                }
            }
        }
        let n = episodes as f64;
        println!("== {name}");
        for (k, v) in &outcomes {
            println!("  {k:<24} {:6.2}%", 100.0 * *v as f64 / n);
        }
        let goals = outcomes.get("goal").copied().unwrap_or(0).max(1) as f64;
        println!("  mean ticks {:.1}, mean ttg {:.2}s", ticks as f64 / n, goal_ticks as f64 / goals * 0.05);
        println!(
            "  mean episodic dense cost vru {:.2} side {:.2} rear {:.2}; mean return {:.1}",
            dense[0] / n,
            dense[1] / n,
            dense[2] / n,
            ret / n
        );
    }
}
