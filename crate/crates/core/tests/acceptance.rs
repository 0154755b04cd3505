//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Criteria 6–8 train twelve desk-profile runs (about a
//! quarter hour on one core).

mod common;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ndarray::Array2;

use bapsrl::bap::{bap_advantage, posterior_weights, prior_log_odds, violation_evidence};
use bapsrl::cli::{diagnose_rows, eval_checkpoint, run_ablation, train_run, AblationRow};
use bapsrl::env::agents::{AgentClass, AgentState, VruIntent, VRU_CROSSING_Y, VRU_START_X};
use bapsrl::env::risk::{collision_probability, compute_harm, compute_ttc};
use bapsrl::env::{IntersectionEnv, TerminalReason};
use bapsrl::evalkit::{negative_fractions, Summary};
use bapsrl::learner::gae::compute_gae_bootstrapped;
use bapsrl::learner::ppo::{joint_loss, MiniBatch};
use bapsrl::learner::{dual_ascent, evaluate_policy, Trainer};
use bapsrl::nn::checkpoint::Checkpoint;
use bapsrl::nn::gaussian::log_prob;
use bapsrl::nn::{ActorCritic, NetShape};
use bapsrl::types::{ActionVector, HazardClass, LagrangeState, NUM_CONSTRAINTS};
use bapsrl::{seeded_rng, Config, RandomStream, Strategy};

use common::{rel_err, BigFixed as B};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn b(x: f64) -> B {
    B::from_f64(x)
}

/// Tracks the worst relative error of one kernel.
struct Worst {
    name: &'static str,
    cases: usize,
    err: f64,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Self { name, cases: 0, err: 0.0 }
    }

    fn add(&mut self, actual: f64, oracle: &B) {
        self.cases += 1;
        let e = rel_err(actual, oracle.to_f64());
        if e.is_nan() || e > self.err {
            self.err = e;
        }
    }
}

fn criterion_1() -> Outcome {
    const N: usize = 120;
    const TOL: f64 = 1e-10;
    let start = Instant::now();
    let anchors = [
        (B::ln2().to_f64(), std::f64::consts::LN_2),
        (B::pi().to_f64(), std::f64::consts::PI),
        (B::one().exp().to_f64(), std::f64::consts::E),
    ];
    if let Some((got, want)) = anchors.iter().find(|(g, w)| g != w) {
        return Err(format!("oracle self-check failed: {got} != {want}"));
    }
    let mut rng = seeded_rng(11, 0);
    let mut kernels = Vec::new();

    let mut w = Worst::new("prior_log_odds");
    for _ in 0..N {
        let lambda: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(0.0, 5.0));
        let rho: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(-3.0, 0.0));
        let (alpha, eps) = (rng.uniform(0.1, 2.0), 1e-8);
        let got = prior_log_odds(&lambda, &rho, alpha, eps, true);
        for k in 0..NUM_CONSTRAINTS {
            let oracle = b(alpha).mul(&b(lambda[k]).add(&b(eps)).ln()).add(&b(rho[k]));
            w.add(got[k], &oracle);
        }
    }
    kernels.push(w);

    let mut w = Worst::new("violation_evidence");
    for _ in 0..N {
        let (c, d, a, eta) = (rng.uniform(0.0, 3.0), rng.uniform(0.0, 2.0), rng.uniform(-5.0, 5.0), rng.uniform(0.0, 2.0));
        let oracle = b(eta).mul(&b(c).sub(&b(d)).max(B::zero())).add(&b(a));
        w.add(violation_evidence(c, d, a, eta), &oracle);
    }
    kernels.push(w);

    let mut w = Worst::new("posterior_weights");
    for _ in 0..N {
        let phi: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(-20.0, 3.0));
        let delta: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(-10.0, 10.0));
        let beta = rng.uniform(0.0, 3.0);
        let got = posterior_weights(&phi, &[delta], beta);
        for k in 0..NUM_CONSTRAINTS {
            let oracle = b(beta).mul(&b(delta[k])).add(&b(phi[k])).sigmoid();
            w.add(got[0][k], &oracle);
        }
    }
    kernels.push(w);

    let mut w = Worst::new("bap_advantage");
    for _ in 0..N {
        let ar = rng.uniform(-3.0, 3.0);
        let ac: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(-5.0, 5.0));
        let wt: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.unit());
        let lambda: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(0.0, 4.0));
        let got = bap_advantage(&[ar], &[ac], &[wt], &lambda)[0];
        let mut penalty = B::zero();
        let mut denom = B::one();
        for k in 0..NUM_CONSTRAINTS {
            penalty = penalty.add(&b(wt[k]).mul(&b(lambda[k])).mul(&b(ac[k])));
            denom = denom.add(&b(lambda[k]));
        }
        w.add(got, &b(ar).sub(&penalty).div(&denom));
    }
    kernels.push(w);

    let mut w = Worst::new("collision_probability");
    for _ in 0..N {
        let tau = rng.uniform(0.5, 6.0);
        let t = rng.uniform(0.0, 1.2 * tau);
        let got = collision_probability(Some(t), tau).map_err(|e| e.to_string())?;
        let oracle = if t > tau {
            B::zero()
        } else {
            let x = B::one().sub(&b(t).div(&b(tau)));
            x.mul(&x)
        };
        w.add(got, &oracle);
    }
    kernels.push(w);

    let mut w = Worst::new("compute_harm");
    for _ in 0..N {
        let agent = |rng: &mut RandomStream, radius: f64, mass: f64| AgentState {
            class: AgentClass::Ego,
            x: rng.uniform(-20.0, 20.0),
            y: rng.uniform(-20.0, 20.0),
            heading: rng.uniform(-3.2, 3.2),
            speed: rng.uniform(0.0, 20.0),
            accel: 0.0,
            radius,
            mass,
        };
        let (m_ego, m_other) = (rng.uniform(800.0, 2500.0), rng.uniform(50.0, 2500.0));
        let ego = agent(&mut rng, 1.0, m_ego);
        let other = agent(&mut rng, 0.4, m_other);
        let vel = |a: &AgentState| (b(a.speed).mul(&b(a.heading).cos()), b(a.speed).mul(&b(a.heading).sin()));
        let (ex, ey) = vel(&ego);
        let (ox, oy) = vel(&other);
        let (dx, dy) = (ex.sub(&ox), ey.sub(&oy));
        let rel = dx.mul(&dx).add(&dy.mul(&dy)).sqrt();
        let oracle = b(other.mass).div(&b(ego.mass).add(&b(other.mass))).mul(&rel);
        w.add(compute_harm(&ego, &other), &oracle);
    }
    kernels.push(w);

    let mut w = Worst::new("dual_ascent");
    for _ in 0..N {
        let lagrange = LagrangeState {
            lambda: std::array::from_fn(|_| rng.uniform(0.0, 3.0)),
            rho: [0.0; NUM_CONSTRAINTS],
            limits: [0.1, 0.1, 0.1, 100.0, 20.0, 20.0],
        };
        let costs: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|k| rng.uniform(0.0, 2.0 * lagrange.limits[k]));
        let alpha = rng.uniform(1e-4, 0.1);
        let got = dual_ascent(&lagrange, &costs, alpha);
        for k in 0..NUM_CONSTRAINTS {
            let oracle = b(lagrange.lambda[k])
                .add(&b(alpha).mul(&b(costs[k]).sub(&b(lagrange.limits[k]))))
                .max(B::zero());
            w.add(got.lambda[k], &oracle);
        }
    }
    kernels.push(w);

    let elapsed = start.elapsed().as_secs_f64();
    let worst = kernels.iter().map(|k| k.err).fold(0.0, f64::max);
    let ok = kernels.iter().all(|k| k.cases >= 100 && k.err < TOL) && elapsed < 1.0;
    let detail = kernels
        .iter()
        .map(|k| format!("{} {:.1e}", k.name, k.err))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("7 kernels x {N} inputs, max rel err {worst:.2e} ({detail}); {elapsed:.2} s"))
}

fn criterion_2() -> Outcome {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    const FLOOR: f64 = 1e-6;
    let mut rng = seeded_rng(21, 0);
    let shape = NetShape::new(6, 8, NUM_CONSTRAINTS);
    let mut net = ActorCritic::init(shape, &mut rng);
    net.set_log_std([-0.3, 0.2]);
    let bsz = 16;
    let features = Array2::from_shape_fn((bsz, 6), |_| rng.uniform(-1.5, 1.5));
    let cache = net.forward(features.clone()).map_err(|e| e.to_string())?;
    let log_std = net.log_std();
    let mut raw_actions = Vec::with_capacity(bsz);
    let mut log_prob_old = Vec::with_capacity(bsz);
    for i in 0..bsz {
        let mean = [cache.out[[i, 0]], cache.out[[i, 1]]];
        let a = [mean[0] + log_std[0].exp() * rng.normal(), mean[1] + log_std[1].exp() * rng.normal()];
        // Ratios land in [0.95, 1.05], far from the 1 ± 0.2 clip edges.
        log_prob_old.push(log_prob(&a, &mean, &log_std) + rng.uniform(-0.05, 0.05));
        raw_actions.push(a);
    }
    let adv_r: Vec<f64> = (0..bsz).map(|_| rng.normal()).collect();
    let adv_c: Vec<[f64; NUM_CONSTRAINTS]> = (0..bsz).map(|_| std::array::from_fn(|_| rng.normal())).collect();
    let lambda: [f64; NUM_CONSTRAINTS] = std::array::from_fn(|_| rng.uniform(0.0, 1.0));
    let phi = prior_log_odds(&lambda, &[0.0, 0.0, 0.0, -1.5, -1.5, -2.0], 1.0, 1e-8, true);
    let delta: Vec<[f64; NUM_CONSTRAINTS]> = adv_c.clone();
    let weights = posterior_weights(&phi, &delta, 1.0);
    let advantages = bap_advantage(&adv_r, &adv_c, &weights, &lambda);
    let batch = MiniBatch {
        features,
        raw_actions,
        log_prob_old,
        advantages,
        target_r: (0..bsz).map(|_| rng.normal()).collect(),
        target_c: Array2::from_shape_fn((bsz, NUM_CONSTRAINTS), |_| rng.normal()),
    };
    let (clip, ent, vc) = (0.2, 0.01, 0.5);
    let (_, grad) = joint_loss(&net, &batch, clip, ent, vc).map_err(|e| e.to_string())?;
    let loss = |n: &ActorCritic| joint_loss(n, &batch, clip, ent, vc).map(|(r, _)| r.total);
    let mut worst: f64 = 0.0;
    for j in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[j] += H;
        let mut minus = net.clone();
        minus.params_mut()[j] -= H;
        let fd = (loss(&plus).map_err(|e| e.to_string())? - loss(&minus).map_err(|e| e.to_string())?) / (2.0 * H);
        let e = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(FLOOR);
        worst = worst.max(e);
    }
    check(
        worst < TOL,
        format!("{} parameters, max rel err {worst:.2e} (h = {H}, floor {FLOOR})", net.params().len()),
    )
}

/// k-step returns mixed with weights `(1−λ)λ^(k−1)` and tail `λ^(n−1)`.
fn brute_force_gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    ends: &[bool],
    gamma: f64,
    lam: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let mut out = vec![0.0; n];
    for t in 0..n {
        let e = (t..n).find(|&i| ends[i]).unwrap_or(n - 1);
        let steps = e - t + 1;
        let k_return = |k: usize| {
            let mut g = 0.0;
            for i in 0..k {
                g += gamma.powi(i as i32) * rewards[t + i];
            }
            let boot = if t + k - 1 == e { next_values[e] } else { values[t + k] };
            g + gamma.powi(k as i32) * boot
        };
        let mut mix = 0.0;
        for k in 1..steps {
            mix += (1.0 - lam) * lam.powi(k as i32 - 1) * k_return(k);
        }
        mix += lam.powi(steps as i32 - 1) * k_return(steps);
        out[t] = mix - values[t];
    }
    out
}

fn criterion_3() -> Outcome {
    let mut rng = seeded_rng(31, 0);
    let n = 400;
    let rewards: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let values: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
    let mut ends: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.04)).collect();
    ends[n - 1] = true;
    let mut terminals = 0;
    let mut truncations = 0;
    let next_values: Vec<f64> = (0..n)
        .map(|t| {
            if !ends[t] {
                values[t + 1]
            } else if rng.bernoulli(0.5) {
                terminals += 1;
                0.0
            } else {
                truncations += 1;
                rng.uniform(-3.0, 3.0)
            }
        })
        .collect();
    let gamma = 0.97;
    let mut worst: f64 = 0.0;
    for lam in [1.0, 0.0, 0.5] {
        let (adv, targets) = compute_gae_bootstrapped(&rewards, &values, &next_values, &ends, gamma, lam);
        let oracle = brute_force_gae(&rewards, &values, &next_values, &ends, gamma, lam);
        for t in 0..n {
            worst = worst.max((adv[t] - oracle[t]).abs() / oracle[t].abs().max(1.0));
            worst = worst.max((targets[t] - (oracle[t] + values[t])).abs() / targets[t].abs().max(1.0));
        }
    }
    check(
        worst <= 1e-10 && terminals > 0 && truncations > 0,
        format!("λ ∈ {{1, 0, 0.5}}, {n} steps, {terminals} terminals, {truncations} truncations, max err {worst:.2e}"),
    )
}

fn small_config(seed: u64) -> Config {
    let mut c = Config::default();
    c.train.seed = seed;
    c.train.steps_per_epoch = 2000;
    c.train.total_steps = 10_000;
    c.train.minibatch_size = 500;
    c.train.update_passes = 4;
    c.train.diag_samples = 500;
    c.train.checkpoint_interval = 0;
    c
}

fn criterion_4() -> Outcome {
    let run = |strategy: Strategy| -> Result<(Vec<f64>, LagrangeState), String> {
        let mut c = small_config(4);
        c.bap.strategy = strategy;
        c.bap.pin_weight = Some(1.0);
        let mut t = Trainer::new(c).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            t.train_epoch().map_err(|e| e.to_string())?;
        }
        Ok((t.net.params().to_vec(), t.lagrange.clone()))
    };
    let (pu, lu) = run(Strategy::Uniform)?;
    let (pb, lb) = run(Strategy::Bap)?;
    let identical = pu.len() == pb.len() && pu.iter().zip(&pb).all(|(a, c)| a.to_bits() == c.to_bits());
    let lambda_same = lu.lambda.iter().zip(&lb.lambda).all(|(a, c)| a.to_bits() == c.to_bits());
    check(
        identical && lambda_same,
        format!("{} parameters after 3 epochs, bitwise equal: {identical}; multipliers equal: {lambda_same}", pu.len()),
    )
}

fn criterion_5(scratch: &Path) -> Outcome {
    let read = |dir: &Path| std::fs::read(dir.join("metrics.jsonl")).map_err(|e| e.to_string());
    let (a, c) = (scratch.join("determinism_a"), scratch.join("determinism_b"));
    let first = train_run(small_config(5), &a, true).map_err(|e| e.to_string())?;
    train_run(small_config(5), &c, true).map_err(|e| e.to_string())?;
    let (ma, mc) = (read(&a)?, read(&c)?);
    let epochs = first.reports.len();
    check(
        ma == mc && epochs >= 5 && !ma.is_empty(),
        format!("{epochs} epochs, metrics.jsonl {} bytes, byte-identical: {}", ma.len(), ma == mc),
    )
}

struct Desk {
    rows: Vec<AblationRow>,
    out: PathBuf,
    seeds: Vec<u64>,
}

impl Desk {
    fn mean(&self, variant: &str, f: impl Fn(&AblationRow) -> f64) -> f64 {
        let xs: Vec<f64> = self.rows.iter().filter(|r| r.variant == variant).map(f).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn per_seed(&self, variant: &str, f: impl Fn(&AblationRow) -> f64) -> String {
        self.rows
            .iter()
            .filter(|r| r.variant == variant)
            .map(|r| format!("{:.1}", f(r)))
            .collect::<Vec<_>>()
            .join("/")
    }
}

fn desk_runs(scratch: &Path) -> Result<Desk, String> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/desk.toml");
    let base = Config::load(path).map_err(|e| e.to_string())?;
    let variants: Vec<String> = ["full", "uniform", "no_prior", "no_likelihood"].map(String::from).to_vec();
    let seeds = vec![0, 1, 2];
    let out = scratch.join("desk");
    let rows = run_ablation(&base, &variants, &seeds, 200, &out, true).map_err(|e| e.to_string())?;
    Ok(Desk { rows, out, seeds })
}

fn criterion_6(desk: &Result<Desk, String>) -> Outcome {
    let d = desk.as_ref().map_err(Clone::clone)?;
    let cr = |r: &AblationRow| r.collision_rate;
    let (full, uni) = (d.mean("full", cr), d.mean("uniform", cr));
    check(
        full < uni && uni > 0.0 && uni < 100.0,
        format!(
            "collision rate bap {full:.2}% ({}) vs uniform {uni:.2}% ({}), mean of {} seeds",
            d.per_seed("full", cr),
            d.per_seed("uniform", cr),
            d.seeds.len()
        ),
    )
}

fn criterion_7(desk: &Result<Desk, String>) -> Outcome {
    let d = desk.as_ref().map_err(Clone::clone)?;
    let cr = |r: &AblationRow| r.collision_rate;
    let ret = |r: &AblationRow| r.mean_return;
    let (full_cr, np_cr) = (d.mean("full", cr), d.mean("no_prior", cr));
    let (full_ret, nl_ret) = (d.mean("full", ret), d.mean("no_likelihood", ret));
    check(
        np_cr >= full_cr && nl_ret <= full_ret,
        format!(
            "collision rate no_prior {np_cr:.2}% vs full {full_cr:.2}%; return no_likelihood {nl_ret:.1} vs full {full_ret:.1}"
        ),
    )
}

fn criterion_8(desk: &Result<Desk, String>) -> Outcome {
    let d = desk.as_ref().map_err(Clone::clone)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for seed in &d.seeds {
        let dir = d.out.join("uniform").join(format!("seed_{seed}"));
        let rows = diagnose_rows(Some(&dir), None, 0).map_err(|e| e.to_string())?;
        let fractions = negative_fractions(&rows, true);
        let best = fractions
            .iter()
            .max_by(|a, c| a.1.total_cmp(&c.1))
            .cloned()
            .unwrap_or_default();
        ok &= best.1 >= 0.10;
        parts.push(format!("seed {seed}: {} {:.2}", best.0, best.1));
    }
    check(ok, format!("largest negative-cosine epoch fraction per uniform run: {}", parts.join(", ")))
}

/// Binomial 99% band `n·p ± z·sqrt(n·p·(1−p))`.
fn within_binomial(count: usize, n: usize, p: f64) -> bool {
    const Z99: f64 = 2.5758;
    let (n, c) = (n as f64, count as f64);
    let half = Z99 * (n * p * (1.0 - p)).sqrt();
    (c - n * p).abs() <= half
}

fn vru_intents(config: &Config) -> Result<(bool, String), String> {
    const EPISODES: usize = 10_000;
    let mut env = IntersectionEnv::new(config, seeded_rng(91, 0));
    let mut counts = [0usize; 3];
    for _ in 0..EPISODES {
        env.reset(None);
        let near = AgentState::vehicle(AgentClass::Ego, VRU_START_X + 5.0, VRU_CROSSING_Y - 10.0, std::f64::consts::FRAC_PI_2, 0.0);
        env.set_ego(near);
        env.step(ActionVector::new(0.0, 0.0)).map_err(|e| e.to_string())?;
        let intent = env.vru().intent.ok_or("VRU did not activate within range")?;
        counts[VruIntent::ALL.iter().position(|i| *i == intent).unwrap()] += 1;
    }
    let p = config.env.vru_intent;
    let ok = (0..3).all(|i| within_binomial(counts[i], EPISODES, p[i]));
    Ok((ok, format!("intents {counts:?}/{EPISODES} vs p {p:?}")))
}

fn ttc_vs_simulation() -> (bool, String) {
    const DT: f64 = 1e-3;
    const HORIZON: f64 = 15.0;
    let mut rng = seeded_rng(92, 0);
    let mut hits = 0;
    let mut misses = 0;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for _ in 0..600 {
        let ego = AgentState::vehicle(AgentClass::Ego, 0.0, 0.0, rng.uniform(-3.2, 3.2), rng.uniform(0.0, 15.0));
        let dist = rng.uniform(3.0, 60.0);
        let bearing = rng.uniform(-3.2, 3.2);
        // Half the scenarios head roughly back toward the ego.
        let heading = if rng.bernoulli(0.5) {
            bearing + std::f64::consts::PI + rng.uniform(-0.15, 0.15)
        } else {
            rng.uniform(-3.2, 3.2)
        };
        let mut other = AgentState::vehicle(
            AgentClass::SideVehicle,
            dist * bearing.cos(),
            dist * bearing.sin(),
            heading,
            rng.uniform(0.0, 15.0),
        );
        if rng.bernoulli(0.5) {
            other.radius = 0.4;
        }
        let ttc = compute_ttc(&ego, &other);
        let (evx, evy) = ego.velocity();
        let (ovx, ovy) = other.velocity();
        let reach = ego.radius + other.radius;
        let mut sim = None;
        let mut i = 0u64;
        while (i as f64) * DT <= HORIZON {
            let t = i as f64 * DT;
            let dx = (other.x + ovx * t) - (ego.x + evx * t);
            let dy = (other.y + ovy * t) - (ego.y + evy * t);
            if dx.hypot(dy) <= reach {
                sim = Some(t);
                break;
            }
            i += 1;
        }
        match (ttc, sim) {
            (Some(t), Some(s)) => {
                hits += 1;
                let err = s - t;
                worst = worst.max(err.abs());
                ok &= (-1e-9..=DT + 1e-9).contains(&err);
            }
            (None, None) => misses += 1,
            (Some(t), None) => {
                misses += 1;
                ok &= t > HORIZON - DT;
            }
            (None, Some(_)) => ok = false,
        }
    }
    (ok, format!("TTC vs 1 ms simulation: {hits} contacts (max |Δt| {worst:.1e} s), {misses} misses"))
}

fn terminal_invariants(config: &Config) -> Result<(bool, String), String> {
    const EPISODES: usize = 1000;
    let mut env = IntersectionEnv::new(config, seeded_rng(93, 0));
    let mut rng = seeded_rng(93, 1);
    let c_sparse = config.cost.c_sparse;
    let mut ok = true;
    let mut tally = [0usize; 4];
    let mut steps = 0usize;
    for _ in 0..EPISODES {
        env.reset(None);
        let bias = rng.uniform(-0.2, 1.0);
        let mut sparse_total = [0.0; 3];
        loop {
            let a = ActionVector::new(bias + rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3));
            let out = env.step(a).map_err(|e| e.to_string())?;
            steps += 1;
            let ego = *env.ego();
            let agents = env.agents();
            let first_overlap = HazardClass::ALL.into_iter().find(|c| ego.overlaps(&agents[c.index()]));
            match out.terminal {
                Some(TerminalReason::Collision(c)) => ok &= first_overlap == Some(c),
                _ => ok &= first_overlap.is_none(),
            }
            for k in 0..3 {
                sparse_total[k] += out.cost.sparse[k];
                if out.cost.sparse[k] != 0.0 {
                    ok &= out.terminal == Some(TerminalReason::Collision(HazardClass::ALL[k]));
                }
            }
            if let Some(reason) = out.terminal {
                let idx = match reason {
                    TerminalReason::Goal => 0,
                    TerminalReason::Collision(_) => 1,
                    TerminalReason::Timeout => 2,
                };
                tally[idx] += 1;
                let collided = sparse_total.iter().filter(|c| **c != 0.0).count();
                match reason {
                    TerminalReason::Collision(c) => {
                        ok &= collided == 1 && sparse_total[c.index()] == c_sparse;
                    }
                    _ => ok &= collided == 0,
                }
                ok &= env.is_done();
                break;
            }
        }
        tally[3] += 1;
    }
    ok &= tally[0] + tally[1] + tally[2] == EPISODES;
    Ok((
        ok,
        format!(
            "{EPISODES} random episodes ({steps} steps): goal {}, collision {}, timeout {}; collision ⇔ overlap, one sparse class per collision",
            tally[0], tally[1], tally[2]
        ),
    ))
}

fn criterion_9() -> Outcome {
    let config = Config::default();
    let (ok_a, a) = vru_intents(&config)?;
    let (ok_b, b) = ttc_vs_simulation();
    let (ok_c, c) = terminal_invariants(&config)?;
    check(ok_a && ok_b && ok_c, format!("{a}; {b}; {c}"))
}

fn criterion_10(scratch: &Path) -> Outcome {
    let err = |e: bapsrl::Error| e.to_string();
    let mut c = small_config(10);
    c.train.total_steps = 4000;
    let mut trainer = Trainer::new(c.clone()).map_err(err)?;
    trainer.train_epoch().map_err(err)?;
    trainer.train_epoch().map_err(err)?;
    let (p1, p2) = (scratch.join("a.ckpt"), scratch.join("b.ckpt"));
    trainer.checkpoint().save(&p1).map_err(err)?;
    let loaded = Checkpoint::load(&p1).map_err(err)?;
    loaded.save(&p2).map_err(err)?;
    let (b1, b2) = (std::fs::read(&p1).map_err(|e| e.to_string())?, std::fs::read(&p2).map_err(|e| e.to_string())?);
    let before = evaluate_policy(&trainer.net, &c, 20, 7, None).map_err(err)?;
    let summary_before = Summary::new(&before).map_err(err)?;
    let (after, summary_after) = eval_checkpoint(&p1, 20, 7, None).map_err(err)?;
    let same_bytes = b1 == b2;
    let same_eval = before == after && summary_before == summary_after;
    check(
        same_bytes && same_eval && loaded == trainer.checkpoint(),
        format!("{} byte checkpoint, re-save identical: {same_bytes}; 20-episode eval identical: {same_eval}", b1.len()),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let root = scratch.path();
    // `BAPSRL_ACCEPTANCE_ONLY=1,2,9` runs a subset; the rest print SKIP.
    let only: Option<Vec<usize>> = std::env::var("BAPSRL_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut failed = Vec::new();
    let mut skipped = 0;
    let mut report = |n: usize, run: &dyn Fn() -> Outcome| {
        if !wanted(n) {
            println!("criterion {n}: SKIP");
            skipped += 1;
            return;
        }
        match run() {
            Ok(d) => println!("criterion {n}: PASS - {d}"),
            Err(d) => {
                println!("criterion {n}: FAIL - {d}");
                failed.push(n);
            }
        }
    };
    report(1, &criterion_1);
    report(2, &criterion_2);
    report(3, &criterion_3);
    report(4, &criterion_4);
    report(5, &|| criterion_5(root));
    let desk = if (6..=8).any(wanted) { desk_runs(root) } else { Err("not run".into()) };
    report(6, &|| criterion_6(&desk));
    report(7, &|| criterion_7(&desk));
    report(8, &|| criterion_8(&desk));
    report(9, &criterion_9);
    report(10, &|| criterion_10(root));
    if failed.is_empty() {
        println!("acceptance: {} of 10 criteria pass, {skipped} skipped", 10 - skipped);
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
