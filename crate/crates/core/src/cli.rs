//! Command-line entry points.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Maneuver};
use crate::error::{Error, Result};
use crate::evalkit::{gradient_conflict, negative_fractions, plot_rows, CosineRow, EpisodeRecord, MeanStd, Summary};
use crate::learner::rollout::Collector;
use crate::learner::{compute_advantages, evaluate_policy, EpochReport, Trainer};
use crate::logs::{read_jsonl, JsonlWriter};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::ActorCritic;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BAPSRL_OUT";
const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "bapsrl", version, about = "Gated multi-constraint PPO-Lagrangian on a synthetic intersection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write metrics, diagnostics and checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint with the deterministic policy.
    Eval(EvalArgs),
    /// Gradient-conflict diagnostic for a run directory or a checkpoint.
    Diagnose(DiagnoseArgs),
    /// Train and evaluate ablation variants across seeds.
    Ablate(AblateArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// TOML config file; omitted keys keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set strategy=uniform` or `--set train.gamma=0.95`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<Config> {
        match &self.config {
            Some(p) => Config::load_with_overrides(p, &self.overrides),
            None => Config::from_toml_str("", &self.overrides),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $BAPSRL_OUT or ./runs, plus a run id).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub maneuver: Option<Maneuver>,
    /// Directory for episode records and the summary table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Run directory with a gradient-conflict log.
    #[arg(long, conflicts_with = "checkpoint")]
    pub run: Option<PathBuf>,
    /// Checkpoint to probe with a freshly collected batch.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write `(epoch, pair, cosine)` rows here as JSON lines.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',', default_value = "full,no_prior,no_likelihood,flat_rho,uniform,minmax")]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| ()),
        Command::Eval(a) => cmd_eval(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Ablate(a) => cmd_ablate(a),
    }
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Deterministic identifier: config hash prefix plus seed.
pub fn run_id(config: &Config) -> String {
    format!("{}-s{}", &config.content_hash()[..12], config.train.seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: Config,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub epochs_completed: usize,
    pub checkpoints: Vec<PathBuf>,
    /// Set when training aborted.
    pub error: Option<String>,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    run_id: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConflictRecord {
    pub run_id: String,
    pub epoch: usize,
    pub norms: Vec<f64>,
    pub zero: Vec<bool>,
    pub cosine: Vec<Vec<f64>>,
}

pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub run_id: String,
    pub net: ActorCritic,
    pub reports: Vec<EpochReport>,
}

/// Trains `config` to completion, writing artifacts to `out_dir`.
pub fn train_run(config: Config, out_dir: &Path, quiet: bool) -> Result<TrainOutcome> {
    create_dir(out_dir)?;
    let ck_dir = out_dir.join("checkpoints");
    create_dir(&ck_dir)?;
    let id = run_id(&config);
    let mut manifest = RunManifest {
        run_id: id.clone(),
        config_hash: config.content_hash(),
        seed: config.train.seed,
        config: config.clone(),
        started_unix: now(),
        finished_unix: None,
        epochs_completed: 0,
        checkpoints: Vec::new(),
        error: None,
    };
    config.save(out_dir.join("config.toml"))?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    let mut metrics = JsonlWriter::create(out_dir.join("metrics.jsonl"))?;
    let mut gates = JsonlWriter::create(out_dir.join("bap_diagnostics.jsonl"))?;
    let mut conflicts = JsonlWriter::create(out_dir.join("gradient_conflict.jsonl"))?;
    let mut evals = JsonlWriter::create(out_dir.join("eval.jsonl"))?;

    let mut trainer = Trainer::new(config.clone())?;
    let save = |trainer: &Trainer, name: &str, manifest: &mut RunManifest| -> Result<()> {
        let path = ck_dir.join(name);
        trainer.checkpoint().save(&path)?;
        manifest.checkpoints.push(PathBuf::from("checkpoints").join(name));
        Ok(())
    };
    save(&trainer, "epoch_0000.ckpt", &mut manifest)?;

    let epochs = config.num_epochs();
    let mut reports = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let out = match trainer.train_epoch() {
            Ok(o) => o,
            Err(err) => {
                manifest.error = Some(err.to_string());
                manifest.finished_unix = Some(now());
                write_json(&out_dir.join("manifest.json"), &manifest)?;
                metrics.write(&serde_json::json!({ "run_id": id, "epoch": e, "error": err.to_string() }))?;
                return Err(err);
            }
        };
        let r = &out.report;
        metrics.write(&Tagged { run_id: &id, record: r })?;
        gates.write(&serde_json::json!({ "run_id": id, "epoch": r.epoch, "gates": r.gates }))?;
        if let Some(c) = &out.conflict {
            conflicts.write(&ConflictRecord {
                run_id: id.clone(),
                epoch: c.epoch,
                norms: c.norms.clone(),
                zero: c.zero.clone(),
                cosine: c.cosine.clone(),
            })?;
        }
        if !quiet {
            eprintln!(
                "[{id}] epoch {}/{epochs} steps {} episodes {} reward {} cr {} λ_sparse [{}]",
                e + 1,
                r.env_steps,
                r.episodes,
                r.mean_episode_reward.map_or("-".into(), |v| format!("{v:.1}")),
                r.collision_rate.map_or("-".into(), |v| format!("{:.1}%", 100.0 * v)),
                r.lambda_after[..3].iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>().join(" "),
            );
        }
        let interval = config.train.checkpoint_interval;
        if interval > 0 && (e + 1) % interval == 0 && e + 1 < epochs {
            save(&trainer, &format!("epoch_{:04}.ckpt", e + 1), &mut manifest)?;
        }
        if config.train.eval_interval > 0 && (e + 1) % config.train.eval_interval == 0 {
            let recs = evaluate_policy(&trainer.net, &config, config.train.eval_episodes, config.train.seed, None)?;
            let summary = Summary::new(&recs)?;
            evals.write(&serde_json::json!({ "run_id": id, "epoch": e, "summary": summary }))?;
        }
        manifest.epochs_completed = e + 1;
        reports.push(out.report);
    }
    save(&trainer, "final.ckpt", &mut manifest)?;
    metrics.flush()?;
    manifest.finished_unix = Some(now());
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(TrainOutcome {
        out_dir: out_dir.to_path_buf(),
        run_id: id,
        net: trainer.net,
        reports,
    })
}

pub fn cmd_train(args: TrainArgs) -> Result<TrainOutcome> {
    let mut config = args.config.load()?;
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| default_out().join(run_id(&config)));
    let outcome = train_run(config, &out, args.quiet)?;
    println!("run {} written to {}", outcome.run_id, outcome.out_dir.display());
    Ok(outcome)
}

/// Evaluates a checkpoint; returns its records and summary.
pub fn eval_checkpoint(path: &Path, episodes: usize, seed: u64, maneuver: Option<Maneuver>) -> Result<(Vec<EpisodeRecord>, Summary)> {
    if episodes == 0 {
        return Err(Error::usage("--episodes must be at least 1"));
    }
    let ck = Checkpoint::load(path)?;
    let records = evaluate_policy(&ck.net, &ck.config, episodes, seed, maneuver)?;
    let summary = Summary::new(&records)?;
    Ok((records, summary))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (records, summary) = eval_checkpoint(&args.checkpoint, args.episodes, args.seed, args.maneuver)?;
    let table = summary.to_table();
    if let Some(out) = &args.out {
        create_dir(out)?;
        let mut w = JsonlWriter::create(out.join("episodes.jsonl"))?;
        for r in &records {
            w.write(r)?;
        }
        w.flush()?;
        std::fs::write(out.join("summary.tsv"), &table).map_err(|e| Error::io(out.join("summary.tsv"), e))?;
    }
    print!("{table}");
    Ok(())
}

/// Plot rows from a run directory's conflict log, or from a fresh batch
/// collected with a checkpoint's policy.
pub fn diagnose_rows(run: Option<&Path>, checkpoint: Option<&Path>, seed: u64) -> Result<Vec<CosineRow>> {
    match (run, checkpoint) {
        (Some(dir), None) => {
            let path = dir.join("gradient_conflict.jsonl");
            if !path.exists() {
                return Err(Error::usage(format!("{} not found; was the run trained with diag_samples > 0?", path.display())));
            }
            let recs: Vec<ConflictRecord> = read_jsonl(&path)?;
            if recs.is_empty() {
                return Err(Error::usage(format!("{} holds no epochs", path.display())));
            }
            Ok(recs
                .into_iter()
                .flat_map(|r| {
                    plot_rows(&crate::evalkit::GradientSnapshot {
                        epoch: r.epoch,
                        norms: r.norms,
                        zero: r.zero,
                        cosine: r.cosine,
                        gradients: Vec::new(),
                    })
                })
                .collect())
        }
        (None, Some(ck_path)) => {
            let ck = Checkpoint::load(ck_path)?;
            let mut config = ck.config.clone();
            config.train.seed = seed;
            let mut collector = Collector::new(&config);
            let steps = config.train.steps_per_epoch.min(config.train.diag_samples.max(1) * 4);
            let batch = collector.collect(&ck.net, &ck.value_norm, steps)?;
            let adv = compute_advantages(&batch, &ck.lagrange, &config);
            let rows: Vec<usize> = (0..batch.len()).collect();
            let snap = gradient_conflict(
                ck.epoch as usize,
                &ck.net,
                batch.feature_matrix(&rows),
                &batch.raw_actions,
                &batch.log_prob_old,
                &adv.adv_r,
                &adv.adv_c,
            )?;
            Ok(plot_rows(&snap))
        }
        _ => Err(Error::usage("diagnose needs exactly one of --run or --checkpoint")),
    }
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let rows = diagnose_rows(args.run.as_deref(), args.checkpoint.as_deref(), args.seed)?;
    if let Some(path) = &args.emit_plot_data {
        let mut w = JsonlWriter::create(path)?;
        for r in &rows {
            w.write(r)?;
        }
        w.flush()?;
    }
    println!("pair\tnegative_epoch_fraction");
    for (pair, frac) in negative_fractions(&rows, false) {
        println!("{pair}\t{frac:.3}");
    }
    Ok(())
}

pub const VARIANTS: [&str; 6] = ["full", "no_prior", "no_likelihood", "flat_rho", "uniform", "minmax"];

/// Overrides defining an ablation variant.
pub fn variant_overrides(name: &str) -> Result<Vec<String>> {
    let v: &[&str] = match name {
        "full" => &[],
        "no_prior" => &["alpha=0", "rho=[0.0, 0.0, 0.0]"],
        "no_likelihood" => &["beta=0"],
        "flat_rho" => &["rho=[-2.0, -2.0, -2.0]"],
        "uniform" => &["strategy=uniform"],
        "minmax" => &["strategy=minmax"],
        other => {
            return Err(Error::usage(format!(
                "unknown variant `{other}`; valid variants: {}",
                VARIANTS.join(", ")
            )))
        }
    };
    Ok(v.iter().map(|s| s.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub collision_rate: f64,
    pub mean_return: f64,
    pub success_rate: f64,
}

/// Trains and evaluates every `(variant, seed)` pair sequentially.
pub fn run_ablation(base: &Config, variants: &[String], seeds: &[u64], episodes: usize, out: &Path, quiet: bool) -> Result<Vec<AblationRow>> {
    for v in variants {
        variant_overrides(v)?;
    }
    create_dir(out)?;
    let mut log = JsonlWriter::append(out.join("ablation.jsonl"))?;
    let mut rows = Vec::new();
    for v in variants {
        for &seed in seeds {
            let mut config = base.with_overrides(&variant_overrides(v)?)?;
            config.train.seed = seed;
            let outcome = train_run(config.clone(), &out.join(v).join(format!("seed_{seed}")), quiet)?;
            let records = evaluate_policy(&outcome.net, &config, episodes, seed, None)?;
            let s = Summary::new(&records)?;
            let success = records.iter().filter(|r| r.success()).count() as f64 / records.len() as f64;
            let row = AblationRow {
                variant: v.clone(),
                seed,
                collision_rate: s.collision_rate.total,
                mean_return: s.episode_return.mean,
                success_rate: 100.0 * success,
            };
            if !quiet {
                eprintln!("{v} seed {seed}: CR {:.2}% return {:.2}", row.collision_rate, row.mean_return);
            }
            log.write(&row)?;
            log.flush()?;
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow], variants: &[String]) -> String {
    let mut s = String::from("variant\tseeds\tcollision_rate_pct\tmean_return\tsuccess_pct\n");
    for v in variants {
        let sel: Vec<&AblationRow> = rows.iter().filter(|r| &r.variant == v).collect();
        let col = |f: &dyn Fn(&AblationRow) -> f64| MeanStd::of(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
        let fmt = |m: Option<MeanStd>| m.map_or("-".to_string(), |m| format!("{:.2} ± {:.2}", m.mean, m.std));
        s += &format!(
            "{v}\t{}\t{}\t{}\t{}\n",
            sel.len(),
            fmt(col(&|r| r.collision_rate)),
            fmt(col(&|r| r.mean_return)),
            fmt(col(&|r| r.success_rate)),
        );
    }
    s
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let base = args.config.load()?;
    let out = args.out.unwrap_or_else(|| default_out().join("ablation"));
    let episodes = args.episodes.unwrap_or(base.train.eval_episodes);
    let rows = run_ablation(&base, &args.variants, &args.seeds, episodes, &out, false)?;
    let table = ablation_table(&rows, &args.variants);
    std::fs::write(out.join("ablation.tsv"), &table).map_err(|e| Error::io(out.join("ablation.tsv"), e))?;
    print!("{table}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_map_to_overrides() {
        let base = Config::default();
        let np = base.with_overrides(&variant_overrides("no_prior").unwrap()).unwrap();
        assert_eq!(np.bap.alpha, 0.0);
        assert_eq!(np.bap.rho, [0.0; 3]);
        assert_eq!(np.bap.beta, base.bap.beta);
        let flat = base.with_overrides(&variant_overrides("flat_rho").unwrap()).unwrap();
        assert_eq!(flat.bap.rho, [-2.0; 3]);
        let u = base.with_overrides(&variant_overrides("uniform").unwrap()).unwrap();
        assert_eq!(u.bap.strategy, crate::Strategy::Uniform);
        assert_eq!(
            Config { bap: crate::config::BapConfig { strategy: crate::Strategy::Bap, ..u.bap.clone() }, ..u.clone() },
            base
        );
        let err = variant_overrides("bogus").unwrap_err().to_string();
        assert!(err.contains("no_likelihood") && err.contains("minmax"));
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["bapsrl", "train", "--set", "strategy=uniform", "--seed", "3"]).unwrap();
        match cli.command {
            Command::Train(a) => {
                assert_eq!(a.seed, Some(3));
                assert_eq!(a.config.load().unwrap().bap.strategy, crate::Strategy::Uniform);
            }
            _ => panic!("expected train"),
        }
        let cli = Cli::try_parse_from(["bapsrl", "eval", "--checkpoint", "x", "--maneuver", "right"]).unwrap();
        assert!(matches!(cli.command, Command::Eval(EvalArgs { maneuver: Some(Maneuver::Right), .. })));
        assert!(Cli::try_parse_from(["bapsrl", "eval", "--checkpoint", "x", "--maneuver", "uturn"]).is_err());
    }
}
