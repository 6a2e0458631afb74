mod config;
mod plot;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use probid::cdpr::sampling_distribution;
use probid::cro::{write_metrics_csv, Variant};
use probid::dataset::{load_dataset, save_dataset, DatasetManifest};
use probid::eval::write_episodes_csv;
use probid::experiments::{dataset_seed_base, eval_seed_base, sweep_k, write_csv, TrainedModel};

/// Constrained auto-bidding lab: generate logs, train pacing policies,
/// evaluate and plot.
#[derive(Parser, Debug)]
#[command(name = "probid", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "configs/desk.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Roll out the behavior policies and write the offline log.
    GenData,
    /// Train a policy on the offline log.
    Train {
        /// Which component to remove.
        #[arg(long, default_value = "none")]
        ablation: Variant,
        /// Offline log; defaults to the one `gen-data` wrote under --out.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run closed-loop episodes with a trained checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Multiplies every campaign budget.
        #[arg(long)]
        budget_scale: Option<f64>,
    },
    /// Write the per-trajectory frontier and sampling-weight diagnostics.
    Pareto {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Render CSV outputs as an SVG chart.
    Plot {
        /// One or more CSVs of the same kind; sweeps get one series per file.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Column to plot on the y axis.
        #[arg(long)]
        y: Option<String>,
    },
    /// Evaluate checkpoints under a range of CPA targets.
    SweepCpa {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated targets; defaults to `eval.cpa_targets`.
        #[arg(long, value_delimiter = ',')]
        targets: Vec<f64>,
    },
    /// Train the full method for each counterfactual count K.
    SweepK {
        /// Comma-separated counts; defaults to `sweep_k.ks`.
        #[arg(long, value_delimiter = ',')]
        ks: Vec<usize>,
        /// Comma-separated seeds; defaults to `sweep_k.seeds`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

/// The manifest plus the run seed it was generated under.
#[derive(Serialize)]
struct ManifestFile<'a> {
    seed: u64,
    noise_fraction: f64,
    #[serde(flatten)]
    manifest: &'a DatasetManifest,
}

#[derive(Serialize)]
struct ParetoRow {
    index: usize,
    total_reward: f64,
    total_cost: f64,
    r_norm: f64,
    c_norm: f64,
    on_frontier: bool,
    s_eff: f64,
    s_com: f64,
    s_len: f64,
    q: f64,
    prob: f64,
}

fn effective_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&g.config)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    if let Some(t) = g.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        cfg.threads = t;
    }
    Ok(cfg)
}

/// Creates `dir` and records the effective configuration in it.
fn run_dir(cfg: &ExperimentConfig, name: &str) -> Result<PathBuf> {
    let dir = cfg.out.join(name);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).context("writing config snapshot")?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn data_path(cfg: &ExperimentConfig, given: &Option<PathBuf>) -> Result<PathBuf> {
    let p = given.clone().unwrap_or_else(|| cfg.out.join("data").join("dataset.jsonl"));
    if !p.is_file() {
        bail!("dataset not found at {}; run `probid gen-data` first or pass --data", p.display());
    }
    Ok(p)
}

fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let recipe = cfg.recipe()?;
    let ds = recipe.dataset(cfg.seed, cfg.dataset.noise_fraction)?;
    let dir = run_dir(cfg, "data")?;
    save_dataset(&dir.join("dataset.jsonl"), &ds.trajectories)?;
    let m = ManifestFile {
        seed: cfg.seed,
        noise_fraction: cfg.dataset.noise_fraction,
        manifest: &ds.manifest,
    };
    serde_json::to_writer_pretty(create(&dir.join("manifest.json"))?, &m)?;
    let summary = probid::eval::EvalSummary::of_dataset(&ds.trajectories, cfg.eval.score_exponent);
    println!(
        "wrote {} trajectories to {} (seed {}, seeds {}..={})",
        ds.manifest.count,
        dir.display(),
        cfg.seed,
        ds.manifest.seed_first,
        ds.manifest.seed_last
    );
    println!(
        "behavior: mean value {:.3}, mean score {:.3}, exceed rate {:.3}",
        summary.mean_value, summary.mean_score, summary.er
    );
    if let Some((lo, hi)) = ds.manifest.ratio_spread() {
        println!("realized CPA spread {lo:.3}..{hi:.3}");
    }
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig, variant: Variant, data: &Option<PathBuf>) -> Result<()> {
    let path = data_path(cfg, data)?;
    let trajectories = load_dataset(&path)?;
    let recipe = cfg.recipe()?;
    let dir = run_dir(cfg, &format!("train-{}", variant.name()))?;
    eprintln!("training {} for {} steps on {}", variant.name(), cfg.train.max_steps, path.display());
    let out = recipe.train(&trajectories, variant, cfg.seed, true)?;
    out.model.save(&dir.join("model.ckpt"))?;
    write_metrics_csv(create(&dir.join("metrics.csv"))?, &out.log)?;
    println!("wrote {}", dir.join("model.ckpt").display());
    if let Some(s) = out.final_eval {
        println!(
            "final evaluation: score {:.3}, value {:.3}, mean AR {:.3}, ER {:.3}",
            s.mean_score, s.mean_value, s.mean_ar, s.er
        );
    }
    Ok(())
}

fn evaluate_cmd(cfg: &ExperimentConfig, checkpoint: &Path, budget_scale: Option<f64>) -> Result<()> {
    let model = TrainedModel::load(checkpoint)?;
    let mut spec = cfg.recipe()?.eval_spec(cfg.seed);
    if let Some(b) = budget_scale {
        spec.budget_scale = b;
    }
    let report = model.evaluate(&spec, cfg.threads)?;
    let dir = run_dir(cfg, "eval")?;
    write_episodes_csv(&dir.join("episodes.csv"), &report.episodes)?;
    write_csv(create(&dir.join("summary.csv"))?, std::slice::from_ref(&report.summary))?;
    let s = &report.summary;
    println!(
        "episodes {} | value {:.3} | score {:.3} | mean AR {:.3} | pooled AR {:.3} | ER {:.3}",
        s.episodes, s.mean_value, s.mean_score, s.mean_ar, s.pooled_ar, s.er
    );
    println!("episode seeds start at {}; wrote {}", eval_seed_base(cfg.seed), dir.display());
    Ok(())
}

fn pareto_cmd(cfg: &ExperimentConfig, data: &Option<PathBuf>) -> Result<()> {
    let trajectories = load_dataset(&data_path(cfg, data)?)?;
    let scores = sampling_distribution(&trajectories, &cfg.filter)?;
    let rows: Vec<ParetoRow> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| ParetoRow {
            index: i,
            total_reward: s.point.r,
            total_cost: s.point.c,
            r_norm: s.point.r_norm,
            c_norm: s.point.c_norm,
            on_frontier: s.on_frontier,
            s_eff: s.s_eff,
            s_com: s.s_com,
            s_len: s.s_len,
            q: s.q,
            prob: s.prob,
        })
        .collect();
    let dir = run_dir(cfg, "pareto")?;
    write_csv(create(&dir.join("pareto.csv"))?, &rows)?;
    let front = rows.iter().filter(|r| r.on_frontier).count();
    let mass: f64 = rows.iter().filter(|r| r.on_frontier).map(|r| r.prob).sum();
    println!(
        "{} trajectories, {front} on the frontier holding {:.1}% of the sampling mass; wrote {}",
        rows.len(),
        100.0 * mass,
        dir.join("pareto.csv").display()
    );
    Ok(())
}

fn sweep_cpa_cmd(cfg: &ExperimentConfig, checkpoints: &[PathBuf], targets: &[f64]) -> Result<()> {
    let targets = if targets.is_empty() { &cfg.eval.cpa_targets[..] } else { targets };
    if targets.is_empty() {
        bail!("no CPA targets given and `eval.cpa_targets` is empty");
    }
    let spec = cfg.recipe()?.eval_spec(cfg.seed);
    let dir = run_dir(cfg, "sweep-cpa")?;
    for (i, ck) in checkpoints.iter().enumerate() {
        let model = TrainedModel::load(ck)?;
        let rows = model.cpa_sweep(&spec, targets, cfg.threads)?;
        // label by the run directory the checkpoint lives in
        let label = ck
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("checkpoint{i}"));
        let mut path = dir.join(format!("{label}.csv"));
        if checkpoints.len() > 1 && checkpoints[..i].iter().any(|o| o.parent() == ck.parent()) {
            path = dir.join(format!("{label}-{i}.csv"));
        }
        write_csv(create(&path)?, &rows)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn sweep_k_cmd(cfg: &ExperimentConfig, ks: &[usize], seeds: &[u64]) -> Result<()> {
    let ks = if ks.is_empty() { &cfg.sweep_k.ks[..] } else { ks };
    let seeds = if seeds.is_empty() { &cfg.sweep_k.seeds[..] } else { seeds };
    if ks.is_empty() || seeds.is_empty() {
        bail!("sweep-k needs at least one K and one seed");
    }
    let recipe = cfg.recipe()?;
    let rows = sweep_k(&recipe, ks, seeds)?;
    let dir = run_dir(cfg, "sweep-k")?;
    let path = dir.join("sweep_k.csv");
    write_csv(create(&path)?, &rows)?;
    for r in &rows {
        println!("K={:<3} seed {} score {:.3} ER {:.3}", r.k, r.seed, r.score, r.er);
    }
    println!("wrote {} (dataset seeds from {})", path.display(), dataset_seed_base(seeds[0]));
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Command::Plot { inputs, output, y } = &cli.command {
        let kind = plot::plot(inputs, output, y.as_deref())?;
        println!("wrote {} ({kind:?})", output.display());
        return Ok(());
    }
    let cfg = effective_config(&cli.global)?;
    match &cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Train { ablation, data } => train_cmd(&cfg, *ablation, data),
        Command::Evaluate {
            checkpoint,
            budget_scale,
        } => evaluate_cmd(&cfg, checkpoint, *budget_scale),
        Command::Pareto { data } => pareto_cmd(&cfg, data),
        Command::SweepCpa { checkpoints, targets } => sweep_cpa_cmd(&cfg, checkpoints, targets),
        Command::SweepK { ks, seeds } => sweep_k_cmd(&cfg, ks, seeds),
        Command::Plot { .. } => unreachable!("handled above"),
    }
}
