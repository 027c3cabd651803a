use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dualarm_core::pipeline::{Config, Pipeline};
use dualarm_core::reactive_planner::Mode;

#[derive(Parser)]
#[command(name = "dualarm", version, about = "Dual-arm latent roadmap pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    n_samples: Option<usize>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n_synthetic: Option<usize>,
    #[arg(long, global = true)]
    d_safe: Option<f64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// A (single goal) or B (three sequential goals).
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample labelled pose pairs -> dataset.jsonl
    GenData,
    /// Tag contact points and place sensors -> placement.json, histograms/
    PlaceSensors,
    /// Train the VAE -> model.json, loss.csv, vae_eval.json
    TrainVae,
    /// Build the latent roadmap -> graph.json, latent.csv
    BuildGraph,
    /// Run episodes of the configured mode -> episodes/
    RunEpisodes,
    /// Mode A and B benchmark -> bench/
    Bench,
    /// Demo replanning episode and path overlays -> plots/
    ExportPlots,
    /// Every stage in order.
    All,
}

fn load_config(c: &Common) -> Result<Config> {
    let mut cfg = match &c.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.n_samples {
        cfg.data.n_samples = v;
    }
    if let Some(v) = c.k {
        cfg.graph.k = v;
    }
    if let Some(v) = c.n_synthetic {
        cfg.graph.n_synthetic = v;
    }
    if let Some(v) = c.d_safe {
        cfg.episodes.d_safe = v;
    }
    if let Some(v) = c.episodes {
        cfg.episodes.episodes = v;
    }
    if let Some(v) = c.epochs {
        cfg.vae.epochs = v;
    }
    if let Some(m) = &c.mode {
        cfg.episodes.mode = Mode::parse(m).with_context(|| format!("--mode must be A or B, got {m:?}"))?;
    }
    if cfg.data.n_samples == 0 {
        bail!("--n-samples must be at least 1");
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let p = Pipeline::new(cfg, &cli.common.out, cli.common.config.as_deref())?;
    let all = matches!(cli.command, Command::All);
    if all || matches!(cli.command, Command::GenData) {
        let ds = p.gen_data().context("gen-data")?;
        println!("gen-data: {} samples, {:.1}% colliding", ds.len(), 100.0 * ds.collision_fraction());
    }
    if all || matches!(cli.command, Command::PlaceSensors) {
        let set = p.place_sensors().context("place-sensors")?;
        println!(
            "place-sensors: {} sensors placed, {} faces with too few hits",
            set.placements.len(),
            set.insufficient.len()
        );
    }
    if all || matches!(cli.command, Command::TrainVae) {
        let every = (p.cfg.vae.epochs / 10).max(1);
        let (_, eval) = p
            .train_vae(|e| {
                if e.epoch % every == 0 {
                    eprintln!("epoch {:>4}  loss {:.5}  recon {:.5}  kl {:.4}", e.epoch, e.loss, e.recon, e.kl);
                }
            })
            .context("train-vae")?;
        println!(
            "train-vae: final loss {:.5}; held-out accuracy logistic {:.1}%, decoder {:.1}%",
            eval.final_loss,
            100.0 * eval.heldout_logistic_accuracy,
            100.0 * eval.heldout_decoder_accuracy
        );
    }
    if all || matches!(cli.command, Command::BuildGraph) {
        let g = p.build_graph().context("build-graph")?;
        println!(
            "build-graph: {} nodes, {} edges, largest safe component {}",
            g.len(),
            g.n_edges(),
            g.largest_component().len()
        );
    }
    if all || matches!(cli.command, Command::RunEpisodes) {
        let run = p.run_episodes().context("run-episodes")?;
        println!("run-episodes: {}", run.summary_line());
    }
    if all || matches!(cli.command, Command::Bench) {
        for run in p.bench().context("bench")? {
            println!("bench: {}", run.summary_line());
        }
    }
    if all || matches!(cli.command, Command::ExportPlots) {
        let res = p.export_plots().context("export-plots")?;
        println!(
            "export-plots: demo episode with {} replans, success {}",
            res.outcome.replans, res.outcome.success
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
