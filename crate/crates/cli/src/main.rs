use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use uavir_core::agent::{load_agent, persist_agent};
use uavir_core::experiment::{
    dump_return_distributions, resolve_power_threshold, run_los_probability_experiment,
    run_rate_vs_power_experiment, train, ExperimentConfig, MetricsReport,
};
use uavir_core::QuantileTable;

#[derive(Parser)]
#[command(name = "uavir", about = "UAV-mounted reflector placement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the placement agent and write agent.json.
    Train(Common),
    /// LOS probability versus UAV starting altitude.
    EvalLos(Common),
    /// Time-average rate versus BS power budget.
    EvalRate(Common),
    /// Per-action return distributions at the configured query state.
    DumpReturns(Common),
    /// Train (if needed) and run every experiment.
    RunAll(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training and calibration seed (overrides `train_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)
                .with_context(|| format!("loading config {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
        Ok(cfg)
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn agent_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.join("agent.json")
}

fn run_train(cfg: &ExperimentConfig) -> Result<QuantileTable> {
    let outcome = train(cfg)?;
    persist_agent(&outcome.table, &agent_path(cfg))?;
    eprintln!("wrote {}", agent_path(cfg).display());
    let summary = serde_json::json!({
        "config_hash": cfg.config_hash(),
        "train_seed": cfg.train_seed,
        "episodes": outcome.episodes,
        "slots": outcome.slots,
        "power_threshold_w": outcome.power_threshold,
        "visited_entries": outcome.table.len(),
        "episode_average_rate_bps": outcome.mean_episode_rate,
    });
    write(
        &cfg.output_dir.join("train_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(outcome.table)
}

/// Loads `agent.json` from the output directory, training first if absent.
fn obtain_agent(cfg: &ExperimentConfig) -> Result<QuantileTable> {
    let path = agent_path(cfg);
    if path.exists() {
        Ok(load_agent(&path, cfg.sim.ue_count, cfg.q_count)
            .with_context(|| format!("loading {}", path.display()))?)
    } else {
        run_train(cfg)
    }
}

fn write_report(cfg: &ExperimentConfig, stem: &str, report: &MetricsReport) -> Result<()> {
    write(&cfg.output_dir.join(format!("{stem}.csv")), &report.to_csv())?;
    write(
        &cfg.output_dir.join(format!("{stem}_summary.json")),
        &report.summary_json(cfg)?,
    )?;
    for s in report.summary() {
        println!(
            "{stem} {}={} {:<12} los={:.4} rate_bps={:.6e}",
            report.sweep_name,
            s.sweep_value,
            s.policy.name(),
            s.los_probability,
            s.avg_rate_bps
        );
    }
    Ok(())
}

fn eval_los(cfg: &ExperimentConfig, table: &QuantileTable) -> Result<()> {
    let tau = resolve_power_threshold(cfg)?;
    let report = run_los_probability_experiment(cfg, table, tau)?;
    write_report(cfg, "los", &report)
}

fn eval_rate(cfg: &ExperimentConfig, table: &QuantileTable) -> Result<()> {
    let report = run_rate_vs_power_experiment(cfg, table)?;
    write_report(cfg, "rate", &report)
}

fn dump_returns(cfg: &ExperimentConfig, table: &QuantileTable) -> Result<()> {
    let readout = dump_return_distributions(table, &cfg.query_state())?;
    write(&cfg.output_dir.join("returns.csv"), &readout.to_csv())?;
    write(
        &cfg.output_dir.join("returns.json"),
        &serde_json::to_string_pretty(&readout)?,
    )?;
    println!("state {} argmax {}", readout.state, readout.argmax_action);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(c) => {
            let cfg = c.resolve()?;
            run_train(&cfg)?;
        }
        Command::EvalLos(c) => {
            let cfg = c.resolve()?;
            eval_los(&cfg, &obtain_agent(&cfg)?)?;
        }
        Command::EvalRate(c) => {
            let cfg = c.resolve()?;
            eval_rate(&cfg, &obtain_agent(&cfg)?)?;
        }
        Command::DumpReturns(c) => {
            let cfg = c.resolve()?;
            let path = agent_path(&cfg);
            let table = load_agent(&path, cfg.sim.ue_count, cfg.q_count)
                .with_context(|| format!("loading {}", path.display()))?;
            dump_returns(&cfg, &table)?;
        }
        Command::RunAll(c) => {
            let cfg = c.resolve()?;
            write(&cfg.output_dir.join("config.txt"), &cfg.to_text())?;
            let table = obtain_agent(&cfg)?;
            eval_los(&cfg, &table)?;
            eval_rate(&cfg, &table)?;
            dump_returns(&cfg, &table)?;
        }
    }
    Ok(())
}
