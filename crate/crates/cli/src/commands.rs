use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::info;
use noma_dqn::dqn::{checkpoint, DqnAgent};
use noma_dqn::env::DeviceType;
use noma_dqn::experiment::{
    aggregate, derive_seed, evaluate_greedy, learning_rate_specs, lambda_specs, run_all, train, write_summary_csv,
    GreedyMetrics, RunRecord, RunSpec, SummaryRow, EVAL_STREAM,
};
use serde::Serialize;
use serde_json::json;

use crate::config::RunManifest;
use crate::error::CliError;
use crate::plot::{self, PlotKind};

pub const CONFIG_ECHO: &str = "config.json";
pub const RESULT_FILE: &str = "result.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Parser)]
#[command(name = "noma-dqn", version, about = "NOMA smart-factory simulator with a deep Q-network allocator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per seed with the configured learning rate and lambda.
    Train(RunArgs),
    /// Train one agent per (learning rate, seed) from `experiment.lr_values`.
    SweepLr(RunArgs),
    /// Train one agent per (lambda, seed) from `experiment.lambda_values`.
    SweepLambda(RunArgs),
    /// Greedy evaluation of a saved checkpoint, without training.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint written by a training command.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Render an SVG chart from run or summary CSVs.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Directory receiving `<kind>.svg`.
        #[arg(long, default_value = ".")]
        output: PathBuf,
        /// Overwrite an existing chart.
        #[arg(long)]
        force: bool,
        /// `run_<tag>.csv` files for reward_curve, `summary.csv` files otherwise.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON config with optional sections factory, propagation, agent, experiment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub output: PathBuf,
    /// Comma-separated seeds, replacing `experiment.seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Runs trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_runs("train", &args, |m| {
            let factory = m.config.factory();
            m.seeds
                .iter()
                .map(|&seed| {
                    RunSpec::new(format!("seed{seed}"), factory.clone(), m.config.agent.clone(), &m.config.experiment, seed)
                })
                .collect()
        }),
        Command::SweepLr(args) => cmd_runs("sweep-lr", &args, |m| {
            learning_rate_specs(&m.config.factory(), &m.config.agent, &m.config.experiment)
        }),
        Command::SweepLambda(args) => cmd_runs("sweep-lambda", &args, |m| {
            lambda_specs(&m.config.factory(), &m.config.agent, &m.config.experiment)
        }),
        Command::Evaluate { run, checkpoint } => cmd_evaluate(&run, &checkpoint),
        Command::Plot { kind, output, force, inputs } => cmd_plot(kind, &output, force, &inputs).map(|_| ()),
    }
}

fn manifest(args: &RunArgs) -> Result<RunManifest, CliError> {
    RunManifest::resolve(args.config.as_deref(), &args.output, args.seed.as_deref())
}

/// Refuses a non-empty directory unless forced, then creates it.
pub fn prepare_output(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(CliError::config(format!("output `{}` exists and is not a directory", dir.display())));
        }
        let occupied = std::fs::read_dir(dir)
            .with_context(|| format!("cannot list `{}`", dir.display()))
            .map_err(CliError::Runtime)?
            .next()
            .is_some();
        if occupied && !force {
            return Err(CliError::config(format!(
                "output directory `{}` is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory `{}`", dir.display()))
        .map_err(CliError::Runtime)
}

fn write_with<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    let result = (|| {
        let mut w = BufWriter::new(File::create(path)?);
        body(&mut w)?;
        w.flush()?;
        anyhow::Ok(())
    })();
    result.with_context(|| format!("cannot write `{}`", path.display())).map_err(CliError::Runtime)
}

fn echo_config(m: &RunManifest) -> Result<(), CliError> {
    let path = m.output.join(CONFIG_ECHO);
    write_with(&path, |w| Ok(writeln!(w, "{}", m.config.to_json_pretty())?))
}

#[derive(Debug, Serialize)]
struct RunSummary {
    tag: String,
    seed: u64,
    learning_rate: f64,
    lambda: f64,
    steps: usize,
    final_quarter_mean_reward: f64,
    final_quarter_reward_variance: f64,
    transitions_stored: u64,
    gradient_steps: u64,
    wall_clock_seconds: f64,
    greedy: GreedyMetrics,
    run_csv: String,
    checkpoint: String,
}

#[derive(Debug, Serialize)]
struct RunsResult<'a> {
    command: &'a str,
    tool_version: &'a str,
    config_path: Option<&'a Path>,
    config_hash: String,
    seeds: &'a [u64],
    runs: Vec<RunSummary>,
    summary: Vec<SummaryRow>,
}

fn train_all(specs: &[RunSpec], jobs: usize) -> Result<Vec<(RunRecord, DqnAgent)>, CliError> {
    info!("{} runs, up to {jobs} at a time", specs.len());
    let log_done = |r: &RunRecord| {
        info!(
            "run {} done in {:.1?}: final-quarter mean reward {:.4}, greedy mean reward {:.4}",
            r.tag,
            r.wall_clock,
            r.final_quarter_mean_reward(),
            r.greedy.mean_reward
        )
    };
    if jobs <= 1 {
        specs
            .iter()
            .map(|s| {
                info!("run {} started", s.tag);
                let out = train(s)?;
                log_done(&out.0);
                Ok(out)
            })
            .collect()
    } else {
        let out = run_all(specs, jobs)?;
        out.iter().for_each(|(r, _)| log_done(r));
        Ok(out)
    }
}

fn cmd_runs(command: &str, args: &RunArgs, specs: impl FnOnce(&RunManifest) -> Vec<RunSpec>) -> Result<(), CliError> {
    let m = manifest(args)?;
    let specs = specs(&m);
    prepare_output(&m.output, args.force)?;
    echo_config(&m)?;
    let hash = m.config_hash();

    let results = train_all(&specs, args.jobs as usize)?;
    let mut runs = Vec::with_capacity(results.len());
    for (rec, agent) in &results {
        let csv_name = format!("run_{}.csv", rec.tag);
        let ckpt_name = format!("checkpoint_{}.bin", rec.tag);
        write_with(&m.output.join(&csv_name), |w| Ok(rec.write_csv(w)?))?;
        let meta = json!({
            "tag": rec.tag,
            "seed": rec.seed,
            "learning_rate": rec.learning_rate,
            "lambda": rec.lambda,
            "config_hash": hash,
        });
        write_with(&m.output.join(&ckpt_name), |w| Ok(checkpoint::write_checkpoint(agent, meta, w)?))?;
        runs.push(RunSummary {
            tag: rec.tag.clone(),
            seed: rec.seed,
            learning_rate: rec.learning_rate,
            lambda: rec.lambda,
            steps: rec.steps.len(),
            final_quarter_mean_reward: rec.final_quarter_mean_reward(),
            final_quarter_reward_variance: rec.final_quarter_reward_variance(),
            transitions_stored: rec.transitions_stored,
            gradient_steps: rec.gradient_steps,
            wall_clock_seconds: rec.wall_clock.as_secs_f64(),
            greedy: rec.greedy.clone(),
            run_csv: csv_name,
            checkpoint: ckpt_name,
        });
    }
    let records: Vec<RunRecord> = results.into_iter().map(|(r, _)| r).collect();
    let summary = aggregate(&records)?;
    write_with(&m.output.join(SUMMARY_FILE), |w| Ok(write_summary_csv(&summary, w)?))?;

    for r in &runs {
        println!(
            "{:<28} final-quarter reward {:>10.4}  greedy reward {:>10.4}",
            r.tag, r.final_quarter_mean_reward, r.greedy.mean_reward
        );
    }
    let result = RunsResult {
        command,
        tool_version: &m.tool_version,
        config_path: m.config_path.as_deref(),
        config_hash: hash,
        seeds: &m.seeds,
        runs,
        summary,
    };
    write_with(&m.output.join(RESULT_FILE), |w| Ok(serde_json::to_writer_pretty(&mut *w, &result)?))?;
    println!("wrote {} runs to {}", records.len(), m.output.display());
    Ok(())
}

fn cmd_evaluate(args: &RunArgs, checkpoint_path: &Path) -> Result<(), CliError> {
    let m = manifest(args)?;
    let factory = m.config.factory();
    let (agent, header) = checkpoint::load(checkpoint_path)
        .with_context(|| format!("cannot load checkpoint `{}`", checkpoint_path.display()))
        .map_err(CliError::Runtime)?;
    let (dim, actions) = (agent.eval_params().input_dim(), agent.eval_params().output_dim());
    if dim != factory.state_dim() || actions != noma_dqn::env::action_space_size(&factory) {
        return Err(CliError::config(format!(
            "checkpoint expects {dim} state entries and {actions} actions; the factory config gives {} and {}",
            factory.state_dim(),
            noma_dqn::env::action_space_size(&factory)
        )));
    }
    prepare_output(&m.output, args.force)?;
    echo_config(&m)?;

    let plan = &m.config.experiment;
    let mut evaluations = Vec::new();
    for &seed in &m.seeds {
        let g = evaluate_greedy(&agent, &factory, plan.max_timesteps, plan.eval_episodes, derive_seed(seed, EVAL_STREAM))?;
        println!("seed {seed}: mean reward {:.4}, mean spectral efficiency {:.4}", g.mean_reward, g.mean_spectral_eff);
        for t in DeviceType::ALL {
            let x = g.of(t);
            println!(
                "  {:<10} {:>10.3} Mbps {:>10.3} ms  violations {:.3}",
                t.name(),
                x.throughput_mbps,
                x.latency_ms,
                x.violation_rate
            );
        }
        evaluations.push(json!({ "seed": seed, "greedy": g }));
    }
    let result = json!({
        "command": "evaluate",
        "tool_version": m.tool_version,
        "config_path": m.config_path,
        "config_hash": m.config_hash(),
        "seeds": m.seeds,
        "checkpoint": checkpoint_path,
        "checkpoint_episodes": header.episodes,
        "checkpoint_gradient_steps": header.gradient_steps,
        "evaluations": evaluations,
    });
    write_with(&m.output.join(RESULT_FILE), |w| Ok(serde_json::to_writer_pretty(&mut *w, &result)?))
}

/// Builds the whole chart before touching the file system, so a bad input leaves nothing behind.
pub fn cmd_plot(kind: PlotKind, output: &Path, force: bool, inputs: &[PathBuf]) -> Result<PathBuf, CliError> {
    let target = output.join(kind.file_name());
    if target.exists() && !force {
        return Err(CliError::config(format!("`{}` exists; pass --force to overwrite", target.display())));
    }
    let svg = plot::render_svg(&plot::build_chart(kind, inputs)?);
    std::fs::create_dir_all(output)
        .with_context(|| format!("cannot create `{}`", output.display()))
        .map_err(CliError::Runtime)?;
    write_with(&target, |w| Ok(w.write_all(svg.as_bytes())?))?;
    println!("wrote {}", target.display());
    Ok(target)
}
