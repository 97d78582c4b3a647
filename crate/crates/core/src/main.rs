use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use pvp::agent::Agent;
use pvp::analysis::{bound_report, render_table, trajectories_from_metrics, AnalysisError};
use pvp::buffers::BufferLogReader;
use pvp::harness::{evaluate, replay, resolve_config, train, AgentPolicy, HarnessError, InterventionConfig, RunConfig};
use pvp::live::{serve, LiveConfig};

#[derive(Parser)]
#[command(name = "pvp", version, about = "Reward-free learning from active human intervention")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in starting point when no config is given: `gridworld[:SIZE]` or `lanekeep`.
    #[arg(long, default_value = "gridworld:6")]
    preset: String,
    /// Field overrides, `--key value` with dotted paths (e.g. `--pvp.lr 3e-4`).
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train under a scripted oracle (or none).
    Train(ConfigArgs),
    /// Evaluate a checkpoint with interventions disabled.
    Eval {
        /// Run directory holding config.json and checkpoints/.
        #[arg(long)]
        run: PathBuf,
        /// Checkpoint directory; defaults to <run>/checkpoints/final.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Offset into the evaluation seed block.
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Compare measured intent violation with the error-rate bound.
    AnalyzeBound {
        /// metrics.csv, or a run directory containing one.
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Name of the violation predicate, copied into the report.
        #[arg(long, default_value = "env")]
        predicate: String,
        /// Where to write the JSON report; the table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with a live WebSocket session attached.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        hz: Option<f64>,
        #[arg(long)]
        host: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-run training from a recorded buffers.log and save the result.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Output directory for the checkpoint and eval report.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Harness(e) => e.exit_code() as u8,
            CliError::Analysis(AnalysisError::BadGamma(_)) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn preset(name: &str) -> Result<RunConfig, CliError> {
    match name.split_once(':') {
        None if name == "lanekeep" => Ok(RunConfig::lanekeep()),
        None if name == "gridworld" => Ok(RunConfig::gridworld(6)),
        Some(("gridworld", n)) => n
            .parse()
            .map(RunConfig::gridworld)
            .map_err(|_| CliError::Usage(format!("bad grid size `{n}`"))),
        _ => Err(CliError::Usage(format!("unknown preset `{name}`"))),
    }
}

fn pairs(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    if raw.len() % 2 != 0 {
        return Err(CliError::Usage(format!("override `{}` has no value", raw[raw.len() - 1])));
    }
    raw.chunks(2)
        .map(|c| match c[0].strip_prefix("--") {
            Some(k) => Ok((k.to_string(), c[1].clone())),
            None => Err(CliError::Usage(format!("expected `--key value`, got `{}`", c[0]))),
        })
        .collect()
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let base = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?
        }
        None => preset(&args.preset)?,
    };
    Ok(resolve_config(&base, &pairs(&args.overrides)?)?)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Train(args) => {
            let cfg = load_config(&args)?;
            info!("training {} on {}", serde_json::to_string(&cfg.agent_kind).unwrap_or_default(), cfg.env.id());
            let out = train(cfg)?;
            print_json(&out.summary);
        }
        Cmd::Eval {
            run,
            checkpoint,
            episodes,
            seed_offset,
        } => {
            let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(run.join("config.json"))?)
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            let ckpt = checkpoint.unwrap_or_else(|| run.join("checkpoints").join("final"));
            let (agent, manifest) = Agent::load(&ckpt).map_err(HarnessError::from)?;
            if manifest.env_id != cfg.env.id() {
                return Err(CliError::Usage(format!("checkpoint is for {}, run is {}", manifest.env_id, cfg.env.id())));
            }
            let report = evaluate(
                &mut AgentPolicy::new(&agent),
                &cfg.env,
                episodes.unwrap_or(cfg.eval_episodes),
                seed_offset,
                manifest.step,
            )?;
            print_json(&report);
        }
        Cmd::AnalyzeBound {
            metrics,
            gamma,
            predicate,
            out,
        } => {
            let path = if metrics.is_dir() { metrics.join("metrics.csv") } else { metrics };
            let trajs = trajectories_from_metrics(&path)?;
            let report = bound_report(&trajs, gamma, &predicate)?;
            print!("{}", render_table(&report));
            if let Some(out) = out {
                fs::write(out, serde_json::to_string_pretty(&report).expect("serializable"))?;
            }
        }
        Cmd::Serve { port, hz, host, cfg } => {
            let mut cfg = load_config(&cfg)?;
            let mut live = match &cfg.oracle {
                InterventionConfig::Live(l) => l.clone(),
                // a scripted oracle keeps supervising whenever no human holds control
                InterventionConfig::Scripted(o) => LiveConfig {
                    oracle: Some(o.clone()),
                    ..LiveConfig::default()
                },
                InterventionConfig::None => LiveConfig::default(),
            };
            live.port = port.unwrap_or(live.port);
            live.hz = hz.unwrap_or(live.hz);
            live.host = host.unwrap_or(live.host);
            cfg.oracle = InterventionConfig::Live(live);
            cfg.validate()?;
            let out = serve(cfg)?;
            print_json(&out.summary);
        }
        Cmd::Replay { log, out, cfg } => {
            let cfg = load_config(&cfg)?;
            let out_dir: &Path = &out;
            let mut reader = BufferLogReader::new(BufReader::new(File::open(&log)?))?;
            let header = reader.header().clone();
            let records = reader.read_all()?;
            let rep = replay(&cfg, &header, records)?;
            let env = cfg.env.build().map_err(HarnessError::from)?;
            use pvp::envs::Env;
            let step = rep.records;
            rep.agent
                .save(&out_dir.join("checkpoint"), &cfg.env.id(), step, env.obs_dim(), env.action_space())
                .map_err(HarnessError::from)?;
            let report = evaluate(&mut AgentPolicy::new(&rep.agent), &cfg.env, cfg.eval_episodes, 0, step)?;
            fs::write(out_dir.join("eval.json"), serde_json::to_string_pretty(&report).expect("serializable"))?;
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
