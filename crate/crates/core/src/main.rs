use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stancescope::pipeline::{self, ExtraTraces, PipelineConfig, PipelineError, Stage};
use stancescope::stance::PromptVariant;
use stancescope::timeline::ChartKind;

#[derive(Parser)]
#[command(name = "stancescope", version, about = "Topic and stance pipeline for short social-media posts")]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Write artifacts here instead of the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// First timeline day, YYYY-MM-DD.
    #[arg(long, global = true)]
    from: Option<String>,
    /// Last timeline day, YYYY-MM-DD, inclusive.
    #[arg(long, global = true)]
    to: Option<String>,
    /// Day boundaries: UTC or a fixed offset like +01:00.
    #[arg(long, global = true)]
    tz: Option<String>,
    /// stacked-area or line.
    #[arg(long, global = true)]
    chart_kind: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay the search query over the archive.
    Filter {
        /// Query file; with --in and --out runs without a config.
        #[arg(long)]
        query_file: Option<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster posts and rank topic keywords.
    Topics,
    /// Classify stance with the configured backend.
    Classify {
        /// Prompt preset: base, three-shot, translation, cot or all.
        #[arg(long)]
        variant: Option<String>,
        /// Row name for evaluation tables.
        #[arg(long)]
        name: Option<String>,
    },
    /// Score traces against gold labels.
    Eval {
        /// Additional run to compare, as NAME=PATH. Repeatable.
        #[arg(long = "extra-traces", value_name = "NAME=PATH")]
        extra_traces: Vec<String>,
    },
    /// Per-day topic and stance series, CSV and SVG.
    Timeline,
    /// Every stage in order.
    All,
}

fn user(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| user("--config is required for this command"))?;
    let mut cfg = PipelineConfig::load(path)?;
    let cwd = std::env::current_dir().map_err(|e| PipelineError::Io(e.to_string()))?;
    if let Some(dir) = &cli.output_dir {
        cfg.output.dir = cwd.join(dir);
    }
    if let Some(v) = &cli.from {
        cfg.timeline.from = Some(v.clone());
    }
    if let Some(v) = &cli.to {
        cfg.timeline.to = Some(v.clone());
    }
    if let Some(v) = &cli.tz {
        cfg.timeline.tz = v.clone();
    }
    if let Some(v) = &cli.chart_kind {
        cfg.timeline.chart_kind =
            ChartKind::parse(v).ok_or_else(|| user(format!("--chart-kind must be stacked-area or line, got `{v}`")))?;
    }
    match &cli.command {
        Command::Classify { variant, name } => {
            if let Some(v) = variant {
                let v = PromptVariant::parse(v)
                    .ok_or_else(|| user(format!("unknown --variant `{v}`; use base, three-shot, translation, cot or all")))?;
                let (shots, tr, cot) = v.flags();
                cfg.stance.use_shots = shots;
                cfg.stance.translation = tr;
                cfg.stance.cot = cot;
            }
            if let Some(n) = name {
                cfg.stance.run_name = Some(n.clone());
            }
        }
        Command::Eval { extra_traces } => {
            for spec in extra_traces {
                let (name, path) = spec
                    .split_once('=')
                    .filter(|(n, p)| !n.is_empty() && !p.is_empty())
                    .ok_or_else(|| user(format!("--extra-traces expects NAME=PATH, got `{spec}`")))?;
                cfg.eval.extra.push(ExtraTraces {
                    name: name.to_string(),
                    traces: cwd.join(path),
                });
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    if let Command::Filter {
        query_file: Some(q),
        input: Some(i),
        out: Some(o),
    } = &cli.command
    {
        let n = pipeline::filter_file(q, i, o)?;
        println!("filter: kept {n} posts -> {}", o.display());
        return Ok(());
    }
    if let Command::Filter { query_file, input, out } = &cli.command {
        if query_file.is_some() || input.is_some() || out.is_some() {
            return Err(user("standalone filter needs all of --query-file, --in and --out"));
        }
    }
    let cfg = load_config(cli)?;
    let stage = match cli.command {
        Command::Filter { .. } => Stage::Filter,
        Command::Topics => Stage::Topics,
        Command::Classify { .. } => Stage::Classify,
        Command::Eval { .. } => Stage::Eval,
        Command::Timeline => Stage::Timeline,
        Command::All => {
            for o in pipeline::run_all(&cfg)? {
                println!("{}: {}", o.stage.as_str(), o.summary);
            }
            return Ok(());
        }
    };
    let o = pipeline::run_stage(stage, &cfg)?;
    println!("{}: {}", o.stage.as_str(), o.summary);
    if stage == Stage::Eval {
        let table = std::fs::read_to_string(cfg.output_dir().join(pipeline::EVAL_TXT))
            .map_err(|e| PipelineError::Io(e.to_string()))?;
        print!("{table}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
