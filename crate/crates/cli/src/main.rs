use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use omtl_core::benchmark::{ElmConfig, SimilaritySource};
use omtl_core::MethodRegistry;

mod commands;
mod config;

use commands::SynthSpec;
use config::{usage, CommandKind, DataSource, FileConfig, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "omtl", version, about = "Online multi-task regression benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-task dataset as CSV.
    Synth(SynthArgs),
    /// Tune one method on the training segment and evaluate it online.
    Run(RunArgs),
    /// Rank several methods over several datasets.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    tasks: u32,
    #[arg(long, default_value_t = 400, value_parser = clap::value_parser!(u32).range(50..))]
    len: u32,
    #[arg(long, default_value_t = 0.8)]
    coupling: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimArg {
    Differenced,
    Raw,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fraction of embedded samples used for tuning.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    lag: Option<usize>,
    /// Self-loop weight of the interaction matrix.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum)]
    similarity: Option<SimArg>,
    /// Map inputs through a random hidden layer.
    #[arg(long)]
    elm: bool,
    #[arg(long, requires = "elm")]
    elm_hidden: Option<usize>,
    #[arg(long, requires = "elm")]
    elm_seed: Option<u64>,
    #[arg(long, requires = "elm")]
    standardize: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Report the max deviation of MT-WRLS from the batch solve on the
    /// first training steps.
    #[arg(long)]
    oracle_check: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct CompareArgs {
    /// Dataset CSV; repeat for several.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Synthetic datasets, one per seed.
    #[arg(long, value_delimiter = ',')]
    synth_seeds: Vec<u64>,
    #[arg(long, default_value_t = 10)]
    synth_tasks: usize,
    #[arg(long, default_value_t = 400)]
    synth_len: usize,
    #[arg(long, default_value_t = 0.9)]
    synth_coupling: f64,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn resolve(
    kind: CommandKind,
    file: FileConfig,
    args: &PipelineArgs,
    methods: Option<Vec<String>>,
    data: Option<Vec<DataSource>>,
    oracle_check: bool,
) -> anyhow::Result<RunConfig> {
    if file.command.is_some_and(|c| c != kind) {
        return Err(usage("config was written for a different command"));
    }
    let mut pipeline = file.pipeline.clone().unwrap_or_default();
    if let Some(mu) = args.mu {
        pipeline.mu = mu;
    }
    if let Some(lag) = args.lag {
        pipeline.lag = lag;
    }
    if let Some(gamma) = args.gamma {
        pipeline.gamma = gamma;
    }
    if let Some(s) = args.similarity {
        pipeline.similarity = match s {
            SimArg::Differenced => SimilaritySource::Differenced,
            SimArg::Raw => SimilaritySource::Raw,
        };
    }
    if args.elm {
        let elm = pipeline.elm.get_or_insert_with(ElmConfig::default);
        if let Some(h) = args.elm_hidden {
            elm.hidden = h;
        }
        if let Some(s) = args.elm_seed {
            elm.seed = s;
        }
        elm.standardize |= args.standardize;
    }
    let methods = match methods {
        Some(m) => m,
        None => file.methods()?.ok_or_else(|| usage("no method given"))?,
    };
    Ok(RunConfig {
        command: kind,
        out: args
            .out
            .clone()
            .or(file.out)
            .ok_or_else(|| usage("no output directory given (--out)"))?,
        methods,
        oracle_check: oracle_check || file.oracle_check.unwrap_or(false),
        data: data.or(file.data).ok_or_else(|| usage("no dataset given (--data)"))?,
        pipeline,
        grids: file.grids.unwrap_or_default(),
    })
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let registry = MethodRegistry::builtin();
    match cli.command {
        Command::Synth(a) => {
            if !(0.0..=1.0).contains(&a.coupling) {
                return Err(usage(format!("coupling must be in [0, 1], got {}", a.coupling)));
            }
            let spec = SynthSpec {
                tasks: a.tasks as usize,
                len: a.len as usize,
                coupling: a.coupling,
                seed: a.seed,
            };
            commands::synth(&spec, &a.out)
        }
        Command::Run(a) => {
            let file = FileConfig::load_opt(a.pipeline.config.as_deref())?;
            let data = a.data.map(|path| vec![DataSource::File { path }]);
            let cfg = resolve(
                CommandKind::Run,
                file,
                &a.pipeline,
                a.method.map(|m| vec![m]),
                data,
                a.oracle_check,
            )?;
            cfg.validate(&registry)?;
            commands::run(&cfg, &registry)
        }
        Command::Compare(a) => {
            let file = FileConfig::load_opt(a.pipeline.config.as_deref())?;
            let mut data: Vec<DataSource> = a.data.into_iter().map(|path| DataSource::File { path }).collect();
            data.extend(a.synth_seeds.iter().map(|&seed| DataSource::Synth {
                tasks: a.synth_tasks,
                len: a.synth_len,
                coupling: a.synth_coupling,
                seed,
            }));
            let data = (!data.is_empty()).then_some(data);
            let methods = (!a.methods.is_empty()).then_some(a.methods);
            let cfg = resolve(CommandKind::Compare, file, &a.pipeline, methods, data, false)?;
            cfg.validate(&registry)?;
            commands::compare_cmd(&cfg, &registry)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
