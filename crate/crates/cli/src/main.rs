//! `novex`: run seeded sweeps and export synthetic benchmark data.

mod config;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use novex_core::datagen::write_csv;
use novex_core::network::Method;
use novex_core::{
    emit_table, generate, parse_level, run_sweep, EpisodeConfig, ForestConfig, QuantSpec,
    SweepAxis, SweepSpec, SynthConfig, TableFormat,
};

use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "novex", version, about = "Decentralized conformal novelty detection sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep over the null shift or the exchanged-model bit width.
    Run(Box<RunArgs>),
    /// Write a synthetic dataset as CSV.
    ExportData(ExportArgs),
}

#[derive(Args, Default)]
struct DataArgs {
    /// Number of agents.
    #[arg(long)]
    agents: Option<usize>,
    /// Feature dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Null fraction of each agent's test sample.
    #[arg(long)]
    pi0: Option<f64>,
    /// Training nulls across all agents.
    #[arg(long)]
    n_train: Option<usize>,
    /// Test points across all agents.
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with default settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Swept axis: delta or bits.
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<String>>,
    /// Comma-separated methods among B2, B3, ME, ME-conservative.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Target FDR level, decimal or n/d.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    /// Fraction of each block's nulls used for training.
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    /// Shift for a bits sweep.
    #[arg(long)]
    delta: Option<f64>,
    /// Bit width of exchanged models in a delta sweep.
    #[arg(long)]
    bits: Option<String>,
    /// csv or markdown.
    #[arg(long)]
    format: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ExportArgs {
    /// Null shift.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
}

fn synth(args: &DataArgs, file: &FileConfig) -> SynthConfig {
    let base = SynthConfig::default();
    SynthConfig {
        d: args.d.or(file.d).unwrap_or(base.d),
        agents: args.agents.or(file.agents).unwrap_or(base.agents),
        delta: base.delta,
        pi0: args.pi0.or(file.pi0).unwrap_or(base.pi0),
        n_train_total: args.n_train.or(file.n_train).unwrap_or(base.n_train_total),
        n_test_total: args.n_test.or(file.n_test).unwrap_or(base.n_test_total),
        seed: args.seed.or(file.seed).unwrap_or(base.seed),
    }
}

fn parse_list<T: std::str::FromStr>(items: &[String]) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    items
        .iter()
        .map(|s| s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

fn build_spec(args: &RunArgs) -> Result<(SweepSpec, TableFormat, Option<PathBuf>), String> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut data = synth(&args.data, &file);
    let sweep = args
        .sweep
        .clone()
        .or(file.sweep.clone())
        .unwrap_or_else(|| "delta".into());
    let values = args.values.clone().or(file.values.clone());
    let delta = args.delta.or(file.delta).unwrap_or(2.0);
    let axis = match sweep.as_str() {
        "delta" => {
            let v = values.unwrap_or_else(|| {
                ["0", "0.5", "1", "2", "3", "4"].map(String::from).to_vec()
            });
            SweepAxis::Delta(parse_list(&v).map_err(|e| format!("bad shift {e}"))?)
        }
        "bits" => {
            data.delta = delta;
            let v = values.unwrap_or_else(|| ["none", "6", "4", "2", "1"].map(String::from).to_vec());
            SweepAxis::Bits(parse_list(&v).map_err(|e| format!("bad bit width {e}"))?)
        }
        other => return Err(format!("unknown sweep {other:?}; expected delta or bits")),
    };
    let methods: Vec<Method> = match args.methods.clone().or(file.methods.clone()) {
        Some(m) => parse_list(&m).map_err(|e| format!("bad method {e}"))?,
        None => vec![Method::B2, Method::B3, Method::Me],
    };
    let alpha = args
        .alpha
        .clone()
        .or(file.alpha.clone())
        .unwrap_or_else(|| "0.1".into());
    let forest_base = ForestConfig::default();
    let forest = ForestConfig {
        trees: args.trees.or(file.trees).unwrap_or(forest_base.trees),
        max_depth: args.max_depth.or(file.max_depth).unwrap_or(forest_base.max_depth),
        min_leaf: args.min_leaf.or(file.min_leaf).unwrap_or(forest_base.min_leaf),
        ..forest_base
    };
    let quant: QuantSpec = args
        .bits
        .clone()
        .or(file.bits.clone())
        .map(|b| b.parse::<QuantSpec>())
        .transpose()
        .map_err(|e: novex_core::Error| e.to_string())?
        .unwrap_or_default();
    let format: TableFormat = args
        .format
        .clone()
        .or(file.format.clone())
        .unwrap_or_else(|| "csv".into())
        .parse()
        .map_err(|e: novex_core::Error| e.to_string())?;
    let episode = EpisodeConfig {
        agents: data.agents,
        alpha: parse_level(&alpha).map_err(|e| e.to_string())?,
        quant,
        forest,
        train_fraction: args.train_frac.or(file.train_frac).unwrap_or(0.5),
        ..EpisodeConfig::default()
    };
    let spec = SweepSpec {
        axis,
        methods,
        trials: args.trials.or(file.trials).unwrap_or(100),
        master_seed: data.seed,
        episode,
        data,
    };
    Ok((spec, format, args.out.clone().or(file.out)))
}

fn write_out(out: Option<&PathBuf>, text: &[u8]) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => io::stdout().write_all(text).map_err(|e| e.to_string()),
    }
}

fn run(args: RunArgs) -> Result<(), String> {
    let (spec, format, out) = build_spec(&args)?;
    let rows = run_sweep(&spec).map_err(|e| e.to_string())?;
    let text = emit_table(&rows, format).map_err(|e| e.to_string())?;
    write_out(out.as_ref(), text.as_bytes())
}

fn export(args: ExportArgs) -> Result<(), String> {
    let config = SynthConfig {
        delta: args.delta,
        ..synth(&args.data, &FileConfig::default())
    };
    let data = generate(&config).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
            write_csv(&data, file).map_err(|e| e.to_string())
        }
        None => write_csv(&data, io::stdout().lock()).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(*args),
        Command::ExportData(args) => export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
