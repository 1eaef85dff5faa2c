use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use modeconn::harness::{ExperimentConfig, Run, SeedConvention};
use modeconn::Error;

#[derive(Parser)]
#[command(name = "modeconn", version, about = "Mode connectivity experiments under neuron alignment")]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory; overrides `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dotted-path config override, e.g. `--override curve.lr=0.1`.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Table,
    Figure,
}

impl From<Convention> for SeedConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Table => SeedConvention::Table,
            Convention::Figure => SeedConvention::Figure,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import the dataset.
    GenData,
    /// Train all endpoint models.
    Train,
    /// Align every endpoint pair.
    Align,
    /// Train one curve class for every pair.
    Curve {
        #[arg(long, value_parser = ["unaligned", "aligned", "pam-unaligned", "pam-aligned"])]
        mode: String,
    },
    /// Loss bounds along the unaligned and aligned segments.
    Bounds,
    /// PGD evaluation of every endpoint model.
    Attack,
    /// Loss and accuracy over the plane through a curve's three points.
    Plane,
    /// Aggregate curve metrics over pairs.
    Report {
        /// Which seed convention's curves to aggregate.
        #[arg(long, value_enum)]
        convention: Option<Convention>,
    },
    /// Curve training over the learning-rate and batch-size grid.
    Sweep,
    /// All stages from data generation to the report.
    Run,
}

fn load(cli: &Cli) -> modeconn::Result<Run> {
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p, &overrides)?,
        None => ExperimentConfig::from_toml("", &overrides)?,
    };
    let dir = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok(Run::new(cfg, dir))
}

fn execute(cli: &Cli) -> modeconn::Result<()> {
    let run = load(cli)?;
    let manifest = match &cli.command {
        Command::GenData => run.gen_data()?,
        Command::Train => run.train()?,
        Command::Align => run.align()?,
        Command::Curve { mode } => run.curve(mode)?,
        Command::Bounds => run.bounds()?,
        Command::Attack => run.attack()?,
        Command::Plane => run.plane()?,
        Command::Report { convention } => {
            let conv = convention.map_or(run.cfg.eval.seed_convention, Into::into);
            let (m, _) = run.report(conv)?;
            let md = run.dir.join(format!("report/report_{}.md", conv.name()));
            print!("{}", std::fs::read_to_string(md)?);
            m
        }
        Command::Sweep => run.sweep()?.0,
        Command::Run => {
            run.run_all()?;
            println!("pipeline complete in {}", run.dir.display());
            return Ok(());
        }
    };
    println!("{}", manifest.summary());
    Ok(())
}

fn hint(e: &Error) -> Option<&'static str> {
    match e {
        Error::MissingArtifact(_) => Some("run the earlier pipeline stages first (gen-data, train, ...) with the same --out"),
        Error::HashMismatch { .. } => Some("an input changed after it was produced; rerun the stage that wrote it"),
        Error::Config(_) => Some("check the config file and --override keys"),
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(h) = hint(&e) {
                eprintln!("hint: {h}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
