use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msa_cli::{disc, gen, lowerbound, run, table1, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "msa", version, about = "Multiple-source adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run one algorithm or baseline on a dataset directory
    Run {
        #[command(flatten)]
        common: Common,
        /// Also run the protocol that moves 80% of the target sample into an extra source
        #[arg(long)]
        target_split: bool,
    },
    /// Sweep the target sample size on the toy benchmark
    Table1 {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the model-selection lower bound
    Lowerbound {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the discrepancy between two datasets
    Disc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Gaussian toy regression benchmark
    Toy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Three-source counterexample for pairwise discrepancy weighting
    Example1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::new(),
    };
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn set_opt<T: std::fmt::Display>(cfg: &mut ExperimentConfig, key: &str, v: Option<T>) {
    if let Some(v) = v {
        cfg.set(key, v);
    }
}

fn list_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    msa_cli::init_threads()?;
    match cli.command {
        Command::Gen { kind } => match kind {
            GenKind::Toy { common, out, seed } => {
                let mut cfg = load(&common)?;
                set_opt(&mut cfg, "out", out.map(|p| p.display().to_string()));
                set_opt(&mut cfg, "seed", seed);
                list_files(&gen::cmd_gen_toy(&cfg)?);
            }
            GenKind::Example1 { common, out, n, seed } => {
                let mut cfg = load(&common)?;
                set_opt(&mut cfg, "out", out.map(|p| p.display().to_string()));
                set_opt(&mut cfg, "n", n);
                set_opt(&mut cfg, "seed", seed);
                list_files(&gen::cmd_gen_example1(&cfg)?);
            }
        },
        Command::Run { common, target_split } => {
            let mut cfg = load(&common)?;
            if target_split {
                cfg.set("target-split", true);
            }
            let out = run::cmd_run(&cfg)?;
            if cfg.get_str("output").is_none() {
                print!("{}", out.csv);
            }
        }
        Command::Table1 { common } => {
            let cfg = load(&common)?;
            let rows = table1::cmd_table1(&cfg)?;
            if cfg.get_str("output").is_none() {
                print!("{}", table1::rows_to_csv(&rows));
            }
        }
        Command::Lowerbound { common } => {
            let cfg = load(&common)?;
            let rows = lowerbound::cmd_lowerbound(&cfg)?;
            if cfg.get_str("output").is_none() {
                print!("{}", msa_core::lowerbound::rows_to_csv(&rows));
            }
        }
        Command::Disc { common, a, b } => {
            let mut cfg = load(&common)?;
            set_opt(&mut cfg, "a", a.map(|p| p.display().to_string()));
            set_opt(&mut cfg, "b", b.map(|p| p.display().to_string()));
            let est = disc::cmd_disc(&cfg)?;
            println!("disc={}", est.value);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
