use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod exit;

use exit::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "spongedim",
    version,
    about = "Box and Hausdorff dimensions of self-affine sponges"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Emit the machine-readable report document instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Seed for optimizer restarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a specification file against the model's conditions.
    Validate { file: PathBuf },
    /// Closed-form dimension profile.
    Dim { file: PathBuf },
    /// Maximize the entropy functional and compare with the closed form.
    Variational { file: PathBuf },
    /// Exact number of approximate cubes at one scale.
    Count {
        file: PathBuf,
        #[arg(long)]
        delta: String,
        /// Build the type histogram and report the dominant class.
        #[arg(long)]
        types: bool,
        /// Print the per-ordering table.
        #[arg(long)]
        per_sigma: bool,
    },
    /// Least-squares box dimension over several scales.
    Empirical {
        file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<String>,
    },
    /// Hausdorff dimension of a planar carpet.
    Hausdorff { file: PathBuf },
    /// Everything applicable to the file, written as one document.
    Report {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also count cubes at this scale.
        #[arg(long)]
        delta: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(exit::USAGE);
        }
    }
    match commands::run(&cli.command, &cli.global) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if cli.global.json {
                println!("{}", out.json_document());
            } else {
                print!("{}", out.text);
            }
            ExitCode::from(out.code)
        }
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
