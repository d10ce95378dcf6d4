use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dmn::cli;

#[derive(Parser)]
#[command(name = "dmn", version, about = "Material networks with cohesive cell enrichment")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit network parameters to oracle labels.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run a load path on one material point.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// `key=v1,v2,...` over a dotted config path.
        #[arg(long)]
        sweep: Option<cli::Sweep>,
    },
    /// Convert 2-D network parameters to 3-D.
    Transfer { input: PathBuf, output: PathBuf },
    /// Write the cell geometry of a network.
    Divide {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn execute(command: Command) -> dmn::Result<()> {
    match command {
        Command::Train { config, seed, out_dir } => cli::train_from_file(&config, &out_dir, seed).map(|_| ()),
        Command::Run { config, out_dir, sweep } => {
            let outcomes = cli::run_from_file(&config, &out_dir, sweep.as_ref())?;
            match outcomes.into_iter().find_map(|o| o.error) {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
        Command::Transfer { input, output } => cli::cmd_transfer(&input, &output).map(|_| ()),
        Command::Divide { config, out_dir } => cli::divide_from_file(&config, &out_dir).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match execute(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
