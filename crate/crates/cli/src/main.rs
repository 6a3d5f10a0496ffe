mod eval;
mod gen;
mod mine;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qarma::rule::{Ltf, Mode};

#[derive(Parser)]
#[command(name = "qarma", version, about = "Mine non-dominated quantitative association rules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine rules from a dataset file.
    Mine(mine::MineArgs),
    /// Generate synthetic datasets.
    #[command(subcommand)]
    Gen(gen::GenCommand),
    /// Apply mined rules to a dataset.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Serve mining tasks to a coordinator.
    Worker(WorkerArgs),
}

#[derive(Args)]
struct WorkerArgs {
    /// Address to listen on, e.g. 127.0.0.1:7000.
    #[arg(long)]
    listen: String,
    /// Dataset file; must be byte-identical to the coordinator's input.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Geq,
    Eq,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Geq => Mode::Geq,
            ModeArg::Eq => Mode::Eq,
        }
    }
}

pub fn fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

pub fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} is negative"))
    }
}

pub fn positive_count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("`{s}` is not a positive integer")),
    }
}

pub fn ltf(s: &str) -> Result<Ltf, String> {
    Ltf::parse(s).map_err(|e| e.to_string())
}

fn worker(args: WorkerArgs) -> anyhow::Result<()> {
    let listener = std::net::TcpListener::bind(&args.listen)?;
    println!("listening on {}", listener.local_addr()?);
    let options = qarma::distributed::WorkerOptions {
        threads: args.threads,
        ..Default::default()
    };
    qarma::distributed::serve_worker(listener, &args.data, options)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("QARMA_LOG", "error")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mine(args) => mine::run(args),
        Command::Gen(cmd) => gen::run(cmd),
        Command::Eval(cmd) => eval::run(cmd),
        Command::Worker(args) => worker(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
