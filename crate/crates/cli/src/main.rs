use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use conehj_cli::config::ExperimentConfig;
use conehj_cli::experiments::{run, RunOptions};

#[derive(Parser)]
#[command(name = "conehj", version, about = "Hamilton-Jacobi equations on the cone of nondecreasing paths")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate f_j on a time grid and a sample set
    Solve(Flags),
    /// Refinement study of f_j along a dyadic chain
    Converge(Flags),
    /// Fenchel-Moreau check for a grid function on the cone
    FmVerify(Flags),
    /// Finite-difference oracle against Hopf-Lax, with a comparison check
    Compare(Flags),
    /// Finite-N free energy of the enriched SK model
    Spinglass(Flags),
    /// Run the acceptance suite (the config is optional)
    Accept(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON experiment config
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides every seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Multiplies the scalable tolerances
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,
}

impl Cmd {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Cmd::Solve(f) => ("solve", f),
            Cmd::Converge(f) => ("converge", f),
            Cmd::FmVerify(f) => ("fm-verify", f),
            Cmd::Compare(f) => ("compare", f),
            Cmd::Spinglass(f) => ("spinglass", f),
            Cmd::Accept(f) => ("accept", f),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONEHJ_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cmd: &Cmd) -> anyhow::Result<bool> {
    let (name, flags) = cmd.parts();
    let text = match &flags.config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None if name == "accept" => r#"{"command": "accept"}"#.to_string(),
        None => bail!("`{name}` needs --config <file>"),
    };
    let cfg = ExperimentConfig::parse(&text)?;
    if cfg.command().as_str() != name {
        bail!("config is for `{}`, not `{name}`", cfg.command().as_str());
    }
    if let Some(n) = flags.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads")?;
    }
    let opts = RunOptions { out: flags.out.clone(), seed: flags.seed, tol_scale: flags.tol_scale };
    let outcome = run(&cfg, &opts)?;
    println!("[{}] {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.summary);
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(outcome.pass)
}
