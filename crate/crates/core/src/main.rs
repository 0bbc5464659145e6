use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fraclap::cli::{self, CliError, Command, ExperimentConfig, SweepConfig};

#[derive(Parser)]
#[command(name = "fraclap", version, about = "Fractional discrete Laplacian experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output directory (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized probes (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Params {
    /// Params table as inline JSON or a path to a JSON file.
    #[arg(default_value = "{}")]
    params: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config (path or inline JSON).
    Run { config: String },
    /// Run a sweep config: one run per value of the swept parameter.
    Sweep { config: String },
    /// Print a shipped JSON schema; lists the names without an argument.
    Schema { name: Option<String> },
    Symbol(Params),
    Kernel(Params),
    Spectrum(Params),
    Thresholds(Params),
    Mourre(Params),
    Lap(Params),
    Evolve(Params),
    Ballistic(Params),
    Scatter(Params),
    Ssf(Params),
    Bk(Params),
}

fn direct(cmd: &Cmd) -> Option<(Command, &Params)> {
    Some(match cmd {
        Cmd::Symbol(p) => (Command::Symbol, p),
        Cmd::Kernel(p) => (Command::Kernel, p),
        Cmd::Spectrum(p) => (Command::Spectrum, p),
        Cmd::Thresholds(p) => (Command::Thresholds, p),
        Cmd::Mourre(p) => (Command::Mourre, p),
        Cmd::Lap(p) => (Command::Lap, p),
        Cmd::Evolve(p) => (Command::Evolve, p),
        Cmd::Ballistic(p) => (Command::Ballistic, p),
        Cmd::Scatter(p) => (Command::Scatter, p),
        Cmd::Ssf(p) => (Command::Ssf, p),
        Cmd::Bk(p) => (Command::Bk, p),
        _ => return None,
    })
}

fn output_dir(flag: &Option<PathBuf>, cfg: Option<&PathBuf>, fallback: &str) -> PathBuf {
    flag.clone().or_else(|| cfg.cloned()).unwrap_or_else(|| PathBuf::from("fraclap-out").join(fallback))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Schema { name: None } => {
            for n in cli::schema_names() {
                println!("{n}");
            }
        }
        Cmd::Schema { name: Some(n) } => {
            let s = cli::schema(n).ok_or_else(|| CliError::Config(format!("unknown schema `{n}`")))?;
            println!("{}", serde_json::to_string_pretty(&s).expect("schema serializes"));
        }
        Cmd::Run { config } => {
            let mut c: ExperimentConfig = cli::load_json(config)?;
            if let Some(s) = cli.seed {
                c.seed = s;
            }
            let out = output_dir(&cli.out, c.output.as_ref(), c.command.name());
            cli::run(&c, &out)?;
            println!("{}", out.join("manifest.json").display());
        }
        Cmd::Sweep { config } => {
            let mut c: SweepConfig = cli::load_json(config)?;
            if let Some(s) = cli.seed {
                c.template.seed = s;
            }
            let out = output_dir(&cli.out, c.template.output.as_ref(), "sweep");
            let m = cli::sweep(&c, &out)?;
            let failed = m.entries.iter().filter(|e| e.exit_code != 0).count();
            if failed > 0 {
                eprintln!("{failed} of {} sweep entries failed", m.entries.len());
            }
            println!("{}", out.join("manifest.json").display());
        }
        other => {
            let (command, p) = direct(other).expect("direct subcommand");
            let params = cli::load_json(&p.params)?;
            let c = ExperimentConfig { command, params, output: None, seed: cli.seed.unwrap_or(0) };
            let out = output_dir(&cli.out, None, command.name());
            cli::run(&c, &out)?;
            println!("{}", out.join("manifest.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fraclap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
