use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavekin::config::{parse_config, RunConfig};
use wavekin::driver::{self, Simulation};
use wavekin::{io, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "wavekin",
    version,
    about = "Electron-plasmon quasilinear kinetics solver"
)]
struct Cli {
    /// Configuration file; omitted keys take the reference preset values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run the oracle self-checks before the command.
    #[arg(long, global = true)]
    audit: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the system and integrate it in time.
    Run,
    /// Build and dump the trajectory bundles only.
    Bundles,
    /// Run the oracle self-checks and exit.
    Audit,
    /// Print the reference configuration.
    Preset {
        /// Reduced grids that run in minutes.
        #[arg(long)]
        desk: bool,
    },
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config(&text)?
        }
        None => RunConfig::reference(),
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn audit(sim: &Simulation<f64>) -> Result<bool> {
    let lines = driver::audit(sim)?;
    for l in &lines {
        println!("{l}");
    }
    Ok(lines.iter().all(|l| l.passed))
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    if let Command::Preset { desk } = cli.command {
        let cfg = if desk {
            RunConfig::desk()
        } else {
            RunConfig::reference()
        };
        print!("{}", cfg.to_text());
        return Ok(ExitCode::SUCCESS);
    }
    let cfg = load(&cli)?;
    let sim = Simulation::<f64>::build(&cfg)?;
    let out = cfg.output.dir.clone();
    if cli.audit || matches!(cli.command, Command::Audit) {
        let ok = audit(&sim)?;
        if matches!(cli.command, Command::Audit) {
            return Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            });
        }
        if !ok {
            return Err(Error::Numerical("self-audit failed".into()));
        }
    }
    match cli.command {
        Command::Bundles => {
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let path = out.join("bundles.csv");
            io::write_bundles(&path, &sim)?;
            println!(
                "{} retained and {} excluded bundles written to {}",
                sim.bundles.len(),
                sim.excluded.len(),
                path.display()
            );
        }
        Command::Run => {
            let s = driver::execute_run(&sim, &out)?;
            println!(
                "{} steps to t = {:e}; max relative drift mass {:e}, momentum {:e}, energy {:e}",
                s.steps, s.t, s.max_drift.0, s.max_drift.1, s.max_drift.2
            );
        }
        Command::Audit | Command::Preset { .. } => {}
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
