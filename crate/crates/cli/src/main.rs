use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use langevin_core::harness::{figure_accel, verify_all, FigureConfig, ResolvedRun, RunConfig, VerifyGrid};
use langevin_core::Error;

#[derive(Parser)]
#[command(name = "langevin", version, about = "Underdamped Langevin sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sampler and write per-iteration diagnostics as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output path; overrides the config's `output`. Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overdamped versus underdamped KL curves on an ill-conditioned quadratic.
    Figure {
        #[arg(long, default_value_t = 100)]
        d: usize,
        #[arg(long, default_value_t = 100.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "figure")]
        out_dir: PathBuf,
        /// Overdamped step size (default: largest stable step).
        #[arg(long)]
        h_overdamped: Option<f64>,
        /// Underdamped step size (default: largest stable step).
        #[arg(long)]
        h_underdamped: Option<f64>,
        /// Underdamped friction.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run the numeric checks and print a pass/fail table.
    Verify {
        /// JSON grid; the built-in default grid when absent.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::NotQuadratic | Error::Json(_) | Error::InvalidParameter(_) => EXIT_CONFIG,
        _ => EXIT_VERIFY,
    }
}

fn run(cfg_path: PathBuf, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = RunConfig::load(&cfg_path)?;
    let dest = out.or_else(|| cfg.output.clone());
    let resolved = ResolvedRun::new(cfg)?;
    let output = resolved.run()?;
    match dest {
        Some(path) => {
            let mut w = BufWriter::new(File::create(&path)?);
            output.write_csv(&mut w)?;
            w.flush()?;
            log::info!("wrote {} rows to {}", output.rows.len(), path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            output.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn verify(grid: Option<PathBuf>, csv: Option<PathBuf>) -> Result<bool, Error> {
    let grid = match grid {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            VerifyGrid::from_json(&text)?
        }
        None => VerifyGrid::default_grid(),
    };
    let table = verify_all(&grid)?;
    print!("{}", table.render());
    if let Some(p) = csv {
        let mut w = BufWriter::new(File::create(p)?);
        table.write_csv(&mut w)?;
        w.flush()?;
    }
    let n_fail = table.failures().count();
    println!("{} checks, {} failed", table.rows.len(), n_fail);
    Ok(n_fail == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(config, out).map(|_| true),
        Command::Figure { d, kappa, eps, seed, out_dir, h_overdamped, h_underdamped, gamma } => {
            let cfg = FigureConfig { h_overdamped, h_underdamped, gamma, ..FigureConfig::new(d, kappa, eps, seed) };
            figure_accel(&cfg, &out_dir).map(|out| {
                for c in &out.curves {
                    let hit = c.hit.map_or("not reached".to_string(), |k| k.to_string());
                    println!("{}: h={:e} gamma={:e} iterations to eps: {}", c.sampler.name(), c.params.h, c.params.gamma, hit);
                }
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
                true
            })
        }
        Command::Verify { grid, csv } => verify(grid, csv),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
