use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use waveguide_nulling::config::RunConfig;
use waveguide_nulling::oracle;
use waveguide_nulling::pipeline::{self, Problem};

#[derive(Parser)]
#[command(name = "wgnull", version, about = "Double-layer density synthesis for TM mode nulling in a cylindrical waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble, regularize and solve; writes metrics, density, sweep and mesh files.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write the weighted operator in binary form to this path.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Write the L-curve data of the regularization sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the synthesized and reference fields on cross-sections of the control shell.
    Grid {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        density: DensityArg,
        /// Comma-separated axial stations; defaults to the configured slices.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        slices: Option<Vec<f64>>,
    },
    /// Export the magnetic current on the antenna for a solved density.
    Current {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        density: DensityArg,
    },
    /// Run the numerical self-checks; exits nonzero if any fails.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed regularization parameter, overriding the configured strategy.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct DensityArg {
    /// Density CSV from `solve`; defaults to `<out>/density.csv`.
    #[arg(long)]
    density: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> waveguide_nulling::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        Ok(cfg)
    }
}

fn density_path(arg: &DensityArg, cfg: &RunConfig) -> PathBuf {
    arg.density.clone().unwrap_or_else(|| cfg.output.dir.join("density.csv"))
}

fn load_density(arg: &DensityArg, cfg: &RunConfig) -> waveguide_nulling::Result<(Problem, Vec<waveguide_nulling::c64>)> {
    let problem = Problem::build(cfg)?;
    let density = pipeline::read_density_csv(&density_path(arg, cfg), &problem.source).map_err(|e| e.in_stage("density"))?;
    Ok((problem, density))
}

fn run(cli: Cli) -> waveguide_nulling::Result<bool> {
    match cli.command {
        Command::Solve { common, dump_matrix } => {
            let cfg = common.load()?;
            let out = pipeline::solve(&cfg, common.alpha)?;
            out.write_outputs(&cfg.output.dir)?;
            if let Some(path) = dump_matrix {
                out.write_matrix_dump(&path)?;
            }
            let json = serde_json::to_string_pretty(&out.metrics).map_err(|e| waveguide_nulling::Error::Parse(e.to_string()))?;
            println!("{json}");
            Ok(true)
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            let out = pipeline::solve(&cfg, common.alpha)?;
            let path = cfg.output.dir.join("sweep.csv");
            write_sweep(&path, &out)?;
            println!("{}", path.display());
            Ok(true)
        }
        Command::Grid { common, density, slices } => {
            let cfg = common.load()?;
            let (problem, v) = load_density(&density, &cfg)?;
            let xs = slices.unwrap_or_else(|| cfg.output.slices.clone());
            let slices = pipeline::slices(&problem, &v, &xs).map_err(|e| e.in_stage("field"))?;
            for path in pipeline::write_slices(&cfg.output.dir, &slices)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Current { common, density } => {
            let cfg = common.load()?;
            let (problem, v) = load_density(&density, &cfg)?;
            let (_, current, report) = pipeline::magnetic_current(&problem, &v).map_err(|e| e.in_stage("feasibility"))?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            let path = cfg.output.dir.join("current.csv");
            let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
            current.write_csv(&mut w)?;
            std::io::Write::flush(&mut w)?;
            println!("{}", path.display());
            println!("slope term {:e} (||E_b|| = {:e})", report.slope_term, report.eb_norm);
            println!("transverse term: unbounded here, requires the exterior Maxwell solve");
            Ok(true)
        }
        Command::Oracle { common } => {
            let cfg = common.load()?;
            let k = cfg.wave_parameters()?.k();
            let checks = oracle::run_all(k)?;
            for c in &checks {
                println!(
                    "{} {}: {:e} (tolerance {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.tolerance
                );
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn write_sweep(path: &Path, out: &pipeline::SolveOutcome) -> waveguide_nulling::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    waveguide_nulling::solver::write_sweep_csv(&out.sweep, &mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
