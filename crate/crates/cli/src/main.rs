use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hris_sim::config::{
    ExperimentConfig, ExperimentKind, PhasePreset, PhaseProfileSpec, Preset, RhoSpec, WorkerSpec,
};
use hris_sim::{exit, load_config, run, SimError};

#[derive(Debug, Parser)]
#[command(
    name = "hris-sim",
    version,
    about = "HRIS link-level Monte Carlo simulator"
)]
struct Cli {
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads: a count or "auto".
    #[arg(long, global = true, value_parser = parse_workers)]
    workers: Option<WorkerSpec>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file.
    Run { config: PathBuf },
    /// Run a bundled reproduction preset.
    Preset {
        #[arg(value_parser = ["fig4", "fig5", "fig6"])]
        name: String,
        /// Trials per grid point instead of the preset default.
        #[arg(long)]
        trials: Option<usize>,
        /// Print the preset as a config file and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Reflected beampattern of a steered planar array.
    Beampattern(BeampatternArgs),
}

#[derive(Debug, clap::Args)]
struct BeampatternArgs {
    #[arg(long, default_value_t = 12)]
    n_h: usize,
    #[arg(long, default_value_t = 12)]
    n_v: usize,
    /// Element spacing in metres.
    #[arg(long)]
    spacing: Option<f64>,
    /// Wavelength in metres.
    #[arg(long)]
    wavelength: Option<f64>,
    /// Signed steering angle in the x-z plane; broadside when absent.
    #[arg(long, allow_hyphen_values = true)]
    steer_deg: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = -89.9, allow_hyphen_values = true)]
    lo_deg: f64,
    #[arg(long, default_value_t = 89.9, allow_hyphen_values = true)]
    hi_deg: f64,
    #[arg(long, default_value_t = 1799)]
    points: usize,
}

fn parse_workers(s: &str) -> Result<WorkerSpec, String> {
    if s == "auto" {
        return Ok(WorkerSpec::default());
    }
    s.parse::<usize>()
        .map(WorkerSpec::Count)
        .map_err(|_| format!("expected a thread count or \"auto\", got {s:?}"))
}

fn build_config(cli: &Cli) -> Result<Option<ExperimentConfig>, SimError> {
    let mut cfg = match &cli.command {
        Command::Run { config } => load_config(config)?,
        Command::Preset {
            name,
            trials,
            dump_config,
        } => {
            let mut cfg = Preset::parse(name)
                .expect("clap restricts preset names")
                .config();
            cfg.n_trials = *trials;
            if *dump_config {
                print!("{}", cfg.to_toml());
                return Ok(None);
            }
            cfg
        }
        Command::Beampattern(a) => {
            let mut cfg = ExperimentConfig::new(ExperimentKind::Beampattern);
            if let Some(s) = a.spacing {
                cfg.array.spacing_m = s;
            }
            if let Some(w) = a.wavelength {
                cfg.array.wavelength_m = w;
            }
            let b = &mut cfg.beampattern;
            b.n_h = a.n_h;
            b.n_v = a.n_v;
            b.lo_deg = a.lo_deg;
            b.hi_deg = a.hi_deg;
            b.n_points = a.points;
            b.hris.rho = RhoSpec::Uniform(a.rho);
            if let Some(angle_deg) = a.steer_deg {
                b.hris.phase_profile = PhaseProfileSpec::Preset(PhasePreset::Steer { angle_deg });
            }
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    Ok(Some(cfg))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::CONFIG
            } else {
                exit::OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = build_config(&cli).and_then(|cfg| match cfg {
        Some(cfg) => run(&cfg).map(Some),
        None => Ok(None),
    });
    match result {
        Ok(Some(out)) => {
            println!("wrote {} rows to {}", out.rows, out.csv.display());
            println!("metadata: {}", out.metadata.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hris-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
