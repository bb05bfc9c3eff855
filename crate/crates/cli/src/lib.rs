//! Experiment runner for the `hris-core` simulator: strict TOML configs,
//! bundled presets, CSV results and a JSON metadata sidecar per run.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hris_core::aoa::rmse_experiment;
use hris_core::chest::{
    rf_chain_sweep, rf_sweep_default_pilots, tradeoff_experiment, PilotSchedule, RF_SWEEP_RHO,
};
use hris_core::HrisError;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind, Preset};

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const INFEASIBLE: i32 = 3;
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible experiment: {0}")]
    Infeasible(HrisError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => exit::CONFIG,
            SimError::Infeasible(_) => exit::INFEASIBLE,
            SimError::Io { .. } => exit::IO,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<HrisError> for SimError {
    fn from(e: HrisError) -> Self {
        if e.is_infeasibility() {
            SimError::Infeasible(e)
        } else {
            SimError::Config(e.to_string())
        }
    }
}

/// Files written by one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub metadata: PathBuf,
    pub rows: usize,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, SimError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SimError::io(format!("reading {}", path.display()), e))?;
    ExperimentConfig::parse(&text).map_err(|e| match e {
        SimError::Config(msg) => SimError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Runs the configured experiment and writes `<csv>` plus `<csv stem>.meta.json`
/// into the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let start = Instant::now();
    let workers = cfg.workers.workers();
    let (csv_text, rows, derived) = match cfg.experiment {
        ExperimentKind::AoaRmse => {
            let exp = cfg.aoa_experiment()?;
            let rows = rmse_experiment(&exp, workers)?;
            let derived = json!({
                "grid_step_deg": exp.grid.step().to_degrees(),
                "atoms": exp.array_sides.iter().map(|s| s * s).collect::<Vec<_>>(),
                "noise_var": 1.0,
                "snr_definition": "per-symbol transmit power over unit noise variance, unit-gain channel",
            });
            (output::aoa_csv(&rows)?, rows.len(), derived)
        }
        ExperimentKind::ChestTradeoff => {
            let setup = cfg.chest_setup()?;
            let c = &cfg.chest;
            let rows = tradeoff_experiment(
                &setup,
                &c.rho_grid,
                c.n_phase_draws,
                cfg.trials(),
                cfg.seed,
                workers,
            )?;
            let sched = PilotSchedule::<f64>::dft(
                setup.n_atoms,
                setup.n_users,
                setup.n_rf,
                setup.pilots,
                0.5,
                None,
            )?;
            let derived = json!({
                "pilots": pilot_decomposition(&sched),
                "pathloss": pathloss_metadata(cfg)?,
            });
            (output::tradeoff_csv(&rows)?, rows.len(), derived)
        }
        ExperimentKind::RfChainSweep => {
            let setup = cfg.chest_setup()?;
            let r = &cfg.rf_sweep;
            let pilots = r
                .pilots
                .unwrap_or_else(|| rf_sweep_default_pilots(&setup, &r.nr_grid));
            let rows = rf_chain_sweep(
                &setup,
                &r.nr_grid,
                &r.snr_db,
                Some(pilots),
                cfg.trials(),
                cfg.seed,
                workers,
            )?;
            let derived = json!({
                "rho": RF_SWEEP_RHO,
                "pilots": pilots,
                "pilots_defaulted": r.pilots.is_none(),
                "baseline_slots": pilots / setup.n_users,
                "pathloss": pathloss_metadata(cfg)?,
            });
            (output::rfsweep_csv(&rows)?, rows.len(), derived)
        }
        ExperimentKind::Beampattern => {
            let array = cfg.beampattern_array()?;
            let b = &cfg.beampattern;
            let hris = b.hris.to_config(&array)?;
            let points = output::beampattern(
                &array,
                &hris.reflection_coefficients(),
                b.lo_deg,
                b.hi_deg,
                b.n_points,
            )?;
            let derived = json!({
                "grid_step_deg": (b.hi_deg - b.lo_deg) / (b.n_points - 1) as f64,
                "atoms": array.len(),
                "cut": "x-z plane, signed angle from broadside",
                "gain_floor_db": output::GAIN_FLOOR_DB,
            });
            (output::beampattern_csv(&points)?, points.len(), derived)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();

    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| SimError::io(format!("creating {}", cfg.output_dir.display()), e))?;
    let csv_path = cfg.output_dir.join(cfg.experiment.csv_name());
    fs::write(&csv_path, csv_text)
        .map_err(|e| SimError::io(format!("writing {}", csv_path.display()), e))?;

    let meta = json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "n_trials": cfg.trials(),
        "workers_requested": cfg.workers,
        "rows": rows,
        "derived": derived,
        "duration_s": elapsed,
        "config": cfg.to_toml(),
    });
    let meta_path = csv_path.with_extension("meta.json");
    let meta_text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    fs::write(&meta_path, meta_text)
        .map_err(|e| SimError::io(format!("writing {}", meta_path.display()), e))?;

    Ok(RunOutput {
        csv: csv_path,
        metadata: meta_path,
        rows,
    })
}

fn pilot_decomposition(s: &PilotSchedule<f64>) -> Value {
    let k = s.n_users();
    json!({
        "total": s.pilot_count(),
        "symbols_per_slot": k,
        "full_slots": s.n_full_slots(),
        "partial_slot_symbols": s.pilot_count() - s.n_full_slots() * k,
        "hris_stage_symbols": s.n_full_slots() * k,
        "bs_stage_symbols": s.pilot_count(),
        "hris_stage_rank_needed": s.n_atoms(),
        "hris_stage_rank_available": s.n_full_slots() * s.n_rf_chains(),
    })
}

fn pathloss_metadata(cfg: &ExperimentConfig) -> Result<Value, SimError> {
    let geom = cfg.link_geometry()?;
    let c = &cfg.channel;
    Ok(json!({
        "mode": c.pathloss,
        "fading": match c.rician_k { Some(k) => json!({ "rician_k": k }), None => json!("rayleigh") },
        "wavelength_m": cfg.array.wavelength_m,
        "carrier_hz": geom.carrier_hz(),
        "cell_radius_m": c.cell_radius_m,
        "hris_bs_distance_m": c.hris_bs_distance_m,
        "free_space_gain_hris_bs": geom.pathloss(c.hris_bs_distance_m),
        "free_space_gain_cell_radius": geom.pathloss(c.cell_radius_m),
    }))
}
