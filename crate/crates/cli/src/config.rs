//! Experiment configuration file (TOML, strict schema).
//!
//! Every block has defaults that reproduce the reference setups, so a file
//! only needs `version` and `experiment`. Unknown keys are rejected.

use std::path::PathBuf;

use hris_core::aoa::{AoaCombiner, AoaExperiment, AoaGrid};
use hris_core::array::{Direction, PlanarArray, DEFAULT_SPACING_M, DEFAULT_WAVELENGTH_M};
use hris_core::channel::{ChannelModel, Fading, LinkGeometry, PathlossMode};
use hris_core::chest::ChestSetup;
use hris_core::hris::{combiner_schedule, CombinerKind, HrisConfig};
use hris_core::montecarlo::Workers;
use serde::{Deserialize, Serialize};

use crate::SimError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    AoaRmse,
    ChestTradeoff,
    RfChainSweep,
    Beampattern,
}

impl ExperimentKind {
    pub fn csv_name(self) -> &'static str {
        match self {
            ExperimentKind::AoaRmse => "aoa_rmse.csv",
            ExperimentKind::ChestTradeoff => "tradeoff.csv",
            ExperimentKind::RfChainSweep => "rfsweep.csv",
            ExperimentKind::Beampattern => "beampattern.csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkerSpec {
    Count(usize),
    Named(AutoWorkers),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoWorkers {
    Auto,
}

impl Default for WorkerSpec {
    fn default() -> Self {
        WorkerSpec::Named(AutoWorkers::Auto)
    }
}

impl WorkerSpec {
    pub fn workers(self) -> Workers {
        match self {
            WorkerSpec::Count(n) => Workers(n),
            WorkerSpec::Named(AutoWorkers::Auto) => Workers::AUTO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Trials per grid point; the experiment's own default when absent.
    #[serde(default)]
    pub n_trials: Option<usize>,
    #[serde(default)]
    pub workers: WorkerSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub array: ArraySpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub aoa: AoaSpec,
    #[serde(default)]
    pub chest: ChestSpec,
    #[serde(default)]
    pub rf_sweep: RfSweepSpec,
    #[serde(default)]
    pub beampattern: BeampatternSpec,
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySpec {
    pub spacing_m: f64,
    pub wavelength_m: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            spacing_m: DEFAULT_SPACING_M,
            wavelength_m: DEFAULT_WAVELENGTH_M,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathlossSpec {
    #[default]
    Normalized,
    FreeSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSpec {
    pub cell_radius_m: f64,
    pub hris_bs_distance_m: f64,
    pub pathloss: PathlossSpec,
    /// Rician K-factor; Rayleigh when absent.
    pub rician_k: Option<f64>,
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            cell_radius_m: 10.0,
            hris_bs_distance_m: 50.0,
            pathloss: PathlossSpec::Normalized,
            rician_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum AoaCombinerSpec {
    BeamSweep,
    Directive { elevation_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AoaSpec {
    pub array_sides: Vec<usize>,
    pub sensed_fractions: Vec<f64>,
    pub n_snapshots: usize,
    pub snr_db: Vec<f64>,
    pub azimuth_deg: f64,
    pub truth_lo_deg: f64,
    pub truth_hi_deg: f64,
    pub grid_lo_deg: f64,
    pub grid_hi_deg: f64,
    pub grid_points: usize,
    pub refine_iters: usize,
    pub combiner: AoaCombinerSpec,
}

impl Default for AoaSpec {
    fn default() -> Self {
        let e = AoaExperiment::default();
        Self {
            array_sides: e.array_sides,
            sensed_fractions: e.sensed_fractions,
            n_snapshots: e.n_snapshots,
            snr_db: e.snr_db,
            azimuth_deg: e.azimuth_rad.to_degrees(),
            truth_lo_deg: 5.0,
            truth_hi_deg: 70.0,
            grid_lo_deg: 0.0,
            grid_hi_deg: 89.75,
            grid_points: e.grid.n_points,
            refine_iters: e.grid.refine_iters,
            combiner: AoaCombinerSpec::BeamSweep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChestSpec {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_atoms: usize,
    pub n_rf: usize,
    pub pilots: usize,
    pub snr_db: f64,
    pub rho_grid: Vec<f64>,
    pub n_phase_draws: usize,
}

impl Default for ChestSpec {
    fn default() -> Self {
        let s = ChestSetup::default();
        Self {
            n_bs: s.n_bs,
            n_users: s.n_users,
            n_atoms: s.n_atoms,
            n_rf: s.n_rf,
            pilots: s.pilots,
            snr_db: s.snr_db,
            rho_grid: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            n_phase_draws: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfSweepSpec {
    pub nr_grid: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Shared pilot budget; smallest identifiable budget for the grid when absent.
    pub pilots: Option<usize>,
}

impl Default for RfSweepSpec {
    fn default() -> Self {
        Self {
            nr_grid: vec![1, 2, 4, 8],
            snr_db: vec![10.0, 20.0],
            pilots: None,
        }
    }
}

/// Splitting ratio: one value for every atom or one per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Uniform(f64),
    PerAtom(Vec<f64>),
}

/// Reflection phase profile: a named preset or explicit per-atom phases (rad).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseProfileSpec {
    Explicit(Vec<f64>),
    Preset(PhasePreset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PhasePreset {
    Uniform,
    /// Gradient profile steering a normally incident wave to a signed angle
    /// in the x-z plane.
    Steer {
        angle_deg: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKindSpec {
    #[default]
    Dft,
    RandomPhase,
}

/// Serialized form of an [`HrisConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HrisSpec {
    pub rho: RhoSpec,
    pub phase_profile: PhaseProfileSpec,
    pub sense_phase: Option<Vec<f64>>,
    pub n_rf: usize,
    pub combiner: CombinerKindSpec,
    pub combiner_seed: u64,
}

impl Default for HrisSpec {
    fn default() -> Self {
        Self {
            rho: RhoSpec::Uniform(1.0),
            phase_profile: PhaseProfileSpec::Preset(PhasePreset::Uniform),
            sense_phase: None,
            n_rf: 1,
            combiner: CombinerKindSpec::Dft,
            combiner_seed: 0,
        }
    }
}

impl HrisSpec {
    pub fn to_config(&self, array: &PlanarArray<f64>) -> Result<HrisConfig<f64>, SimError> {
        let n = array.len();
        let rho = match &self.rho {
            RhoSpec::Uniform(r) => vec![*r; n],
            RhoSpec::PerAtom(v) => v.clone(),
        };
        let phase = match &self.phase_profile {
            PhaseProfileSpec::Explicit(v) => v.clone(),
            PhaseProfileSpec::Preset(PhasePreset::Uniform) => vec![0.0; n],
            PhaseProfileSpec::Preset(PhasePreset::Steer { angle_deg }) => {
                let dir =
                    Direction::from_signed_elevation(angle_deg.to_radians()).map_err(|e| {
                        SimError::Config(format!("beampattern.hris.phase_profile: {e}"))
                    })?;
                array.steering_phase_profile(&dir)
            }
        };
        let sense = self.sense_phase.clone().unwrap_or_else(|| vec![0.0; n]);
        let kind = match self.combiner {
            CombinerKindSpec::Dft => CombinerKind::Dft,
            CombinerKindSpec::RandomPhase => CombinerKind::RandomPhase {
                seed: self.combiner_seed,
            },
        };
        let q = combiner_schedule(n, self.n_rf, 1, kind)
            .map_err(|e| SimError::Config(format!("beampattern.hris: {e}")))?
            .remove(0);
        HrisConfig::new(rho, phase, sense, q)
            .map_err(|e| SimError::Config(format!("beampattern.hris: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeampatternSpec {
    pub n_h: usize,
    pub n_v: usize,
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub n_points: usize,
    pub hris: HrisSpec,
}

impl Default for BeampatternSpec {
    fn default() -> Self {
        Self {
            n_h: 12,
            n_v: 12,
            lo_deg: -89.9,
            hi_deg: 89.9,
            n_points: 1799,
            hris: HrisSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            version: CONFIG_VERSION,
            experiment,
            seed: default_seed(),
            n_trials: None,
            workers: WorkerSpec::default(),
            output_dir: default_output_dir(),
            array: ArraySpec::default(),
            channel: ChannelSpec::default(),
            aoa: AoaSpec::default(),
            chest: ChestSpec::default(),
            rf_sweep: RfSweepSpec::default(),
            beampattern: BeampatternSpec::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Trials per grid point after applying the experiment default.
    pub fn trials(&self) -> usize {
        self.n_trials.unwrap_or(match self.experiment {
            ExperimentKind::AoaRmse => 500,
            ExperimentKind::ChestTradeoff | ExperimentKind::RfChainSweep => 200,
            ExperimentKind::Beampattern => 1,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |field: &str, msg: &str| Err(SimError::Config(format!("{field}: {msg}")));
        if self.version != CONFIG_VERSION {
            return fail(
                "version",
                &format!(
                    "unsupported version {}, expected {CONFIG_VERSION}",
                    self.version
                ),
            );
        }
        if self.n_trials == Some(0) {
            return fail("n_trials", "must be at least 1");
        }
        if !(self.array.spacing_m > 0.0 && self.array.wavelength_m > 0.0) {
            return fail("array", "spacing_m and wavelength_m must be positive");
        }
        match self.experiment {
            ExperimentKind::AoaRmse => {
                let a = &self.aoa;
                if a.array_sides.is_empty() || a.array_sides.contains(&0) {
                    return fail("aoa.array_sides", "need at least one positive side length");
                }
                if a.sensed_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
                    || a.sensed_fractions.is_empty()
                {
                    return fail("aoa.sensed_fractions", "values must lie in (0, 1]");
                }
                if a.n_snapshots == 0 {
                    return fail("aoa.n_snapshots", "must be at least 1");
                }
                if a.snr_db.is_empty() {
                    return fail("aoa.snr_db", "need at least one SNR");
                }
                self.aoa_experiment()?;
            }
            ExperimentKind::ChestTradeoff => {
                self.chest_setup()?;
                if self.chest.rho_grid.is_empty()
                    || self.chest.rho_grid.iter().any(|r| !(0.0..=1.0).contains(r))
                {
                    return fail("chest.rho_grid", "values must lie in [0, 1]");
                }
                if self.chest.n_phase_draws == 0 {
                    return fail("chest.n_phase_draws", "must be at least 1");
                }
            }
            ExperimentKind::RfChainSweep => {
                self.chest_setup()?;
                let r = &self.rf_sweep;
                if r.nr_grid.is_empty()
                    || r.nr_grid.iter().any(|&n| n == 0 || n > self.chest.n_atoms)
                {
                    return fail("rf_sweep.nr_grid", "values must lie in 1..=chest.n_atoms");
                }
                if r.snr_db.is_empty() {
                    return fail("rf_sweep.snr_db", "need at least one SNR");
                }
            }
            ExperimentKind::Beampattern => {
                let b = &self.beampattern;
                if b.n_points < 2 || !(b.lo_deg < b.hi_deg) || b.lo_deg <= -90.0 || b.hi_deg >= 90.0
                {
                    return fail(
                        "beampattern",
                        "need n_points >= 2 and -90 < lo_deg < hi_deg < 90",
                    );
                }
                self.beampattern_array()?;
            }
        }
        Ok(())
    }

    pub fn link_geometry(&self) -> Result<LinkGeometry<f64>, SimError> {
        LinkGeometry::new(
            self.channel.cell_radius_m,
            self.channel.hris_bs_distance_m,
            self.array.wavelength_m,
        )
        .map_err(|e| SimError::Config(format!("channel: {e}")))
    }

    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel {
            pathloss: match self.channel.pathloss {
                PathlossSpec::Normalized => PathlossMode::Normalized,
                PathlossSpec::FreeSpace => PathlossMode::FreeSpace,
            },
            fading: match self.channel.rician_k {
                Some(k_factor) => Fading::Rician { k_factor },
                None => Fading::Rayleigh,
            },
        }
    }

    pub fn chest_setup(&self) -> Result<ChestSetup, SimError> {
        let c = &self.chest;
        if c.n_bs == 0
            || c.n_users == 0
            || c.n_atoms == 0
            || c.n_rf == 0
            || c.n_rf > c.n_atoms
            || c.pilots == 0
        {
            return Err(SimError::Config(
                "chest: need n_bs, n_users, n_atoms, pilots >= 1 and 1 <= n_rf <= n_atoms".into(),
            ));
        }
        if let Some(k) = self.channel.rician_k {
            if !(k >= 0.0) {
                return Err(SimError::Config("channel.rician_k: must be >= 0".into()));
            }
        }
        Ok(ChestSetup {
            n_bs: c.n_bs,
            n_users: c.n_users,
            n_atoms: c.n_atoms,
            n_rf: c.n_rf,
            pilots: c.pilots,
            snr_db: c.snr_db,
            geometry: self.link_geometry()?,
            model: self.channel_model(),
        })
    }

    pub fn aoa_experiment(&self) -> Result<AoaExperiment, SimError> {
        let a = &self.aoa;
        let grid = AoaGrid::new(
            a.grid_lo_deg.to_radians(),
            a.grid_hi_deg.to_radians(),
            a.grid_points,
            a.refine_iters,
        )
        .map_err(|e| SimError::Config(format!("aoa.grid: {e}")))?;
        if !(a.truth_lo_deg >= a.grid_lo_deg
            && a.truth_hi_deg <= a.grid_hi_deg
            && a.truth_lo_deg <= a.truth_hi_deg)
        {
            return Err(SimError::Config(
                "aoa.truth_lo_deg/truth_hi_deg: interval must lie inside the search grid".into(),
            ));
        }
        Ok(AoaExperiment {
            array_sides: a.array_sides.clone(),
            spacing_m: self.array.spacing_m,
            wavelength_m: self.array.wavelength_m,
            sensed_fractions: a.sensed_fractions.clone(),
            n_snapshots: a.n_snapshots,
            snr_db: a.snr_db.clone(),
            n_trials: self.trials(),
            azimuth_rad: a.azimuth_deg.to_radians(),
            truth_lo_rad: a.truth_lo_deg.to_radians(),
            truth_hi_rad: a.truth_hi_deg.to_radians(),
            combiner: match a.combiner {
                AoaCombinerSpec::BeamSweep => AoaCombiner::BeamSweep,
                AoaCombinerSpec::Directive { elevation_deg } => AoaCombiner::Directive {
                    elevation_rad: elevation_deg.to_radians(),
                },
            },
            grid,
            seed: self.seed,
        })
    }

    pub fn beampattern_array(&self) -> Result<PlanarArray<f64>, SimError> {
        let b = &self.beampattern;
        PlanarArray::new(b.n_h, b.n_v, self.array.spacing_m, self.array.wavelength_m)
            .map_err(|e| SimError::Config(format!("beampattern: {e}")))
    }
}

/// Bundled reproduction presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig4,
    Fig5,
    Fig6,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "fig4" => Some(Preset::Fig4),
            "fig5" => Some(Preset::Fig5),
            "fig6" => Some(Preset::Fig6),
            _ => None,
        }
    }

    /// AoA RMSE (N in {144, 400}, sensed fraction in {0.2, 0.8}, T = 64),
    /// splitting trade-off (M = 16, K = 8, N = 64, N_r = 8, 70 pilots, 30 dB),
    /// and the RF-chain sweep at rho = 0.5.
    pub fn config(self) -> ExperimentConfig {
        match self {
            Preset::Fig4 => ExperimentConfig::new(ExperimentKind::AoaRmse),
            Preset::Fig5 => ExperimentConfig::new(ExperimentKind::ChestTradeoff),
            Preset::Fig6 => ExperimentConfig::new(ExperimentKind::RfChainSweep),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg =
            ExperimentConfig::parse("version = 1\nexperiment = \"chest_tradeoff\"\n").unwrap();
        assert_eq!(cfg, Preset::Fig5.config());
        let s = cfg.chest_setup().unwrap();
        assert_eq!(
            (s.n_bs, s.n_users, s.n_atoms, s.n_rf, s.pilots),
            (16, 8, 64, 8, 70)
        );
        assert_eq!(s.snr_db, 30.0);
        assert_eq!(cfg.trials(), 200);
    }

    #[test]
    fn fig4_preset_matches_reference_setup() {
        let e = Preset::Fig4.config().aoa_experiment().unwrap();
        assert_eq!(e.array_sides, vec![12, 20]);
        assert_eq!(e.sensed_fractions, vec![0.2, 0.8]);
        assert_eq!(e.n_snapshots, 64);
        assert_eq!(e.n_trials, 500);
        assert_eq!(e.grid.n_points, 721);
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::parse(
            "version = 1\nexperiment = \"aoa_rmse\"\n[aoa]\nsnapshots = 3\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("snapshots"), "{err}");
        assert!(err.contains("line 4"), "{err}");
        assert!(
            ExperimentConfig::parse("version = 1\nexperiment = \"aoa_rmse\"\nbogus = 1\n").is_err()
        );
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = ExperimentConfig::parse("version = 2\nexperiment = \"aoa_rmse\"\n").unwrap_err();
        assert!(err.to_string().contains("version"));
        let err = ExperimentConfig::parse(
            "version = 1\nexperiment = \"chest_tradeoff\"\n[chest]\nrho_grid = [0.5, 1.5]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("chest.rho_grid"));
        let err = ExperimentConfig::parse(
            "version = 1\nexperiment = \"rf_chain_sweep\"\n[rf_sweep]\nnr_grid = [0]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("rf_sweep.nr_grid"));
    }

    #[test]
    fn hris_spec_forms() {
        let text = r#"
version = 1
experiment = "beampattern"
workers = 3
[beampattern]
n_h = 2
n_v = 1
[beampattern.hris]
rho = [0.5, 0.25]
phase_profile = [0.0, 1.0]
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.workers, WorkerSpec::Count(3));
        let arr = cfg.beampattern_array().unwrap();
        let h = cfg.beampattern.hris.to_config(&arr).unwrap();
        assert_eq!(h.rho(), &[0.5, 0.25]);
        assert_eq!(h.reflect_phase(), &[0.0, 1.0]);

        let text = "version = 1\nexperiment = \"beampattern\"\n[beampattern.hris]\nrho = 0.5\nphase_profile = { steer = { angle_deg = 25.0 } }\ncombiner = \"random_phase\"\ncombiner_seed = 4\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let arr = cfg.beampattern_array().unwrap();
        let h = cfg.beampattern.hris.to_config(&arr).unwrap();
        assert_eq!(h.n_atoms(), 144);
        assert!(h.reflect_phase().iter().any(|&p| p != 0.0));
        let roundtrip = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(roundtrip, cfg);
    }

    #[test]
    fn hris_spec_rejects_bad_rho() {
        let text = "version = 1\nexperiment = \"beampattern\"\n[beampattern.hris]\nrho = 1.5\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let arr = cfg.beampattern_array().unwrap();
        assert!(cfg.beampattern.hris.to_config(&arr).is_err());
    }
}
