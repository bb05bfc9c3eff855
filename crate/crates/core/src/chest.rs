//! Two-sided pilot channel estimation with an HRIS, plus the purely
//! reflective cascaded least-squares baseline.
//!
//! The UTs send one orthogonal `K x K` pilot block per slot while the surface
//! changes its combiner and reflection pattern between slots. The same pilots
//! serve both receivers:
//!
//! * the HRIS decorrelates its sensed blocks, stacks the slots, and solves a
//!   least-squares problem for `S H` (`S` the per-atom sensing amplitudes),
//!   then divides `S` out to get `H_hat`;
//! * the BS receives the reflected pilots, forms regressors from the forwarded
//!   `H_hat`, and solves for `G` in the least-squares sense.
//!
//! A pilot budget that is not a multiple of `K` ends with a partial slot. Its
//! symbols are not orthogonal across users, so the HRIS side only uses full
//! slots; the BS side uses every symbol.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;

use crate::array::wrap_phase;
use crate::channel::{cascaded_per_user, draw_channels, ChannelModel, ChannelSet, LinkGeometry};
use crate::hris::{combiner_schedule, stack_rows, CombinerKind, HrisConfig};
use crate::linalg::{dft_matrix, frob_sq, least_squares, nmse, CMatrix};
use crate::montecarlo::{experiment_id, try_run_trials, Workers};
use crate::rng::{stream, tag, uniform_phase};
use crate::{lit, HrisError, Real, Result};

/// Pilot book plus the per-slot surface configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSchedule<T: Real> {
    /// `K x K`, unit-modulus entries, `X X^H = K I`.
    pilots: CMatrix<T>,
    /// One configuration per slot, the last one possibly for a partial slot.
    hris_configs: Vec<HrisConfig<T>>,
    pilot_count: usize,
}

impl<T: Real> PilotSchedule<T> {
    pub fn new(
        pilots: CMatrix<T>,
        hris_configs: Vec<HrisConfig<T>>,
        pilot_count: usize,
    ) -> Result<Self> {
        let k = pilots.nrows();
        if k == 0 || pilots.ncols() != k {
            return Err(HrisError::Parameter(
                "pilot block must be square and non-empty".into(),
            ));
        }
        let gram = &pilots * pilots.adjoint();
        let scale = gram[(0, 0)].re;
        let tol = lit::<T>(1e-6) * scale;
        let orthogonal = (0..k).all(|r| {
            (0..k).all(|c| {
                let want = if r == c { scale } else { T::zero() };
                (gram[(r, c)] - Complex::new(want, T::zero()))
                    .norm_sqr()
                    .sqrt()
                    <= tol
            })
        });
        if !(scale > T::zero()) || !orthogonal {
            return Err(HrisError::Parameter(
                "pilot block must be orthogonal".into(),
            ));
        }
        if pilot_count == 0 {
            return Err(HrisError::Parameter("pilot budget must be positive".into()));
        }
        let n_slots = pilot_count.div_ceil(k);
        if hris_configs.len() != n_slots {
            return Err(HrisError::dim(
                "per-slot HRIS configurations",
                n_slots,
                hris_configs.len(),
            ));
        }
        let first = &hris_configs[0];
        for cfg in &hris_configs[1..] {
            if cfg.n_atoms() != first.n_atoms() || cfg.n_rf_chains() != first.n_rf_chains() {
                return Err(HrisError::Parameter(
                    "all slots must share N and N_r".into(),
                ));
            }
            if cfg.rho() != first.rho() || cfg.sense_phase() != first.sense_phase() {
                return Err(HrisError::Parameter(
                    "splitting ratios and sensing phases must be constant across slots".into(),
                ));
            }
        }
        Ok(Self {
            pilots,
            hris_configs,
            pilot_count,
        })
    }

    /// DFT pilots, DFT combiners, DFT reflection patterns, uniform `rho`.
    ///
    /// Full slot `t` reflects with DFT row `(t * stride + t / n_full) mod N`,
    /// `stride = max(1, N / n_full)`, on top of `base_phase`; slots beyond the
    /// first `n_full` thus continue on shifted rows. Sensing phases are zero.
    pub fn dft(
        n_atoms: usize,
        n_users: usize,
        n_rf: usize,
        pilot_count: usize,
        rho: T,
        base_phase: Option<&[T]>,
    ) -> Result<Self> {
        if n_users == 0 || pilot_count == 0 {
            return Err(HrisError::Parameter(
                "need at least one user and one pilot".into(),
            ));
        }
        let n_slots = pilot_count.div_ceil(n_users);
        let combiners = combiner_schedule::<T>(n_atoms, n_rf, n_slots, CombinerKind::Dft)?;
        let patterns =
            dft_reflection_patterns::<T>(n_atoms, n_slots, (pilot_count / n_users).max(1));
        let base: Vec<T> = match base_phase {
            Some(b) if b.len() == n_atoms => b.to_vec(),
            Some(b) => return Err(HrisError::dim("base reflection phase", n_atoms, b.len())),
            None => vec![T::zero(); n_atoms],
        };
        let configs = combiners
            .into_iter()
            .zip(patterns)
            .map(|(q, pattern)| {
                let phase = pattern
                    .iter()
                    .zip(&base)
                    .map(|(&p, &b)| wrap_phase(p + b))
                    .collect();
                HrisConfig::new(vec![rho; n_atoms], phase, vec![T::zero(); n_atoms], q)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dft_matrix(n_users), configs, pilot_count)
    }

    pub fn n_users(&self) -> usize {
        self.pilots.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.hris_configs[0].n_atoms()
    }

    pub fn n_rf_chains(&self) -> usize {
        self.hris_configs[0].n_rf_chains()
    }

    pub fn pilot_count(&self) -> usize {
        self.pilot_count
    }

    /// Slots carrying a complete orthogonal pilot block.
    pub fn n_full_slots(&self) -> usize {
        self.pilot_count / self.n_users()
    }

    /// All slots, including a trailing partial one.
    pub fn n_slots(&self) -> usize {
        self.hris_configs.len()
    }

    pub fn pilots(&self) -> &CMatrix<T> {
        &self.pilots
    }

    pub fn hris_configs(&self) -> &[HrisConfig<T>] {
        &self.hris_configs
    }

    /// Pilot symbols sent in slot `t` (`K x L_t`).
    pub fn slot_symbols(&self, t: usize) -> CMatrix<T> {
        let k = self.n_users();
        let used = (self.pilot_count - t * k).min(k);
        self.pilots.columns(0, used).into_owned()
    }

    /// The combiners of the full slots stacked into one `(n_full N_r) x N` operator.
    pub fn stacked_combiner(&self) -> CMatrix<T> {
        let blocks: Vec<_> = self.hris_configs[..self.n_full_slots()]
            .iter()
            .map(|c| c.combiner().clone())
            .collect();
        stack_rows(&blocks)
    }

    fn check_channels(&self, ch: &ChannelSet<T>) -> Result<()> {
        if ch.n_atoms() != self.n_atoms() || ch.n_users() != self.n_users() {
            return Err(HrisError::dim(
                "channel vs pilot schedule (N x K)",
                format!("{}x{}", self.n_atoms(), self.n_users()),
                format!("{}x{}", ch.n_atoms(), ch.n_users()),
            ));
        }
        Ok(())
    }
}

/// Reflection phase patterns from DFT rows, see [`PilotSchedule::dft`].
pub fn dft_reflection_patterns<T: Real>(
    n_atoms: usize,
    n_slots: usize,
    n_full: usize,
) -> Vec<Vec<T>> {
    let stride = (n_atoms / n_full.max(1)).max(1);
    (0..n_slots)
        .map(|t| {
            let row = (t * stride + t / n_full.max(1)) % n_atoms;
            (0..n_atoms)
                .map(|n| dft_phase::<T>(n_atoms, row, n))
                .collect()
        })
        .collect()
}

/// Phase of DFT entry `(row, col)` wrapped to `[0, 2pi)`.
fn dft_phase<T: Real>(n: usize, row: usize, col: usize) -> T {
    let k = (row * col) % n;
    wrap_phase(-T::two_pi() * lit::<T>(k as f64) / lit::<T>(n as f64))
}

/// HRIS-side estimate and the sensed blocks it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct HrisEstimate<T: Real> {
    pub h_hat: CMatrix<T>,
    /// Raw `N_r x L_t` sensed block of every slot.
    pub observations: Vec<CMatrix<T>>,
}

/// Least-squares recovery of the UT-HRIS channel from the sensed pilots.
pub fn hris_estimate_h<T: Real, R: Rng + ?Sized>(
    sched: &PilotSchedule<T>,
    ch: &ChannelSet<T>,
    rng: &mut R,
) -> Result<HrisEstimate<T>> {
    sched.check_channels(ch)?;
    let sensing = sched.hris_configs[0].sensing_coefficients();
    if let Some(atom) = sensing.iter().position(|s| s.norm_sqr() == T::zero()) {
        return Err(HrisError::UnsensedAtom { atom });
    }

    let amp = Complex::new(ch.tx_power.sqrt(), T::zero());
    let noise_std = ch.noise_var_hris.sqrt();
    let observations = sched
        .hris_configs
        .iter()
        .enumerate()
        .map(|(t, cfg)| {
            let tx = &ch.h * sched.slot_symbols(t) * amp;
            cfg.build_signals().sense_block(&tx, noise_std, rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let k = sched.n_users();
    let n_full = sched.n_full_slots();
    let n_rf = sched.n_rf_chains();
    let decorrelate = sched.pilots.adjoint() / (amp * lit::<T>(k as f64));
    let mut stacked_obs = CMatrix::zeros(n_full * n_rf, k);
    for (t, y) in observations[..n_full].iter().enumerate() {
        stacked_obs
            .rows_mut(t * n_rf, n_rf)
            .copy_from(&(y * &decorrelate));
    }
    let q = sched.stacked_combiner();
    let scaled_h = least_squares(&q, &stacked_obs).map_err(|d| HrisError::Identifiability {
        stage: "UT-HRIS channel",
        operator: "stacked combiner",
        rank: d.rank,
        required: d.required,
    })?;
    let mut h_hat = scaled_h;
    for (mut row, s) in h_hat.row_iter_mut().zip(sensing.iter()) {
        row /= *s;
    }
    Ok(HrisEstimate {
        h_hat,
        observations,
    })
}

/// BS observations of all pilot symbols, `M x P`, and the matching noiseless
/// reflected regressors built from `h_used`, `N x P`.
fn bs_system<T: Real, R: Rng + ?Sized>(
    sched: &PilotSchedule<T>,
    ch: &ChannelSet<T>,
    h_used: &CMatrix<T>,
    rng: &mut R,
) -> (CMatrix<T>, CMatrix<T>) {
    let amp = Complex::new(ch.tx_power.sqrt(), T::zero());
    let noise_std = ch.noise_var_bs.sqrt();
    let (m, n, p) = (ch.n_bs_antennas(), ch.n_atoms(), sched.pilot_count);
    let mut y = CMatrix::zeros(m, p);
    let mut z = CMatrix::zeros(n, p);
    let mut col = 0;
    for (t, cfg) in sched.hris_configs.iter().enumerate() {
        let x = sched.slot_symbols(t) * amp;
        let r = cfg.reflection_coefficients();
        let scale_rows = |mut mat: CMatrix<T>| {
            for (mut row, c) in mat.row_iter_mut().zip(r.iter()) {
                row *= *c;
            }
            mat
        };
        let mut y_t = &ch.g * scale_rows(&ch.h * &x);
        crate::hris::add_noise(&mut y_t, noise_std, rng);
        let z_t = scale_rows(h_used * &x);
        y.columns_mut(col, x.ncols()).copy_from(&y_t);
        z.columns_mut(col, x.ncols()).copy_from(&z_t);
        col += x.ncols();
    }
    (y, z)
}

/// Least-squares recovery of the HRIS-BS channel given the forwarded `H_hat`.
pub fn bs_estimate_g<T: Real, R: Rng + ?Sized>(
    sched: &PilotSchedule<T>,
    ch: &ChannelSet<T>,
    h_hat: &CMatrix<T>,
    rng: &mut R,
) -> Result<CMatrix<T>> {
    sched.check_channels(ch)?;
    crate::linalg::check_shape("forwarded H_hat", ch.h.shape(), h_hat.shape())?;
    let (y, z) = bs_system(sched, ch, h_hat, rng);
    let g_adj =
        least_squares(&z.adjoint(), &y.adjoint()).map_err(|d| HrisError::Identifiability {
            stage: "HRIS-BS channel",
            operator: "stacked reflected regressor",
            rank: d.rank,
            required: d.required,
        })?;
    Ok(g_adj.adjoint())
}

/// Accuracy of one two-sided estimation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationReport {
    pub nmse_h: f64,
    pub nmse_g: f64,
    /// Over all users, `sum_k ||A_hat_k - A_k||^2 / sum_k ||A_k||^2`.
    pub nmse_cascaded: f64,
    pub pilot_count: usize,
    pub rho: f64,
    pub n_rf_chains: usize,
}

/// Runs both estimation stages and scores them against the true channels.
pub fn two_sided_estimate<T: Real, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    sched: &PilotSchedule<T>,
    ch: &ChannelSet<T>,
    hris_rng: &mut R1,
    bs_rng: &mut R2,
) -> Result<(CMatrix<T>, CMatrix<T>, EstimationReport)> {
    let h_hat = hris_estimate_h(sched, ch, hris_rng)?.h_hat;
    let g_hat = bs_estimate_g(sched, ch, &h_hat, bs_rng)?;
    let nmse_cascaded = per_user_cascade_nmse(&h_hat, &g_hat, ch)?;
    let report = EstimationReport {
        nmse_h: to_f64(nmse(&h_hat, &ch.h)),
        nmse_g: to_f64(nmse(&g_hat, &ch.g)),
        nmse_cascaded,
        pilot_count: sched.pilot_count,
        rho: to_f64(sched.hris_configs[0].rho()[0]),
        n_rf_chains: sched.n_rf_chains(),
    };
    Ok((h_hat, g_hat, report))
}

fn per_user_cascade_nmse<T: Real>(
    h_hat: &CMatrix<T>,
    g_hat: &CMatrix<T>,
    ch: &ChannelSet<T>,
) -> Result<f64> {
    let (mut err, mut norm) = (T::zero(), T::zero());
    for k in 0..ch.n_users() {
        let truth = cascaded_per_user(&ch.h, &ch.g, k)?;
        let est = cascaded_per_user(h_hat, g_hat, k)?;
        err += frob_sq(&(est - &truth));
        norm += frob_sq(&truth);
    }
    Ok(to_f64(err / norm))
}

fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Per-user cascaded estimates of a purely reflective surface.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEstimate<T: Real> {
    pub a_hat: Vec<CMatrix<T>>,
    pub nmse: f64,
}

/// Reflective-RIS baseline: the BS solves, for every user, the LS problem for
/// `A_k = G diag(h_k)` from one decorrelated pilot block per reflection
/// pattern. Needs at least `N` full slots, i.e. `N K` pilot symbols.
pub fn cascaded_ls_baseline<T: Real, R: Rng + ?Sized>(
    ch: &ChannelSet<T>,
    phase_patterns: &[Vec<T>],
    pilot_count: usize,
    rng: &mut R,
) -> Result<BaselineEstimate<T>> {
    let (n, k, m) = (ch.n_atoms(), ch.n_users(), ch.n_bs_antennas());
    let n_full = pilot_count / k;
    if n_full < n {
        return Err(HrisError::Identifiability {
            stage: "cascaded channel (reflective RIS)",
            operator: "reflection pattern matrix",
            rank: n_full,
            required: n,
        });
    }
    if phase_patterns.len() < n_full {
        return Err(HrisError::dim(
            "reflection patterns",
            n_full,
            phase_patterns.len(),
        ));
    }
    let x = dft_matrix::<T>(k);
    let amp = Complex::new(ch.tx_power.sqrt(), T::zero());
    let noise_std = ch.noise_var_bs.sqrt();
    let decorrelate = x.adjoint() / (amp * lit::<T>(k as f64));

    // phi: N x n_full, column t is the reflection vector of slot t.
    let mut phi = CMatrix::zeros(n, n_full);
    for (t, pattern) in phase_patterns[..n_full].iter().enumerate() {
        if pattern.len() != n {
            return Err(HrisError::dim("reflection pattern", n, pattern.len()));
        }
        for (i, &p) in pattern.iter().enumerate() {
            phi[(i, t)] = crate::cis(p);
        }
    }
    // per_user[k]: M x n_full decorrelated observations.
    let mut per_user = vec![CMatrix::zeros(m, n_full); k];
    for t in 0..n_full {
        let cascade = &ch.g * DMatrix::from_diagonal(&phi.column(t).into_owned()) * &ch.h;
        let mut y = cascade * &x * amp;
        crate::hris::add_noise(&mut y, noise_std, rng);
        let y = y * &decorrelate;
        for (u, obs) in per_user.iter_mut().enumerate() {
            obs.set_column(t, &y.column(u));
        }
    }
    let phi_adj = phi.adjoint();
    let mut a_hat = Vec::with_capacity(k);
    let (mut err, mut norm) = (T::zero(), T::zero());
    for (u, obs) in per_user.iter().enumerate() {
        let est = least_squares(&phi_adj, &obs.adjoint())
            .map_err(|d| HrisError::Identifiability {
                stage: "cascaded channel (reflective RIS)",
                operator: "reflection pattern matrix",
                rank: d.rank,
                required: d.required,
            })?
            .adjoint();
        let truth = cascaded_per_user(&ch.h, &ch.g, u)?;
        err += frob_sq(&(&est - &truth));
        norm += frob_sq(&truth);
        a_hat.push(est);
    }
    Ok(BaselineEstimate {
        a_hat,
        nmse: to_f64(err / norm),
    })
}

/// System dimensions and link budget shared by the estimation experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ChestSetup {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_atoms: usize,
    pub n_rf: usize,
    pub pilots: usize,
    pub snr_db: f64,
    pub geometry: LinkGeometry<f64>,
    pub model: ChannelModel,
}

impl Default for ChestSetup {
    /// 16-antenna BS, 8 UTs, 64 atoms, 8 RF chains, 70 pilots, 30 dB.
    fn default() -> Self {
        Self {
            n_bs: 16,
            n_users: 8,
            n_atoms: 64,
            n_rf: 8,
            pilots: 70,
            snr_db: 30.0,
            geometry: LinkGeometry::reference(),
            model: ChannelModel::default(),
        }
    }
}

impl ChestSetup {
    fn draw(&self, seed: u64, experiment: u64, trial: usize) -> Result<ChannelSet<f64>> {
        let mut rng = stream(seed, experiment, trial as u64, tag::CHANNEL);
        draw_channels(
            &self.geometry,
            self.n_atoms,
            self.n_users,
            self.n_bs,
            self.model,
            &mut rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffRow {
    pub rho: f64,
    pub phase_draw: usize,
    pub n_trials: usize,
    /// Mean over trials, linear.
    pub nmse_h: f64,
    pub nmse_g: f64,
}

/// Per-atom base reflection phases for draw `d`.
pub fn phase_draw(seed: u64, n_atoms: usize, d: usize) -> Vec<f64> {
    let mut rng = stream(seed, experiment_id::CHEST_TRADEOFF, d as u64, tag::PHASES);
    (0..n_atoms).map(|_| uniform_phase(&mut rng)).collect()
}

/// Splitting-ratio trade-off between the two estimation stages.
///
/// Trial `i` reuses one channel draw and one noise realisation for every
/// `(rho, phase draw)` cell.
pub fn tradeoff_experiment(
    setup: &ChestSetup,
    rho_grid: &[f64],
    n_phase_draws: usize,
    n_trials: usize,
    seed: u64,
    workers: Workers,
) -> Result<Vec<TradeoffRow>> {
    if n_trials == 0 || n_phase_draws == 0 {
        return Err(HrisError::Parameter(
            "need at least one trial and one phase draw".into(),
        ));
    }
    let exp = experiment_id::CHEST_TRADEOFF;
    let mut cells = Vec::new();
    for &rho in rho_grid {
        for d in 0..n_phase_draws {
            let base = phase_draw(seed, setup.n_atoms, d);
            let sched = PilotSchedule::dft(
                setup.n_atoms,
                setup.n_users,
                setup.n_rf,
                setup.pilots,
                rho,
                Some(&base),
            )?;
            cells.push((rho, d, sched));
        }
    }
    let per_trial = try_run_trials(n_trials, workers, |i| {
        let ch = setup.draw(seed, exp, i)?.with_snr_db(setup.snr_db);
        cells
            .iter()
            .map(|(_, _, sched)| {
                let mut hris_rng = stream(seed, exp, i as u64, tag::HRIS_NOISE);
                let mut bs_rng = stream(seed, exp, i as u64, tag::BS_NOISE);
                let (_, _, r) = two_sided_estimate(sched, &ch, &mut hris_rng, &mut bs_rng)?;
                Ok((r.nmse_h, r.nmse_g))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, (rho, d, _))| {
            let (mut h, mut g) = (0.0, 0.0);
            for trial in &per_trial {
                h += trial[c].0;
                g += trial[c].1;
            }
            TradeoffRow {
                rho: *rho,
                phase_draw: *d,
                n_trials,
                nmse_h: h / n_trials as f64,
                nmse_g: g / n_trials as f64,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfSweepRow {
    pub n_rf: usize,
    pub snr_db: f64,
    pub n_trials: usize,
    pub pilots: usize,
    pub nmse_cascaded: f64,
    /// `None` when the reflective baseline is underdetermined at this budget.
    pub baseline_nmse: Option<f64>,
}

/// Splitting ratio used by the RF-chain sweep.
pub const RF_SWEEP_RHO: f64 = 0.5;

/// Smallest pilot budget for which every `N_r` in the grid is identifiable on
/// the HRIS side, `K * ceil(N / min N_r)`.
pub fn rf_sweep_default_pilots(setup: &ChestSetup, nr_grid: &[usize]) -> usize {
    let min_nr = nr_grid.iter().copied().min().unwrap_or(1).max(1);
    setup.n_users * setup.n_atoms.div_ceil(min_nr)
}

/// Cascaded-channel accuracy against the number of HRIS RF chains, at
/// `rho = 0.5` and a pilot budget shared by every grid point and the baseline.
pub fn rf_chain_sweep(
    setup: &ChestSetup,
    nr_grid: &[usize],
    snr_list: &[f64],
    pilots: Option<usize>,
    n_trials: usize,
    seed: u64,
    workers: Workers,
) -> Result<Vec<RfSweepRow>> {
    if n_trials == 0 {
        return Err(HrisError::Parameter("need at least one trial".into()));
    }
    let exp = experiment_id::RF_CHAIN_SWEEP;
    let pilots = pilots.unwrap_or_else(|| rf_sweep_default_pilots(setup, nr_grid));
    let scheds = nr_grid
        .iter()
        .map(|&n_rf| {
            PilotSchedule::dft(
                setup.n_atoms,
                setup.n_users,
                n_rf,
                pilots,
                RF_SWEEP_RHO,
                None,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let baseline_patterns: Vec<Vec<f64>> = (0..pilots / setup.n_users)
        .map(|t| {
            (0..setup.n_atoms)
                .map(|n| dft_phase::<f64>(setup.n_atoms, t % setup.n_atoms, n))
                .collect()
        })
        .collect();

    // Per trial: for each SNR, [hris nmse per N_r..., baseline nmse or NaN].
    let per_trial = try_run_trials(n_trials, workers, |i| {
        let base = setup.draw(seed, exp, i)?;
        snr_list
            .iter()
            .map(|&snr| {
                let ch = base.clone().with_snr_db(snr);
                let mut out = scheds
                    .iter()
                    .map(|sched| {
                        let mut hris_rng = stream(seed, exp, i as u64, tag::HRIS_NOISE);
                        let mut bs_rng = stream(seed, exp, i as u64, tag::BS_NOISE);
                        two_sided_estimate(sched, &ch, &mut hris_rng, &mut bs_rng)
                            .map(|r| r.2.nmse_cascaded)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut bs_rng = stream(seed, exp, i as u64, tag::BS_NOISE);
                let baseline =
                    match cascaded_ls_baseline(&ch, &baseline_patterns, pilots, &mut bs_rng) {
                        Ok(b) => b.nmse,
                        Err(e) if e.is_infeasibility() => f64::NAN,
                        Err(e) => return Err(e),
                    };
                out.push(baseline);
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut rows = Vec::new();
    for (s, &snr) in snr_list.iter().enumerate() {
        let baseline = per_trial.iter().map(|t| t[s][nr_grid.len()]).sum::<f64>() / n_trials as f64;
        for (j, &n_rf) in nr_grid.iter().enumerate() {
            let mean = per_trial.iter().map(|t| t[s][j]).sum::<f64>() / n_trials as f64;
            rows.push(RfSweepRow {
                n_rf,
                snr_db: snr,
                n_trials,
                pilots,
                nmse_cascaded: mean,
                baseline_nmse: baseline.is_finite().then_some(baseline),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::linalg::{numerical_rank, relative_error};
    use crate::rng::complex_normal;

    type C = Complex<f64>;

    fn channels(n: usize, k: usize, m: usize, seed: u64) -> ChannelSet<f64> {
        let mut rng = stream(seed, 0, 0, tag::CHANNEL);
        let h = CMatrix::from_fn(n, k, |_, _| complex_normal(&mut rng));
        let g = CMatrix::from_fn(m, n, |_, _| complex_normal(&mut rng));
        ChannelSet::new(h, g).unwrap()
    }

    fn rngs() -> (crate::rng::SimRng, crate::rng::SimRng) {
        (
            stream(1, 0, 0, tag::HRIS_NOISE),
            stream(1, 0, 0, tag::BS_NOISE),
        )
    }

    #[test]
    fn noiseless_reference_case_recovers_h() {
        let sched = PilotSchedule::<f64>::dft(64, 8, 8, 64, 0.5, None).unwrap();
        assert_eq!(sched.n_full_slots(), 8);
        let ch = channels(64, 8, 16, 1).noiseless();
        let est = hris_estimate_h(&sched, &ch, &mut rngs().0).unwrap();
        assert!(relative_error(&est.h_hat, &ch.h) < 1e-10);
        assert_eq!(est.observations.len(), 8);
    }

    #[test]
    fn small_case_matches_explicit_pseudoinverse() {
        // N = 4, K = 1, N_r = 2, two slots: the stacked combiner is the 4x4 DFT.
        let sched = PilotSchedule::<f64>::dft(4, 1, 2, 2, 0.36, None).unwrap();
        let ch = channels(4, 1, 2, 2).noiseless();
        let est = hris_estimate_h(&sched, &ch, &mut rngs().0).unwrap();
        // Oracle: y = 0.8 F h, so h = F^H y / (4 * 0.8).
        let f = dft_matrix::<f64>(4);
        let mut y = CMatrix::zeros(4, 1);
        y.rows_mut(0, 2).copy_from(&est.observations[0]);
        y.rows_mut(2, 2).copy_from(&est.observations[1]);
        let oracle = f.adjoint() * y / C::new(4.0 * 0.8, 0.0);
        assert!((oracle - &ch.h).norm() < 1e-12);
        assert!((est.h_hat - &ch.h).norm() < 1e-12);
    }

    #[test]
    fn one_slot_short_is_unidentifiable() {
        let sched = PilotSchedule::<f64>::dft(64, 8, 8, 56, 0.5, None).unwrap();
        let ch = channels(64, 8, 16, 1).noiseless();
        let err = hris_estimate_h(&sched, &ch, &mut rngs().0).unwrap_err();
        assert_eq!(
            err,
            HrisError::Identifiability {
                stage: "UT-HRIS channel",
                operator: "stacked combiner",
                rank: 56,
                required: 64
            }
        );
        assert!(err.to_string().contains("rank 56"));
    }

    #[test]
    fn unsensed_atom_is_rejected() {
        let sched = PilotSchedule::<f64>::dft(8, 2, 4, 8, 1.0, None).unwrap();
        let ch = channels(8, 2, 2, 1);
        assert_eq!(
            hris_estimate_h(&sched, &ch, &mut rngs().0).unwrap_err(),
            HrisError::UnsensedAtom { atom: 0 }
        );
    }

    #[test]
    fn noiseless_bs_recovers_g_with_true_h() {
        let sched = PilotSchedule::<f64>::dft(64, 8, 8, 64, 0.5, None).unwrap();
        let ch = channels(64, 8, 16, 3).noiseless();
        let g_hat = bs_estimate_g(&sched, &ch, &ch.h, &mut rngs().1).unwrap();
        assert!(relative_error(&g_hat, &ch.g) < 1e-9);
    }

    #[test]
    fn nothing_reflected_is_unidentifiable() {
        let sched = PilotSchedule::<f64>::dft(16, 4, 4, 16, 0.0, None).unwrap();
        let ch = channels(16, 4, 4, 3).noiseless();
        assert!(matches!(
            bs_estimate_g(&sched, &ch, &ch.h, &mut rngs().1),
            Err(HrisError::Identifiability {
                rank: 0,
                required: 16,
                ..
            })
        ));
    }

    #[test]
    fn bs_side_hand_solved_normal_equations() {
        // M = 2, N = 2, K = 1, two slots with reflection rows (1, 1) and (1, -1),
        // rho = 1, h = (1, 2), G = [[1, 2], [3, 4]].
        let h = CMatrix::from_row_slice(2, 1, &[C::new(1., 0.), C::new(2., 0.)]);
        let g = CMatrix::from_row_slice(
            2,
            2,
            &[
                C::new(1., 0.),
                C::new(2., 0.),
                C::new(3., 0.),
                C::new(4., 0.),
            ],
        );
        let ch = ChannelSet::new(h.clone(), g.clone()).unwrap().noiseless();
        let sched = PilotSchedule::<f64>::dft(2, 1, 1, 2, 1.0, None).unwrap();
        // Slot regressors z_0 = (1, 2), z_1 = (1, -2); Z Z^H = diag(2, 8).
        // Y = G Z = [[5, -3], [11, -5]]; G = Y Z^H (Z Z^H)^{-1}:
        // Y Z^H = [[2, 16], [6, 32]] -> [[1, 2], [3, 4]].
        let g_hat = bs_estimate_g(&sched, &ch, &h, &mut rngs().1).unwrap();
        assert!((g_hat - g).norm() < 1e-12);
    }

    #[test]
    fn baseline_exact_with_full_budget() {
        let ch = channels(8, 3, 4, 5).noiseless();
        let patterns = dft_reflection_patterns::<f64>(8, 8, 8);
        let est = cascaded_ls_baseline(&ch, &patterns, 8 * 3, &mut rngs().1).unwrap();
        assert!(est.nmse < 1e-20, "nmse {}", est.nmse);
        for (k, a) in est.a_hat.iter().enumerate() {
            let truth = cascaded_per_user(&ch.h, &ch.g, k).unwrap();
            assert!(relative_error(a, &truth) < 1e-10);
        }
    }

    #[test]
    fn baseline_two_unknowns_hand_solve() {
        // K = 1, M = 1, N = 2: y_t = a . phi_t with phi_0 = (1, 1), phi_1 = (1, -1).
        let h = CMatrix::from_row_slice(2, 1, &[C::new(2., 0.), C::new(-1., 1.)]);
        let g = CMatrix::from_row_slice(1, 2, &[C::new(0.5, 0.), C::new(3., 0.)]);
        let ch = ChannelSet::new(h, g).unwrap().noiseless();
        let patterns = vec![vec![0.0, 0.0], vec![0.0, std::f64::consts::PI]];
        let est = cascaded_ls_baseline(&ch, &patterns, 2, &mut rngs().1).unwrap();
        // a = (g0 h0, g1 h1) = (1, -3 + 3j); y0 = -2 + 3j, y1 = 4 - 3j
        // -> a0 = (y0 + y1) / 2, a1 = (y0 - y1) / 2.
        let (y0, y1) = (C::new(-2., 3.), C::new(4., -3.));
        assert!((est.a_hat[0][(0, 0)] - (y0 + y1) / 2.0).norm() < 1e-12);
        assert!((est.a_hat[0][(0, 1)] - (y0 - y1) / 2.0).norm() < 1e-12);
    }

    #[test]
    fn baseline_infeasible_at_seventy_pilots() {
        let ch = channels(64, 8, 16, 5);
        let patterns = dft_reflection_patterns::<f64>(64, 8, 8);
        let err = cascaded_ls_baseline(&ch, &patterns, 70, &mut rngs().1).unwrap_err();
        assert!(err.is_infeasibility());
        assert!(matches!(
            err,
            HrisError::Identifiability {
                rank: 8,
                required: 64,
                ..
            }
        ));
    }

    #[test]
    fn schedule_partial_slot_and_validation() {
        let sched = PilotSchedule::<f64>::dft(64, 8, 8, 70, 0.5, None).unwrap();
        assert_eq!((sched.n_slots(), sched.n_full_slots()), (9, 8));
        assert_eq!(sched.slot_symbols(8).ncols(), 6);
        assert_eq!(numerical_rank(&sched.stacked_combiner()), 64);
        let gram = sched.pilots() * sched.pilots().adjoint();
        assert!((gram - CMatrix::identity(8, 8) * C::new(8.0, 0.0)).norm() < 1e-10);

        let bad = CMatrix::from_element(2, 2, C::new(1.0, 0.0));
        let cfgs = sched.hris_configs()[..1].to_vec();
        assert!(PilotSchedule::new(bad, cfgs.clone(), 2).is_err());
        assert!(PilotSchedule::new(dft_matrix(8), cfgs, 70).is_err());
    }

    #[test]
    fn composed_cascade_exact_when_both_exact() {
        let sched = PilotSchedule::<f64>::dft(16, 4, 4, 16, 0.5, None).unwrap();
        let ch = channels(16, 4, 3, 8).noiseless();
        let (mut a, mut b) = rngs();
        let (_, _, rep) = two_sided_estimate(&sched, &ch, &mut a, &mut b).unwrap();
        assert!(rep.nmse_h < 1e-20 && rep.nmse_g < 1e-18 && rep.nmse_cascaded < 1e-18);
    }

    #[test]
    fn one_chain_per_atom_is_exact() {
        let setup = ChestSetup {
            n_atoms: 16,
            n_users: 4,
            n_bs: 4,
            ..ChestSetup::default()
        };
        let sched = PilotSchedule::<f64>::dft(16, 4, 16, 16, RF_SWEEP_RHO, None).unwrap();
        let ch = setup.draw(3, 0, 0).unwrap().noiseless();
        let (mut a, mut b) = rngs();
        let (_, _, rep) = two_sided_estimate(&sched, &ch, &mut a, &mut b).unwrap();
        assert!(rep.nmse_cascaded < 1e-18, "{}", rep.nmse_cascaded);
    }

    #[test]
    fn estimators_are_deterministic() {
        let sched = PilotSchedule::<f64>::dft(16, 4, 4, 18, 0.4, None).unwrap();
        let ch = channels(16, 4, 3, 8).with_snr_db(10.0);
        let run = || {
            let (mut a, mut b) = rngs();
            two_sided_estimate(&sched, &ch, &mut a, &mut b).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn h_nmse_improves_with_sensed_power() {
        let ch = channels(32, 4, 8, 9).with_snr_db(10.0);
        let mut last = f64::INFINITY;
        for i in 1..=9 {
            let sensed = i as f64 / 10.0;
            let sched = PilotSchedule::<f64>::dft(32, 4, 8, 16, 1.0 - sensed, None).unwrap();
            let est = hris_estimate_h(&sched, &ch, &mut rngs().0).unwrap();
            let e = nmse(&est.h_hat, &ch.h);
            assert!(e < last, "sensed {sensed}: {e} >= {last}");
            last = e;
        }
    }
}
