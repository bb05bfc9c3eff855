//! Elevation angle-of-arrival estimation from single-RF-chain HRIS samples.
//!
//! All atoms feed one waveguide and one RF chain. Snapshot `t` is combined with
//! the phase-only row `w_t` and carries the known pilot `s_t`:
//!
//! ```text
//! y_t = alpha * g_t(theta) * s_t + n_t,   g_t(theta) = sqrt(f) * w_t^H a(theta)
//! ```
//!
//! with `f` the sensed fraction `1 - rho`, `alpha` an unknown complex
//! amplitude (true value `sqrt(tx_power)`), and `n_t ~ CN(0, 1)`. The complex
//! amplitude is concentrated out of the likelihood, which leaves the
//! normalized matched-filter criterion maximized in [`MlEstimator`].

use num_complex::Complex;
use rand::Rng;

use crate::array::{Direction, PlanarArray};
use crate::linalg::{check_len, CMatrix, CVector};
use crate::montecarlo::{experiment_id, run_trials, Workers};
use crate::rng::{complex_normal, stream, tag};
use crate::{lit, HrisError, Real, Result};

/// Combining rows used across the `T` snapshots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AoaCombiner {
    /// Beams swept uniformly in sine space along the known azimuth,
    /// `sin(theta_t) = (t + 1/2) / T`.
    BeamSweep,
    /// Every snapshot uses the beam pointed at this elevation.
    Directive { elevation_rad: f64 },
}

/// Scenario for one AoA measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct AoaScenario<T: Real> {
    array: PlanarArray<T>,
    sensed_fraction: T,
    snr_db: T,
    true_direction: Direction<T>,
    /// `T x N`, row `t` is `w_t`.
    combiners: CMatrix<T>,
    pilots: CVector<T>,
}

impl<T: Real> AoaScenario<T> {
    pub fn new(
        array: PlanarArray<T>,
        sensed_fraction: T,
        snr_db: T,
        true_direction: Direction<T>,
        combiners: CMatrix<T>,
        pilots: CVector<T>,
    ) -> Result<Self> {
        if !(sensed_fraction > T::zero() && sensed_fraction <= T::one()) {
            return Err(HrisError::Parameter(format!(
                "sensed fraction must lie in (0, 1], got {sensed_fraction}"
            )));
        }
        if combiners.nrows() == 0 {
            return Err(HrisError::Parameter("need at least one snapshot".into()));
        }
        check_len("AoA combiner row length", array.len(), combiners.ncols())?;
        check_len("AoA pilot count", combiners.nrows(), pilots.len())?;
        let tol = lit::<T>(1e-5);
        if combiners
            .iter()
            .any(|z| (z.norm_sqr().sqrt() - T::one()).abs() > tol)
        {
            return Err(HrisError::Parameter(
                "AoA combiner entries must have unit modulus".into(),
            ));
        }
        if pilots
            .iter()
            .any(|z| (z.norm_sqr().sqrt() - T::one()).abs() > tol)
        {
            return Err(HrisError::Parameter(
                "AoA pilots must have unit magnitude".into(),
            ));
        }
        if !snr_db.is_finite() {
            return Err(HrisError::Parameter("SNR must be finite".into()));
        }
        Ok(Self {
            array,
            sensed_fraction,
            snr_db,
            true_direction,
            combiners,
            pilots,
        })
    }

    /// Scenario with `n_snapshots` unit pilots and the given combiner family.
    pub fn with_schedule(
        array: PlanarArray<T>,
        sensed_fraction: T,
        snr_db: T,
        true_direction: Direction<T>,
        n_snapshots: usize,
        combiner: AoaCombiner,
    ) -> Result<Self> {
        let combiners = aoa_combiners(&array, true_direction.azimuth(), n_snapshots, combiner)?;
        let pilots = CVector::from_element(n_snapshots, Complex::new(T::one(), T::zero()));
        Self::new(
            array,
            sensed_fraction,
            snr_db,
            true_direction,
            combiners,
            pilots,
        )
    }

    pub fn array(&self) -> &PlanarArray<T> {
        &self.array
    }

    pub fn sensed_fraction(&self) -> T {
        self.sensed_fraction
    }

    pub fn snr_db(&self) -> T {
        self.snr_db
    }

    pub fn true_direction(&self) -> Direction<T> {
        self.true_direction
    }

    pub fn n_snapshots(&self) -> usize {
        self.combiners.nrows()
    }

    pub fn combiners(&self) -> &CMatrix<T> {
        &self.combiners
    }

    pub fn pilots(&self) -> &CVector<T> {
        &self.pilots
    }

    /// Transmit power for unit noise variance.
    pub fn tx_power(&self) -> T {
        lit::<T>(10.0).powf(self.snr_db / lit(10.0))
    }

    pub fn noise_var(&self) -> T {
        T::one()
    }

    pub fn with_truth(mut self, true_direction: Direction<T>) -> Self {
        self.true_direction = true_direction;
        self
    }

    pub fn with_snr_db(mut self, snr_db: T) -> Self {
        self.snr_db = snr_db;
        self
    }

    pub fn with_sensed_fraction(mut self, sensed_fraction: T) -> Result<Self> {
        if !(sensed_fraction > T::zero() && sensed_fraction <= T::one()) {
            return Err(HrisError::Parameter(format!(
                "sensed fraction must lie in (0, 1], got {sensed_fraction}"
            )));
        }
        self.sensed_fraction = sensed_fraction;
        Ok(self)
    }

    /// Direction at elevation `theta` on the scenario's (known) azimuth.
    pub fn direction_at(&self, theta: T) -> Direction<T> {
        Direction::new(theta, self.true_direction.azimuth()).unwrap_or(self.true_direction)
    }

    /// Noise-free per-snapshot responses `g_t(theta)`.
    pub fn responses(&self, theta: T) -> CVector<T> {
        let a = self.array.steering_vector(&self.direction_at(theta));
        self.project(&a)
    }

    /// `d g_t / d theta`, from the analytic steering-vector derivative.
    pub fn response_derivatives(&self, theta: T) -> CVector<T> {
        let da = self
            .array
            .steering_derivative_elevation(&self.direction_at(theta));
        self.project(&da)
    }

    fn project(&self, v: &CVector<T>) -> CVector<T> {
        let amp = Complex::new(self.sensed_fraction.sqrt(), T::zero());
        (self.combiners.conjugate() * v) * amp
    }
}

/// Builds `T` combining rows on the azimuth cut `azimuth`.
pub fn aoa_combiners<T: Real>(
    array: &PlanarArray<T>,
    azimuth: T,
    n_snapshots: usize,
    kind: AoaCombiner,
) -> Result<CMatrix<T>> {
    if n_snapshots == 0 {
        return Err(HrisError::Parameter("need at least one snapshot".into()));
    }
    let beam = |elevation: T| -> Result<CVector<T>> {
        Ok(array.steering_vector(&Direction::new(elevation, azimuth)?))
    };
    let mut out = CMatrix::zeros(n_snapshots, array.len());
    for t in 0..n_snapshots {
        let elevation = match kind {
            AoaCombiner::BeamSweep => {
                let s = (t as f64 + 0.5) / n_snapshots as f64;
                lit::<T>(s.asin())
            }
            AoaCombiner::Directive { elevation_rad } => lit(elevation_rad),
        };
        out.row_mut(t).copy_from(&beam(elevation)?.transpose());
    }
    Ok(out)
}

/// Search interval and refinement depth for the ML estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaGrid<T: Real> {
    pub lo_rad: T,
    pub hi_rad: T,
    pub n_points: usize,
    pub refine_iters: usize,
}

impl<T: Real> AoaGrid<T> {
    pub fn new(lo_rad: T, hi_rad: T, n_points: usize, refine_iters: usize) -> Result<Self> {
        if !(lo_rad < hi_rad) || n_points < 2 {
            return Err(HrisError::Parameter(format!(
                "AoA grid needs lo < hi and >= 2 points, got [{lo_rad}, {hi_rad}] with {n_points}"
            )));
        }
        if lo_rad < T::zero() || hi_rad >= T::frac_pi_2() {
            return Err(HrisError::Parameter(
                "AoA grid must lie within [0, pi/2)".into(),
            ));
        }
        Ok(Self {
            lo_rad,
            hi_rad,
            n_points,
            refine_iters,
        })
    }

    pub fn step(&self) -> T {
        (self.hi_rad - self.lo_rad) / lit::<T>((self.n_points - 1) as f64)
    }

    pub fn point(&self, i: usize) -> T {
        if i + 1 == self.n_points {
            self.hi_rad
        } else {
            self.lo_rad + self.step() * lit::<T>(i as f64)
        }
    }
}

impl<T: Real> Default for AoaGrid<T> {
    /// 721 points over `[0, 89.75]` degrees, 60 golden-section passes.
    fn default() -> Self {
        Self {
            lo_rad: T::zero(),
            hi_rad: lit(89.75f64.to_radians()),
            n_points: 721,
            refine_iters: 60,
        }
    }
}

/// `y_t = sqrt(tx_power) g_t(theta*) s_t + n_t` with unit-variance noise.
pub fn simulate_snapshots<T: Real, R: Rng + ?Sized>(
    sc: &AoaScenario<T>,
    rng: &mut R,
) -> CVector<T> {
    let amp = Complex::new(sc.tx_power().sqrt(), T::zero());
    let noise_std = sc.noise_var().sqrt();
    let g = sc.responses(sc.true_direction.elevation());
    CVector::from_iterator(
        sc.n_snapshots(),
        g.iter()
            .zip(sc.pilots.iter())
            .map(|(g, s)| g * s * amp + complex_normal::<T, _>(rng) * noise_std),
    )
}

/// Noise-free samples at the scenario's true direction.
pub fn noiseless_snapshots<T: Real>(sc: &AoaScenario<T>) -> CVector<T> {
    let amp = Complex::new(sc.tx_power().sqrt(), T::zero());
    sc.responses(sc.true_direction.elevation())
        .component_mul(&sc.pilots)
        * amp
}

/// Concentrated-likelihood ML estimator with precomputed grid responses.
#[derive(Debug, Clone)]
pub struct MlEstimator<T: Real> {
    scenario: AoaScenario<T>,
    grid: AoaGrid<T>,
    /// `n_points x T`, conjugated `g_t(theta_i) s_t`.
    grid_templates: CMatrix<T>,
    grid_energy: Vec<T>,
}

impl<T: Real> MlEstimator<T> {
    pub fn new(scenario: &AoaScenario<T>, grid: &AoaGrid<T>) -> Self {
        let n_t = scenario.n_snapshots();
        let mut grid_templates = CMatrix::zeros(grid.n_points, n_t);
        let mut grid_energy = Vec::with_capacity(grid.n_points);
        for i in 0..grid.n_points {
            let b = scenario
                .responses(grid.point(i))
                .component_mul(&scenario.pilots);
            grid_energy.push(b.norm_squared());
            grid_templates
                .row_mut(i)
                .copy_from(&b.conjugate().transpose());
        }
        Self {
            scenario: scenario.clone(),
            grid: *grid,
            grid_templates,
            grid_energy,
        }
    }

    /// `|sum_t y_t conj(g_t s_t)|^2 / sum_t |g_t s_t|^2`; zero where the
    /// template vanishes.
    pub fn criterion(&self, y: &CVector<T>, theta: T) -> T {
        let b = self
            .scenario
            .responses(theta)
            .component_mul(&self.scenario.pilots);
        let energy = b.norm_squared();
        if energy <= T::zero() {
            return T::zero();
        }
        b.dotc(y).norm_sqr() / energy
    }

    pub fn estimate(&self, y: &CVector<T>) -> Result<T> {
        check_len("AoA snapshots", self.scenario.n_snapshots(), y.len())?;
        let corr = &self.grid_templates * y;
        let mut best: Option<(usize, T)> = None;
        for (i, (c, &e)) in corr.iter().zip(&self.grid_energy).enumerate() {
            if e <= T::zero() {
                continue;
            }
            let v = c.norm_sqr() / e;
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let Some((i, coarse)) = best else {
            return Err(HrisError::EstimationInfeasible(
                "combined response vanishes at every grid angle".into(),
            ));
        };
        let theta_grid = self.grid.point(i);
        if self.grid.refine_iters == 0 {
            return Ok(theta_grid);
        }
        let lo = if i == 0 {
            self.grid.lo_rad
        } else {
            self.grid.point(i - 1)
        };
        let hi = if i + 1 == self.grid.n_points {
            self.grid.hi_rad
        } else {
            self.grid.point(i + 1)
        };
        let (theta, value) =
            golden_section_max(|t| self.criterion(y, t), lo, hi, self.grid.refine_iters);
        Ok(if value >= coarse { theta } else { theta_grid })
    }
}

/// Grid search plus golden-section refinement of the concentrated criterion.
pub fn ml_estimate<T: Real>(y: &CVector<T>, sc: &AoaScenario<T>, grid: &AoaGrid<T>) -> Result<T> {
    MlEstimator::new(sc, grid).estimate(y)
}

/// Maximizes `f` on `[lo, hi]`; returns the best point seen and its value.
fn golden_section_max<T: Real, F: Fn(T) -> T>(f: F, lo: T, hi: T, iters: usize) -> (T, T) {
    let inv_phi = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    let mid = (a + b) * lit(0.5);
    let fm = f(mid);
    [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |acc, x| if x.1 > acc.1 { x } else { acc })
}

/// Cramér-Rao bound on the elevation variance (rad^2) with the complex
/// amplitude as nuisance:
///
/// ```text
/// CRLB = sigma^2 / (2 |alpha|^2 P_perp)
/// P_perp = sum |g'_t s_t|^2 - |sum g'_t conj(g_t) |s_t|^2|^2 / sum |g_t s_t|^2
/// ```
pub fn crlb_elevation<T: Real>(sc: &AoaScenario<T>) -> Result<T> {
    let theta = sc.true_direction.elevation();
    let b = sc.responses(theta).component_mul(&sc.pilots);
    let db = sc.response_derivatives(theta).component_mul(&sc.pilots);
    let energy = b.norm_squared();
    if energy <= T::zero() {
        return Err(HrisError::EstimationInfeasible(
            "combined response vanishes at the true angle".into(),
        ));
    }
    let d_energy = db.norm_squared();
    let p_perp = d_energy - b.dotc(&db).norm_sqr() / energy;
    if !(p_perp > d_energy * lit::<T>(1e-12)) {
        return Err(HrisError::EstimationInfeasible(
            "elevation is unidentifiable: derivative lies in the amplitude subspace".into(),
        ));
    }
    Ok(sc.noise_var() / (lit::<T>(2.0) * sc.tx_power() * p_perp))
}

/// RMSE study over array sizes, sensed fractions and SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct AoaExperiment {
    /// Side lengths of square arrays (12 -> 144 atoms).
    pub array_sides: Vec<usize>,
    pub spacing_m: f64,
    pub wavelength_m: f64,
    pub sensed_fractions: Vec<f64>,
    pub n_snapshots: usize,
    pub snr_db: Vec<f64>,
    pub n_trials: usize,
    /// Known azimuth of the impinging wave.
    pub azimuth_rad: f64,
    /// True elevations are drawn uniformly from this interval.
    pub truth_lo_rad: f64,
    pub truth_hi_rad: f64,
    pub combiner: AoaCombiner,
    pub grid: AoaGrid<f64>,
    pub seed: u64,
}

impl Default for AoaExperiment {
    fn default() -> Self {
        Self {
            array_sides: vec![12, 20],
            spacing_m: crate::array::DEFAULT_SPACING_M,
            wavelength_m: crate::array::DEFAULT_WAVELENGTH_M,
            sensed_fractions: vec![0.2, 0.8],
            n_snapshots: 64,
            snr_db: (-2..=6).map(|i| f64::from(i) * 5.0).collect(),
            n_trials: 500,
            azimuth_rad: 0.0,
            truth_lo_rad: 5f64.to_radians(),
            truth_hi_rad: 70f64.to_radians(),
            combiner: AoaCombiner::BeamSweep,
            grid: AoaGrid::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaRow {
    pub n_atoms: usize,
    pub sensed_fraction: f64,
    pub snr_db: f64,
    pub n_trials: usize,
    pub rmse_rad: f64,
    pub rmse_deg: f64,
    /// Square root of the CRLB averaged over the drawn truths.
    pub crlb_rad: f64,
}

struct TrialOutcome {
    sq_err: f64,
    crlb: f64,
}

/// Runs the study. Trial `i` uses the same truth and noise in every cell.
pub fn rmse_experiment(exp: &AoaExperiment, workers: Workers) -> Result<Vec<AoaRow>> {
    if exp.n_trials == 0 {
        return Err(HrisError::Parameter("need at least one trial".into()));
    }
    if !(exp.truth_lo_rad >= exp.grid.lo_rad && exp.truth_hi_rad <= exp.grid.hi_rad)
        || exp.truth_lo_rad > exp.truth_hi_rad
    {
        return Err(HrisError::Parameter(
            "truth interval must lie inside the search grid".into(),
        ));
    }
    let truths: Vec<f64> = (0..exp.n_trials)
        .map(|i| {
            let mut rng = stream(exp.seed, experiment_id::AOA_RMSE, i as u64, tag::TRUTH);
            exp.truth_lo_rad + (exp.truth_hi_rad - exp.truth_lo_rad) * rng.random::<f64>()
        })
        .collect();

    let mut rows = Vec::new();
    for &side in &exp.array_sides {
        let array = PlanarArray::new(side, side, exp.spacing_m, exp.wavelength_m)?;
        let base_dir = Direction::new(exp.truth_lo_rad, exp.azimuth_rad)?;
        for &fraction in &exp.sensed_fractions {
            let base = AoaScenario::with_schedule(
                array.clone(),
                fraction,
                0.0,
                base_dir,
                exp.n_snapshots,
                exp.combiner,
            )?;
            let estimator = MlEstimator::new(&base, &exp.grid);
            for &snr in &exp.snr_db {
                let outcomes = run_trials(exp.n_trials, workers, |i| -> Result<TrialOutcome> {
                    let truth = truths[i];
                    let sc = base
                        .clone()
                        .with_snr_db(snr)
                        .with_truth(Direction::new(truth, exp.azimuth_rad)?);
                    let mut rng = stream(
                        exp.seed,
                        experiment_id::AOA_RMSE,
                        i as u64,
                        tag::SENSING_NOISE,
                    );
                    let y = simulate_snapshots(&sc, &mut rng);
                    let est = estimator.estimate(&y)?;
                    Ok(TrialOutcome {
                        sq_err: (est - truth).powi(2),
                        crlb: crlb_elevation(&sc)?,
                    })
                })?
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                let n = outcomes.len() as f64;
                let mse = outcomes.iter().map(|o| o.sq_err).sum::<f64>() / n;
                let crlb = outcomes.iter().map(|o| o.crlb).sum::<f64>() / n;
                rows.push(AoaRow {
                    n_atoms: array.len(),
                    sensed_fraction: fraction,
                    snr_db: snr,
                    n_trials: exp.n_trials,
                    rmse_rad: mse.sqrt(),
                    rmse_deg: mse.sqrt().to_degrees(),
                    crlb_rad: crlb.sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scenario(side: usize, fraction: f64, snr: f64, theta: f64, t: usize) -> AoaScenario<f64> {
        AoaScenario::with_schedule(
            PlanarArray::square_default(side).unwrap(),
            fraction,
            snr,
            Direction::new(theta, 0.0).unwrap(),
            t,
            AoaCombiner::BeamSweep,
        )
        .unwrap()
    }

    #[test]
    fn matched_combiner_peak() {
        let theta = 0.4;
        let array = PlanarArray::<f64>::square_default(6).unwrap();
        let sc = AoaScenario::with_schedule(
            array,
            1.0,
            20.0,
            Direction::new(theta, 0.0).unwrap(),
            1,
            AoaCombiner::Directive {
                elevation_rad: theta,
            },
        )
        .unwrap();
        let y = noiseless_snapshots(&sc);
        assert!((y[0].norm() - 36.0 * 10.0).abs() < 1e-9);
    }

    #[test]
    fn sensed_fraction_scales_power_linearly() {
        let lo = scenario(6, 0.2, 10.0, 0.5, 16);
        let hi = lo.clone().with_sensed_fraction(0.8).unwrap();
        let (p_lo, p_hi) = (
            noiseless_snapshots(&lo).norm_squared(),
            noiseless_snapshots(&hi).norm_squared(),
        );
        assert!((p_lo / p_hi - 0.25).abs() < 1e-12);
    }

    #[test]
    fn noise_only_variance() {
        let sc = scenario(2, 1e-300, 0.0, 0.3, 1000);
        let mut rng = stream(5, 0, 0, 0);
        let mut acc = 0.0;
        for _ in 0..100 {
            acc += simulate_snapshots(&sc, &mut rng).norm_squared();
        }
        let var = acc / 100_000.0;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn noiseless_on_grid_truth_is_exact() {
        let grid = AoaGrid::<f64>::default();
        let truth = grid.point(200);
        let sc = scenario(12, 0.8, 10.0, truth, 64);
        let y = noiseless_snapshots(&sc);
        let coarse = AoaGrid {
            refine_iters: 0,
            ..grid
        };
        assert_eq!(ml_estimate(&y, &sc, &coarse).unwrap(), truth);
        let refined = ml_estimate(&y, &sc, &grid).unwrap();
        assert!((refined - truth).abs() < 1e-9);
    }

    #[test]
    fn noiseless_off_grid_refines_below_microradian() {
        let grid = AoaGrid::<f64> {
            refine_iters: 30,
            ..AoaGrid::default()
        };
        let truth = 0.5 * (grid.point(300) + grid.point(301)) + 1.3e-4;
        let sc = scenario(12, 0.2, 0.0, truth, 64);
        let est = ml_estimate(&noiseless_snapshots(&sc), &sc, &grid).unwrap();
        assert!((est - truth).abs() < 1e-6, "error {}", est - truth);
    }

    #[test]
    fn vanishing_response_is_infeasible() {
        let sc = scenario(4, 0.5, 0.0, 0.3, 4);
        let mut est = MlEstimator::new(&sc, &AoaGrid::default());
        est.grid_energy.iter_mut().for_each(|e| *e = 0.0);
        assert!(matches!(
            est.estimate(&CVector::zeros(4)),
            Err(HrisError::EstimationInfeasible(_))
        ));
        assert!(est.estimate(&CVector::zeros(3)).is_err());
    }

    #[test]
    fn analytic_derivative_matches_finite_difference() {
        let sc = scenario(12, 0.8, 10.0, 0.6, 64);
        let h = 1e-6;
        let fd = (sc.responses(0.6 + h) - sc.responses(0.6 - h)) / Complex::new(2.0 * h, 0.0);
        let an = sc.response_derivatives(0.6);
        let rel = (fd - &an).norm() / an.norm();
        assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn repeating_the_schedule_halves_the_bound() {
        let sc = scenario(12, 0.8, 5.0, 0.7, 64);
        let twice = AoaScenario::new(
            sc.array().clone(),
            0.8,
            5.0,
            sc.true_direction(),
            {
                let mut m = CMatrix::zeros(128, 144);
                m.rows_mut(0, 64).copy_from(sc.combiners());
                m.rows_mut(64, 64).copy_from(sc.combiners());
                m
            },
            CVector::from_element(128, Complex::new(1.0, 0.0)),
        )
        .unwrap();
        let (a, b) = (
            crlb_elevation(&sc).unwrap(),
            crlb_elevation(&twice).unwrap(),
        );
        assert!((a / b - 2.0).abs() < 1e-10);
    }

    #[test]
    fn crlb_infeasible_for_single_directive_snapshot() {
        // One snapshot: the derivative always lies in the amplitude subspace.
        let sc = scenario(4, 0.5, 0.0, 0.3, 1);
        assert!(matches!(
            crlb_elevation(&sc),
            Err(HrisError::EstimationInfeasible(_))
        ));
    }

    #[test]
    fn crlb_decreases_with_snr_and_fraction() {
        let sc = scenario(12, 0.2, 0.0, 0.5, 64);
        let base = crlb_elevation(&sc).unwrap();
        assert!(crlb_elevation(&sc.clone().with_snr_db(10.0)).unwrap() < base);
        assert!(crlb_elevation(&sc.with_sensed_fraction(0.8).unwrap()).unwrap() < base);
    }

    #[test]
    fn zero_noise_column_is_exact() {
        let exp = AoaExperiment {
            array_sides: vec![6],
            snr_db: vec![300.0],
            n_trials: 20,
            n_snapshots: 32,
            ..AoaExperiment::default()
        };
        let rows = rmse_experiment(&exp, Workers(2)).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.rmse_rad < 1e-6), "{rows:?}");
    }

    #[test]
    fn experiment_rejects_bad_inputs() {
        let exp = AoaExperiment {
            n_trials: 0,
            ..AoaExperiment::default()
        };
        assert!(rmse_experiment(&exp, Workers(1)).is_err());
        let exp = AoaExperiment {
            truth_hi_rad: 1.6,
            ..AoaExperiment::default()
        };
        assert!(rmse_experiment(&exp, Workers(1)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn estimate_invariant_to_phase_and_scale(
            seed in any::<u64>(), gamma in 0.0..std::f64::consts::TAU, scale in 0.01..100.0f64, theta in 0.1..1.3f64,
        ) {
            let sc = scenario(4, 0.5, 5.0, theta, 16);
            let grid = AoaGrid::<f64> { n_points: 181, ..AoaGrid::default() };
            let est = MlEstimator::new(&sc, &grid);
            let y = simulate_snapshots(&sc, &mut stream(seed, 0, 0, 0));
            let base = est.estimate(&y).unwrap();
            let rotated = est.estimate(&(y.clone() * Complex::from_polar(1.0, gamma))).unwrap();
            let scaled = est.estimate(&(y.clone() * Complex::new(scale, 0.0))).unwrap();
            // Refinement resolves a flat maximum only to ~sqrt(eps).
            prop_assert!((base - rotated).abs() < 1e-7);
            prop_assert!((base - scaled).abs() < 1e-7);

            let coarse = MlEstimator::new(&sc, &AoaGrid { refine_iters: 0, ..grid });
            let base = coarse.estimate(&y).unwrap();
            prop_assert_eq!(base, coarse.estimate(&(y.clone() * Complex::from_polar(1.0, gamma))).unwrap());
            prop_assert_eq!(base, coarse.estimate(&(y * Complex::new(scale, 0.0))).unwrap());
        }
    }
}
