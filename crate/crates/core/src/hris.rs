//! Per-atom power splitting into a phase-shifted reflection and an
//! analog-combined sensed path feeding `N_r` RF chains.

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;

use crate::array::wrap_phase;
use crate::linalg::{check_len, check_shape, dft_entry, CMatrix, CVector};
use crate::rng::{complex_normal, stream, tag, uniform_phase};
use crate::{cis, lit, HrisError, Real, Result};

/// HRIS configuration: splitting ratios, reflection and sensing phases, and the
/// phase-only analog combiner from atoms to RF chains.
///
/// `rho[n]` is the fraction of the energy impinging on atom `n` that is
/// reflected; `1 - rho[n]` goes to the sensing circuitry.
#[derive(Debug, Clone, PartialEq)]
pub struct HrisConfig<T: Real> {
    rho: Vec<T>,
    reflect_phase: Vec<T>,
    sense_phase: Vec<T>,
    combiner: CMatrix<T>,
}

impl<T: Real> HrisConfig<T> {
    pub fn new(
        rho: Vec<T>,
        reflect_phase: Vec<T>,
        sense_phase: Vec<T>,
        combiner: CMatrix<T>,
    ) -> Result<Self> {
        let n = rho.len();
        if n == 0 {
            return Err(HrisError::Parameter("HRIS needs at least one atom".into()));
        }
        check_len("reflect_phase", n, reflect_phase.len())?;
        check_len("sense_phase", n, sense_phase.len())?;
        check_len("combiner columns", n, combiner.ncols())?;
        if combiner.nrows() == 0 || combiner.nrows() > n {
            return Err(HrisError::Parameter(format!(
                "number of RF chains must be in 1..={n}, got {}",
                combiner.nrows()
            )));
        }
        if let Some(i) = rho
            .iter()
            .position(|r| !(*r >= T::zero() && *r <= T::one()))
        {
            return Err(HrisError::Parameter(format!(
                "rho[{i}] = {} outside [0, 1]",
                rho[i]
            )));
        }
        if reflect_phase
            .iter()
            .chain(&sense_phase)
            .any(|p| !p.is_finite())
        {
            return Err(HrisError::Parameter("phases must be finite".into()));
        }
        let tol = lit::<T>(1e-5);
        if combiner
            .iter()
            .any(|z| (z.norm_sqr().sqrt() - T::one()).abs() > tol)
        {
            return Err(HrisError::Parameter(
                "analog combiner entries must have unit modulus".into(),
            ));
        }
        Ok(Self {
            rho,
            reflect_phase: reflect_phase.into_iter().map(wrap_phase).collect(),
            sense_phase: sense_phase.into_iter().map(wrap_phase).collect(),
            combiner,
        })
    }

    /// Uniform splitting ratio, zero phases on both paths.
    pub fn uniform(rho: T, combiner: CMatrix<T>) -> Result<Self> {
        let n = combiner.ncols();
        Self::new(
            vec![rho; n],
            vec![T::zero(); n],
            vec![T::zero(); n],
            combiner,
        )
    }

    pub fn with_reflect_phase(self, reflect_phase: Vec<T>) -> Result<Self> {
        Self::new(self.rho, reflect_phase, self.sense_phase, self.combiner)
    }

    pub fn with_sense_phase(self, sense_phase: Vec<T>) -> Result<Self> {
        Self::new(self.rho, self.reflect_phase, sense_phase, self.combiner)
    }

    pub fn with_combiner(self, combiner: CMatrix<T>) -> Result<Self> {
        Self::new(self.rho, self.reflect_phase, self.sense_phase, combiner)
    }

    pub fn n_atoms(&self) -> usize {
        self.rho.len()
    }

    pub fn n_rf_chains(&self) -> usize {
        self.combiner.nrows()
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn reflect_phase(&self) -> &[T] {
        &self.reflect_phase
    }

    pub fn sense_phase(&self) -> &[T] {
        &self.sense_phase
    }

    pub fn combiner(&self) -> &CMatrix<T> {
        &self.combiner
    }

    /// Per-atom reflection coefficients `sqrt(rho_n) exp(j phi_n)`.
    pub fn reflection_coefficients(&self) -> CVector<T> {
        CVector::from_iterator(
            self.n_atoms(),
            self.rho
                .iter()
                .zip(&self.reflect_phase)
                .map(|(&r, &p)| cis(p) * r.sqrt()),
        )
    }

    /// Per-atom sensed amplitudes before combining, `sqrt(1 - rho_n) exp(j psi_n)`.
    pub fn sensing_coefficients(&self) -> CVector<T> {
        CVector::from_iterator(
            self.n_atoms(),
            self.rho
                .iter()
                .zip(&self.sense_phase)
                .map(|(&r, &p)| cis(p) * (T::one() - r).sqrt()),
        )
    }

    pub fn build_signals(&self) -> HrisSignals<T> {
        build_signals(self)
    }
}

/// Linear maps realised by an [`HrisConfig`]: the diagonal reflection and the
/// end-to-end atoms-to-RF-chain sensing map.
#[derive(Debug, Clone, PartialEq)]
pub struct HrisSignals<T: Real> {
    /// Diagonal of the `N x N` reflected-path multiplier.
    pub reflected_gain: CVector<T>,
    /// `N_r x N` sensed-path map, `combiner * diag(sqrt(1 - rho) e^{j psi})`.
    pub sensed_map: CMatrix<T>,
}

pub fn build_signals<T: Real>(cfg: &HrisConfig<T>) -> HrisSignals<T> {
    let s = cfg.sensing_coefficients();
    let mut sensed_map = cfg.combiner.clone();
    for (mut col, coef) in sensed_map.column_iter_mut().zip(s.iter()) {
        col *= *coef;
    }
    HrisSignals {
        reflected_gain: cfg.reflection_coefficients(),
        sensed_map,
    }
}

impl<T: Real> HrisSignals<T> {
    pub fn n_atoms(&self) -> usize {
        self.reflected_gain.len()
    }

    pub fn n_rf_chains(&self) -> usize {
        self.sensed_map.nrows()
    }

    /// Dense `N x N` form of the reflected-path multiplier.
    pub fn reflected_gain_matrix(&self) -> CMatrix<T> {
        CMatrix::from_diagonal(&self.reflected_gain)
    }

    /// RF-chain samples `sensed_map * incident + noise`, one circular complex
    /// Gaussian of variance `noise_std^2` per chain.
    pub fn sense<R: Rng + ?Sized>(
        &self,
        incident: &CVector<T>,
        noise_std: T,
        rng: &mut R,
    ) -> Result<CVector<T>> {
        check_len("sense incident field", self.n_atoms(), incident.len())?;
        check_noise(noise_std)?;
        let mut out = &self.sensed_map * incident;
        if noise_std > T::zero() {
            for z in out.iter_mut() {
                *z += complex_normal::<T, _>(rng) * noise_std;
            }
        }
        Ok(out)
    }

    /// Sensed block for `N x L` incident snapshots; noise drawn column by column.
    pub fn sense_block<R: Rng + ?Sized>(
        &self,
        incident: &CMatrix<T>,
        noise_std: T,
        rng: &mut R,
    ) -> Result<CMatrix<T>> {
        check_shape(
            "sense incident block",
            (self.n_atoms(), incident.ncols()),
            incident.shape(),
        )?;
        check_noise(noise_std)?;
        let mut out = &self.sensed_map * incident;
        add_noise(&mut out, noise_std, rng);
        Ok(out)
    }

    /// Passive reflection `diag(reflected_gain) * incident`.
    pub fn reflect(&self, incident: &CVector<T>) -> Result<CVector<T>> {
        check_len("reflect incident field", self.n_atoms(), incident.len())?;
        Ok(incident.component_mul(&self.reflected_gain))
    }
}

fn check_noise<T: Real>(noise_std: T) -> Result<()> {
    if noise_std >= T::zero() && noise_std.is_finite() {
        Ok(())
    } else {
        Err(HrisError::Parameter(format!(
            "noise standard deviation must be finite and >= 0, got {noise_std}"
        )))
    }
}

/// Adds i.i.d. `CN(0, noise_std^2)` entries in column-major order.
pub(crate) fn add_noise<T: Real, R: Rng + ?Sized>(m: &mut CMatrix<T>, noise_std: T, rng: &mut R) {
    if noise_std > T::zero() {
        for z in m.iter_mut() {
            *z += complex_normal::<T, _>(rng) * noise_std;
        }
    }
}

/// Family of analog combiner patterns used across pilot slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombinerKind {
    /// Slot `t` uses DFT rows `t*N_r .. t*N_r + N_r - 1` (mod N).
    Dft,
    /// I.i.d. uniform phases from the given seed.
    RandomPhase { seed: u64 },
}

/// Sequence of `n_slots` unit-modulus `N_r x N` combiners.
pub fn combiner_schedule<T: Real>(
    n_atoms: usize,
    n_rf: usize,
    n_slots: usize,
    kind: CombinerKind,
) -> Result<Vec<CMatrix<T>>> {
    if n_atoms == 0 || n_rf == 0 || n_rf > n_atoms {
        return Err(HrisError::Parameter(format!(
            "combiner needs 1 <= N_r <= N, got N_r = {n_rf}, N = {n_atoms}"
        )));
    }
    if n_slots == 0 {
        return Err(HrisError::Parameter(
            "combiner schedule needs at least one slot".into(),
        ));
    }
    let schedule = match kind {
        CombinerKind::Dft => (0..n_slots)
            .map(|t| DMatrix::from_fn(n_rf, n_atoms, |r, c| dft_entry(n_atoms, t * n_rf + r, c)))
            .collect(),
        CombinerKind::RandomPhase { seed } => {
            let mut rng = stream(seed, 0, 0, tag::COMBINER);
            (0..n_slots)
                .map(|_| {
                    // Row-major fill, so the pattern does not depend on storage order.
                    let phases: Vec<T> = (0..n_rf * n_atoms)
                        .map(|_| uniform_phase(&mut rng))
                        .collect();
                    DMatrix::from_row_iterator(n_rf, n_atoms, phases.into_iter().map(cis))
                })
                .collect()
        }
    };
    Ok(schedule)
}

/// Vertically stacks per-slot combiners into one `(n_slots N_r) x N` operator.
pub fn stack_rows<T: Real>(blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.rows_mut(r0, b.nrows()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Single all-ones combiner row.
pub fn all_ones_combiner<T: Real>(n_atoms: usize) -> CMatrix<T> {
    CMatrix::from_element(1, n_atoms, Complex::new(T::one(), T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{condition_number, dft_matrix, numerical_rank};
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    type C = Complex<f64>;

    fn random_vec(n: usize, seed: u64) -> CVector<f64> {
        let mut rng = stream(seed, 9, 0, 0);
        CVector::from_fn(n, |_, _| complex_normal(&mut rng))
    }

    fn dft_cfg(n: usize, n_rf: usize, rho: f64) -> HrisConfig<f64> {
        let q = combiner_schedule(n, n_rf, 1, CombinerKind::Dft)
            .unwrap()
            .remove(0);
        HrisConfig::uniform(rho, q).unwrap()
    }

    #[test]
    fn validation() {
        let q = all_ones_combiner::<f64>(4);
        assert!(HrisConfig::uniform(1.2, q.clone()).is_err());
        assert!(HrisConfig::uniform(-0.1, q.clone()).is_err());
        let bad = q.map(|z| z * 2.0);
        assert!(HrisConfig::uniform(0.5, bad).is_err());
        let too_many = CMatrix::from_element(5, 4, C::new(1.0, 0.0));
        assert!(HrisConfig::uniform(0.5, too_many).is_err());
        assert!(HrisConfig::new(vec![0.5; 4], vec![0.0; 3], vec![0.0; 4], q).is_err());
    }

    #[test]
    fn full_reflection_senses_nothing() {
        let sig = dft_cfg(8, 2, 1.0).build_signals();
        assert!(sig.sensed_map.iter().all(|z| z.norm() == 0.0));
        let y = sig
            .sense(&random_vec(8, 1), 0.0, &mut stream(0, 0, 0, 0))
            .unwrap();
        assert!(y.iter().all(|z| z.norm() == 0.0));
        // identity reflection with zero phases
        let x = random_vec(8, 2);
        assert_eq!(sig.reflect(&x).unwrap(), x);
    }

    #[test]
    fn zero_rho_reflects_nothing() {
        let sig = dft_cfg(8, 2, 0.0).build_signals();
        assert!(sig.reflected_gain.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn half_split_amplitudes() {
        let sig = HrisConfig::uniform(0.5, all_ones_combiner::<f64>(6))
            .unwrap()
            .build_signals();
        for n in 0..6 {
            let r = sig.reflected_gain[n].norm();
            let s = sig.sensed_map[(0, n)].norm();
            assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
            assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
            assert!((r * r + s * s - 1.0).abs() < 1e-15);
        }
        let x = random_vec(6, 3);
        let y = sig.reflect(&x).unwrap();
        assert!((y.norm_squared() - 0.5 * x.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn sense_matches_dense_product() {
        let rho = vec![0.1, 0.4, 0.7, 0.9];
        let sp = vec![0.3, 1.0, 2.0, 5.0];
        let q = all_ones_combiner::<f64>(4);
        let cfg = HrisConfig::new(rho.clone(), vec![0.0; 4], sp.clone(), q).unwrap();
        let x = random_vec(4, 4);
        let y = cfg
            .build_signals()
            .sense(&x, 0.0, &mut stream(0, 0, 0, 0))
            .unwrap();
        let mut want = C::new(0.0, 0.0);
        for n in 0..4 {
            want += C::from_polar((1.0 - rho[n]).sqrt(), sp[n]) * x[n];
        }
        assert!((y[0] - want).norm() < 1e-12);
    }

    #[test]
    fn sense_noise_variance() {
        let sig = dft_cfg(4, 2, 0.5).build_signals();
        let zero = CVector::zeros(4);
        let mut rng = stream(11, 0, 0, 0);
        let draws = 100_000;
        let std = 0.7;
        let mut acc = [0.0; 2];
        for _ in 0..draws {
            let y = sig.sense(&zero, std, &mut rng).unwrap();
            acc[0] += y[0].norm_sqr();
            acc[1] += y[1].norm_sqr();
        }
        for a in acc {
            let var = a / draws as f64;
            assert!((var / (std * std) - 1.0).abs() < 0.05, "variance {var}");
        }
        assert!(sig.sense(&zero, -1.0, &mut rng).is_err());
        assert!(sig.sense(&CVector::zeros(3), 0.0, &mut rng).is_err());
    }

    #[test]
    fn dft_schedule_stacks_to_dft() {
        let s = combiner_schedule::<f64>(4, 2, 2, CombinerKind::Dft).unwrap();
        let stacked = stack_rows(&s);
        let f = dft_matrix::<f64>(4);
        assert!((stacked - &f).norm() < 1e-12);
        assert_eq!(numerical_rank(&f), 4);
    }

    #[test]
    fn dft_schedule_is_perfectly_conditioned() {
        let s = combiner_schedule::<f64>(64, 8, 8, CombinerKind::Dft).unwrap();
        let k = condition_number(&stack_rows(&s));
        assert!((k - 1.0).abs() < 1e-9, "condition number {k}");
    }

    #[test]
    fn random_schedule_is_deterministic() {
        let kind = CombinerKind::RandomPhase { seed: 5 };
        let a = combiner_schedule::<f64>(16, 4, 3, kind).unwrap();
        let b = combiner_schedule::<f64>(16, 4, 3, kind).unwrap();
        assert_eq!(a, b);
        let c = combiner_schedule::<f64>(16, 4, 3, CombinerKind::RandomPhase { seed: 6 }).unwrap();
        assert_ne!(a, c);
        assert!(a
            .iter()
            .flat_map(|m| m.iter())
            .all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn schedule_rejects_bad_counts() {
        assert!(combiner_schedule::<f64>(4, 5, 1, CombinerKind::Dft).is_err());
        assert!(combiner_schedule::<f64>(4, 0, 1, CombinerKind::Dft).is_err());
        assert!(combiner_schedule::<f64>(4, 2, 0, CombinerKind::Dft).is_err());
    }

    fn arb_cfg() -> impl Strategy<Value = HrisConfig<f64>> {
        (1usize..12, any::<u64>()).prop_flat_map(|(n, seed)| {
            (1..=n).prop_map(move |n_rf| {
                let mut rng = stream(seed, 3, 0, 0);
                let rho: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let rp: Vec<f64> = (0..n).map(|_| uniform_phase(&mut rng)).collect();
                let sp: Vec<f64> = (0..n).map(|_| uniform_phase(&mut rng)).collect();
                let q = combiner_schedule(n, n_rf, 1, CombinerKind::RandomPhase { seed })
                    .unwrap()
                    .remove(0);
                HrisConfig::new(rho, rp, sp, q).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn per_atom_power_is_conserved(cfg in arb_cfg()) {
            let r = cfg.reflection_coefficients();
            let s = cfg.sensing_coefficients();
            for n in 0..cfg.n_atoms() {
                prop_assert!((r[n].norm_sqr() + s[n].norm_sqr() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn sense_is_linear(cfg in arb_cfg(), seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let sig = cfg.build_signals();
            let n = cfg.n_atoms();
            let (x, y) = (random_vec(n, seed), random_vec(n, seed ^ 1));
            let (alpha, beta) = (C::new(a, 0.5), C::new(-0.2, b));
            let mut rng = stream(0, 0, 0, 0);
            let lhs = sig.sense(&(x.clone() * alpha + y.clone() * beta), 0.0, &mut rng).unwrap();
            let rhs = sig.sense(&x, 0.0, &mut rng).unwrap() * alpha
                + sig.sense(&y, 0.0, &mut rng).unwrap() * beta;
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn reflect_is_linear(cfg in arb_cfg(), seed in any::<u64>(), a in -3.0..3.0f64) {
            let sig = cfg.build_signals();
            let n = cfg.n_atoms();
            let (x, y) = (random_vec(n, seed), random_vec(n, seed ^ 1));
            let alpha = C::new(a, 1.0);
            let lhs = sig.reflect(&(x.clone() * alpha + &y)).unwrap();
            let rhs = sig.reflect(&x).unwrap() * alpha + sig.reflect(&y).unwrap();
            prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn reflect_never_amplifies(cfg in arb_cfg(), seed in any::<u64>()) {
            let sig = cfg.build_signals();
            let x = random_vec(cfg.n_atoms(), seed);
            let out = sig.reflect(&x).unwrap().norm_squared();
            prop_assert!(out <= x.norm_squared() * (1.0 + 1e-12));
            if cfg.rho().iter().all(|&r| r == 1.0) {
                prop_assert!((out - x.norm_squared()).abs() < 1e-12);
            } else if cfg.rho().iter().all(|&r| r < 1.0) {
                prop_assert!(out < x.norm_squared());
            }
        }

        #[test]
        fn dft_schedule_stacks_full_rank(n in 1usize..40, n_rf_seed in any::<usize>()) {
            let n_rf = 1 + n_rf_seed % n;
            let slots = n.div_ceil(n_rf);
            let s = combiner_schedule::<f64>(n, n_rf, slots, CombinerKind::Dft).unwrap();
            prop_assert_eq!(numerical_rank(&stack_rows(&s)), n);
        }
    }
}
