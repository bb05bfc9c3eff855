//! Uniform planar array geometry and far-field steering.
//!
//! The surface lies in the x-y plane with broadside along +z. Elevation is
//! measured from +z, azimuth from +x in the surface plane. Element positions
//! are centered on the phase center, so broadside steering is all ones.

use num_complex::Complex;

use crate::linalg::{check_len, CVector};
use crate::{cis, lit, HrisError, Real, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default carrier (19 GHz).
pub const DEFAULT_CARRIER_HZ: f64 = 19.0e9;
/// Carrier wavelength at 19 GHz, as quoted for the reference design.
pub const DEFAULT_WAVELENGTH_M: f64 = 15.70e-3;
/// Default inter-atom spacing (4 mm, roughly a quarter wavelength).
pub const DEFAULT_SPACING_M: f64 = 4.0e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarArray<T: Real> {
    n_h: usize,
    n_v: usize,
    spacing_m: T,
    wavelength_m: T,
}

impl<T: Real> PlanarArray<T> {
    pub fn new(n_h: usize, n_v: usize, spacing_m: T, wavelength_m: T) -> Result<Self> {
        if n_h == 0 || n_v == 0 {
            return Err(HrisError::Parameter(format!(
                "array needs at least one element per axis, got {n_h}x{n_v}"
            )));
        }
        if !(spacing_m > T::zero()) || !(wavelength_m > T::zero()) {
            return Err(HrisError::Parameter(
                "array spacing and wavelength must be positive".into(),
            ));
        }
        Ok(Self {
            n_h,
            n_v,
            spacing_m,
            wavelength_m,
        })
    }

    /// Square `side x side` array with 4 mm spacing at 19 GHz.
    pub fn square_default(side: usize) -> Result<Self> {
        Self::new(
            side,
            side,
            lit(DEFAULT_SPACING_M),
            lit(DEFAULT_WAVELENGTH_M),
        )
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing_m(&self) -> T {
        self.spacing_m
    }

    pub fn wavelength_m(&self) -> T {
        self.wavelength_m
    }

    pub fn wavenumber(&self) -> T {
        T::two_pi() / self.wavelength_m
    }

    /// Position of element `n` (row-major, `n = iv * n_h + ih`), z = 0.
    pub fn position(&self, n: usize) -> [T; 3] {
        let ih = n % self.n_h;
        let iv = n / self.n_h;
        let half = lit::<T>(0.5);
        let x = (lit::<T>(ih as f64) - lit::<T>((self.n_h - 1) as f64) * half) * self.spacing_m;
        let y = (lit::<T>(iv as f64) - lit::<T>((self.n_v - 1) as f64) * half) * self.spacing_m;
        [x, y, T::zero()]
    }

    pub fn positions(&self) -> Vec<[T; 3]> {
        (0..self.len()).map(|n| self.position(n)).collect()
    }

    /// Far-field steering vector `a_n = exp(j k <p_n, u(dir)>)`.
    pub fn steering_vector(&self, dir: &Direction<T>) -> CVector<T> {
        let u = dir.unit_vector();
        let k = self.wavenumber();
        CVector::from_iterator(
            self.len(),
            (0..self.len()).map(|n| cis(k * dot(&self.position(n), &u))),
        )
    }

    /// Derivative of the steering vector with respect to elevation.
    pub fn steering_derivative_elevation(&self, dir: &Direction<T>) -> CVector<T> {
        let (se, ce) = (dir.elevation.sin(), dir.elevation.cos());
        let (sa, ca) = (dir.azimuth.sin(), dir.azimuth.cos());
        let du = [ce * ca, ce * sa, -se];
        let u = dir.unit_vector();
        let k = self.wavenumber();
        CVector::from_iterator(
            self.len(),
            (0..self.len()).map(|n| {
                let p = self.position(n);
                let a = cis(k * dot(&p, &u));
                a * Complex::new(T::zero(), k * dot(&p, &du))
            }),
        )
    }

    /// `sum_n w_n a_n(dir)`.
    pub fn array_factor(&self, weights: &CVector<T>, dir: &Direction<T>) -> Result<Complex<T>> {
        check_len("array_factor weights", self.len(), weights.len())?;
        let a = self.steering_vector(dir);
        Ok(weights
            .iter()
            .zip(a.iter())
            .fold(Complex::new(T::zero(), T::zero()), |acc, (w, a)| {
                acc + w * a
            }))
    }

    /// Reflection phases that redirect a plane wave arriving from `incident`
    /// into `steer`: `phi_n = -arg(a_n(incident) a_n(steer))`, wrapped to `[0, 2pi)`.
    pub fn reflection_phase_profile(
        &self,
        incident: &Direction<T>,
        steer: &Direction<T>,
    ) -> Vec<T> {
        let ui = incident.unit_vector();
        let us = steer.unit_vector();
        let k = self.wavenumber();
        (0..self.len())
            .map(|n| {
                let p = self.position(n);
                wrap_phase(-k * (dot(&p, &ui) + dot(&p, &us)))
            })
            .collect()
    }

    /// Gradient phase profile steering a normally incident wave to `steer`.
    pub fn steering_phase_profile(&self, steer: &Direction<T>) -> Vec<T> {
        self.reflection_phase_profile(&Direction::broadside(), steer)
    }
}

/// Far-field direction. Elevation in `[0, pi/2)` from broadside, azimuth
/// wrapped into `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction<T: Real> {
    elevation: T,
    azimuth: T,
}

impl<T: Real> Direction<T> {
    pub fn new(elevation_rad: T, azimuth_rad: T) -> Result<Self> {
        if !(elevation_rad >= T::zero() && elevation_rad < T::frac_pi_2()) {
            return Err(HrisError::Parameter(format!(
                "elevation must lie in [0, pi/2), got {elevation_rad}"
            )));
        }
        if !azimuth_rad.is_finite() {
            return Err(HrisError::Parameter("azimuth must be finite".into()));
        }
        Ok(Self {
            elevation: elevation_rad,
            azimuth: wrap_phase(azimuth_rad),
        })
    }

    pub fn broadside() -> Self {
        Self {
            elevation: T::zero(),
            azimuth: T::zero(),
        }
    }

    /// Direction in the x-z principal plane from a signed angle off broadside;
    /// negative angles map to azimuth pi.
    pub fn from_signed_elevation(angle_rad: T) -> Result<Self> {
        if angle_rad >= T::zero() {
            Self::new(angle_rad, T::zero())
        } else {
            Self::new(-angle_rad, T::pi())
        }
    }

    pub fn elevation(&self) -> T {
        self.elevation
    }

    pub fn azimuth(&self) -> T {
        self.azimuth
    }

    /// Unit propagation vector `(sin e cos a, sin e sin a, cos e)`.
    pub fn unit_vector(&self) -> [T; 3] {
        let (se, ce) = (self.elevation.sin(), self.elevation.cos());
        [se * self.azimuth.cos(), se * self.azimuth.sin(), ce]
    }
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_phase<T: Real>(x: T) -> T {
    let tau = T::two_pi();
    let r = x % tau;
    let r = if r < T::zero() { r + tau } else { r };
    if r >= tau {
        T::zero()
    } else {
        r
    }
}

#[inline]
fn dot<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
