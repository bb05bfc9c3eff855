//! UT-HRIS and HRIS-BS channel generation, cascades, and a binary matrix dump
//! format for pinning channel draws in regression tests.
//!
//! There is no direct UT-BS link: everything the BS sees has been reflected by
//! the surface.

use std::io::{Read, Write};

use num_complex::Complex;
use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::array::{DEFAULT_WAVELENGTH_M, SPEED_OF_LIGHT};
use crate::hris::HrisConfig;
use crate::linalg::{check_len, check_shape, CMatrix};
use crate::rng::{complex_normal, uniform_phase};
use crate::{cis, lit, HrisError, Real, Result};

/// UTs closer than this to the surface are clamped to it, which keeps the
/// free-space law finite.
pub const MIN_UT_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry<T: Real> {
    pub cell_radius_m: T,
    pub hris_bs_distance_m: T,
    pub wavelength_m: T,
}

impl<T: Real> LinkGeometry<T> {
    pub fn new(cell_radius_m: T, hris_bs_distance_m: T, wavelength_m: T) -> Result<Self> {
        if !(cell_radius_m > T::zero()
            && hris_bs_distance_m > T::zero()
            && wavelength_m > T::zero())
        {
            return Err(HrisError::Parameter(
                "cell radius, HRIS-BS distance and wavelength must be positive".into(),
            ));
        }
        Ok(Self {
            cell_radius_m,
            hris_bs_distance_m,
            wavelength_m,
        })
    }

    pub fn from_carrier_hz(cell_radius_m: T, hris_bs_distance_m: T, carrier_hz: T) -> Result<Self> {
        if !(carrier_hz > T::zero()) {
            return Err(HrisError::Parameter(
                "carrier frequency must be positive".into(),
            ));
        }
        Self::new(
            cell_radius_m,
            hris_bs_distance_m,
            lit::<T>(SPEED_OF_LIGHT) / carrier_hz,
        )
    }

    /// 10 m cell, surface on the cell edge 50 m from the BS, lambda = 15.70 mm.
    pub fn reference() -> Self {
        Self {
            cell_radius_m: lit(10.0),
            hris_bs_distance_m: lit(50.0),
            wavelength_m: lit(DEFAULT_WAVELENGTH_M),
        }
    }

    pub fn carrier_hz(&self) -> T {
        lit::<T>(SPEED_OF_LIGHT) / self.wavelength_m
    }

    /// Free-space power gain `(lambda / (4 pi d))^2`.
    pub fn pathloss(&self, distance_m: T) -> T {
        free_space_pathloss(self.wavelength_m, distance_m)
    }
}

pub fn free_space_pathloss<T: Real>(wavelength_m: T, distance_m: T) -> T {
    let r = wavelength_m / (lit::<T>(4.0) * T::pi() * distance_m);
    r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathlossMode {
    /// Free-space large-scale gain on both links.
    FreeSpace,
    /// Unit average gain; SNR is then the per-link receive SNR.
    #[default]
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Fading {
    #[default]
    Rayleigh,
    /// Rank-one unit-modulus line-of-sight term plus Rayleigh scatter.
    Rician { k_factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelModel {
    pub pathloss: PathlossMode,
    pub fading: Fading,
}

/// One channel realisation plus the SNR bookkeeping of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T: Real> {
    /// UTs to HRIS, `N x K`.
    pub h: CMatrix<T>,
    /// HRIS to BS, `M x N`.
    pub g: CMatrix<T>,
    pub noise_var_hris: T,
    pub noise_var_bs: T,
    pub tx_power: T,
    /// UT-to-surface distances used for the large-scale gain.
    pub ut_distances_m: Vec<T>,
}

impl<T: Real> ChannelSet<T> {
    pub fn new(h: CMatrix<T>, g: CMatrix<T>) -> Result<Self> {
        check_len("HRIS-BS channel columns", h.nrows(), g.ncols())?;
        if h.iter()
            .chain(g.iter())
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(HrisError::Parameter(
                "channel entries must be finite".into(),
            ));
        }
        Ok(Self {
            ut_distances_m: vec![T::zero(); h.ncols()],
            h,
            g,
            noise_var_hris: T::one(),
            noise_var_bs: T::one(),
            tx_power: T::one(),
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_bs_antennas(&self) -> usize {
        self.g.nrows()
    }

    /// Unit noise variance at both receivers and `tx_power = 10^(snr_db/10)`.
    pub fn with_snr_db(mut self, snr_db: T) -> Self {
        self.noise_var_hris = T::one();
        self.noise_var_bs = T::one();
        self.tx_power = lit::<T>(10.0).powf(snr_db / lit(10.0));
        self
    }

    /// Zero noise at both receivers; used for identifiability checks.
    pub fn noiseless(mut self) -> Self {
        self.noise_var_hris = T::zero();
        self.noise_var_bs = T::zero();
        self
    }

    pub fn with_noise(mut self, noise_var_hris: T, noise_var_bs: T, tx_power: T) -> Result<Self> {
        if !(noise_var_hris >= T::zero() && noise_var_bs >= T::zero() && tx_power > T::zero()) {
            return Err(HrisError::Parameter(
                "noise variances must be >= 0 and transmit power > 0".into(),
            ));
        }
        self.noise_var_hris = noise_var_hris;
        self.noise_var_bs = noise_var_bs;
        self.tx_power = tx_power;
        Ok(self)
    }

    pub fn cascade(&self, cfg: &HrisConfig<T>) -> Result<CMatrix<T>> {
        cascade(&self.h, &self.g, cfg)
    }

    pub fn cascaded_per_user(&self, k: usize) -> Result<CMatrix<T>> {
        cascaded_per_user(&self.h, &self.g, k)
    }
}

/// Draws `H` (N x K) and `G` (M x N).
///
/// UTs are uniform on a disc of radius `cell_radius_m`; the surface sits on the
/// disc edge. Draw order: UT positions, then `H` column-major, then `G`
/// column-major, so a fixed stream gives a bit-identical set.
pub fn draw_channels<T: Real, R: Rng + ?Sized>(
    geom: &LinkGeometry<T>,
    n_atoms: usize,
    n_users: usize,
    n_bs: usize,
    model: ChannelModel,
    rng: &mut R,
) -> Result<ChannelSet<T>> {
    if n_atoms == 0 || n_users == 0 || n_bs == 0 {
        return Err(HrisError::Parameter(format!(
            "channel dimensions must be >= 1, got N = {n_atoms}, K = {n_users}, M = {n_bs}"
        )));
    }
    let radius: f64 = geom.cell_radius_m.to_f64().unwrap_or(f64::NAN);
    let distances: Vec<T> = (0..n_users)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            let (x, y) = (r * a.cos(), r * a.sin() - radius);
            lit((x * x + y * y).sqrt().max(MIN_UT_DISTANCE_M))
        })
        .collect();

    let (ut_gain, bs_gain) = match model.pathloss {
        PathlossMode::FreeSpace => (
            distances
                .iter()
                .map(|&d| geom.pathloss(d).sqrt())
                .collect::<Vec<T>>(),
            geom.pathloss(geom.hris_bs_distance_m).sqrt(),
        ),
        PathlossMode::Normalized => (vec![T::one(); n_users], T::one()),
    };

    let mut h = fading_block(n_atoms, n_users, model.fading, rng);
    for (k, mut col) in h.column_iter_mut().enumerate() {
        col *= Complex::new(ut_gain[k], T::zero());
    }
    let mut g = fading_block(n_bs, n_atoms, model.fading, rng);
    g *= Complex::new(bs_gain, T::zero());

    let mut set = ChannelSet::new(h, g)?;
    set.ut_distances_m = distances;
    Ok(set)
}

fn fading_block<T: Real, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fading: Fading,
    rng: &mut R,
) -> CMatrix<T> {
    let scatter = CMatrix::from_fn(rows, cols, |_, _| complex_normal::<T, _>(rng));
    match fading {
        Fading::Rayleigh => scatter,
        Fading::Rician { k_factor } => {
            let k = k_factor.max(0.0);
            let los_amp: T = lit((k / (k + 1.0)).sqrt());
            let nlos_amp: T = lit((1.0 / (k + 1.0)).sqrt());
            let row_phase: Vec<T> = (0..rows).map(|_| uniform_phase(rng)).collect();
            let col_phase: Vec<T> = (0..cols).map(|_| uniform_phase(rng)).collect();
            CMatrix::from_fn(rows, cols, |r, c| {
                cis(row_phase[r] + col_phase[c]) * los_amp + scatter[(r, c)] * nlos_amp
            })
        }
    }
}

/// Cascaded UT-to-BS channel `G diag(sqrt(rho) e^{j phi}) H`, `M x K`.
pub fn cascade<T: Real>(h: &CMatrix<T>, g: &CMatrix<T>, cfg: &HrisConfig<T>) -> Result<CMatrix<T>> {
    check_len("cascade: G columns vs H rows", h.nrows(), g.ncols())?;
    check_len("cascade: HRIS atoms", h.nrows(), cfg.n_atoms())?;
    let r = cfg.reflection_coefficients();
    let mut scaled = h.clone();
    for (mut row, coef) in scaled.row_iter_mut().zip(r.iter()) {
        row *= *coef;
    }
    Ok(g * scaled)
}

/// Per-user cascaded matrix `A_k = G diag(h_k)`, `M x N`, so that the BS sees
/// `A_k phi x_k` for reflection vector `phi`.
pub fn cascaded_per_user<T: Real>(h: &CMatrix<T>, g: &CMatrix<T>, k: usize) -> Result<CMatrix<T>> {
    check_len(
        "cascaded_per_user: G columns vs H rows",
        h.nrows(),
        g.ncols(),
    )?;
    if k >= h.ncols() {
        return Err(HrisError::Parameter(format!(
            "user index {k} out of range for K = {}",
            h.ncols()
        )));
    }
    let mut a = g.clone();
    for (mut col, hk) in a.column_iter_mut().zip(h.column(k).iter()) {
        col *= *hk;
    }
    Ok(a)
}

/// Composes `G_hat diag(h_hat_k)` for every user.
pub fn compose_per_user<T: Real>(h: &CMatrix<T>, g: &CMatrix<T>) -> Result<Vec<CMatrix<T>>> {
    check_shape("compose_per_user", (g.ncols(), h.ncols()), h.shape())?;
    (0..h.ncols()).map(|k| cascaded_per_user(h, g, k)).collect()
}

// ---------------------------------------------------------------------------
// Binary matrix file.
//
// Little-endian header, then rows*cols complex64 values in row-major order as
// (re: f32, im: f32) pairs:
//
//   magic   u32  "HRIS" (0x53495248 read as LE)
//   version u32  1
//   rows    u64
//   cols    u64
//   dtype   u32  1 = complex64
//   seed    u64
//   stream  u64
//   checksum u64 first 8 bytes (LE) of SHA-256 over the payload
// ---------------------------------------------------------------------------

pub const MATRIX_FILE_MAGIC: [u8; 4] = *b"HRIS";
pub const MATRIX_FILE_VERSION: u32 = 1;
pub const DTYPE_COMPLEX64: u32 = 1;
pub const MATRIX_HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum MatrixFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a matrix file (bad magic)")]
    BadMagic,
    #[error("unsupported matrix file version {0}")]
    Version(u32),
    #[error("unsupported dtype code {0}")]
    Dtype(u32),
    #[error("payload checksum mismatch")]
    Checksum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub seed: u64,
    pub stream: u64,
    pub matrix: CMatrix<f32>,
}

fn payload_checksum(payload: &[u8]) -> u64 {
    let digest = Sha256::digest(payload);
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

pub fn write_matrix_file<T: Real, W: Write>(
    mut w: W,
    m: &CMatrix<T>,
    seed: u64,
    stream: u64,
) -> std::result::Result<(), MatrixFileError> {
    let mut payload = Vec::with_capacity(m.len() * 8);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let z = m[(r, c)];
            payload.extend_from_slice(&(z.re.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
            payload.extend_from_slice(&(z.im.to_f32().unwrap_or(f32::NAN)).to_le_bytes());
        }
    }
    let mut header = Vec::with_capacity(MATRIX_HEADER_LEN);
    header.extend_from_slice(&MATRIX_FILE_MAGIC);
    header.extend_from_slice(&MATRIX_FILE_VERSION.to_le_bytes());
    header.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    header.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    header.extend_from_slice(&DTYPE_COMPLEX64.to_le_bytes());
    header.extend_from_slice(&seed.to_le_bytes());
    header.extend_from_slice(&stream.to_le_bytes());
    header.extend_from_slice(&payload_checksum(&payload).to_le_bytes());
    w.write_all(&header)?;
    w.write_all(&payload)?;
    Ok(())
}

pub fn read_matrix_file<R: Read>(mut r: R) -> std::result::Result<MatrixFile, MatrixFileError> {
    let mut header = [0u8; MATRIX_HEADER_LEN];
    r.read_exact(&mut header)?;
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    if header[..4] != MATRIX_FILE_MAGIC {
        return Err(MatrixFileError::BadMagic);
    }
    let version = u32_at(4);
    if version != MATRIX_FILE_VERSION {
        return Err(MatrixFileError::Version(version));
    }
    let (rows, cols) = (u64_at(8) as usize, u64_at(16) as usize);
    let dtype = u32_at(24);
    if dtype != DTYPE_COMPLEX64 {
        return Err(MatrixFileError::Dtype(dtype));
    }
    let (seed, stream, checksum) = (u64_at(28), u64_at(36), u64_at(44));
    let mut payload = vec![0u8; rows * cols * 8];
    r.read_exact(&mut payload)?;
    if payload_checksum(&payload) != checksum {
        return Err(MatrixFileError::Checksum);
    }
    let f = |o: usize| f32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
    let matrix = CMatrix::from_fn(rows, cols, |i, j| {
        let o = (i * cols + j) * 8;
        Complex::new(f(o), f(o + 4))
    });
    Ok(MatrixFile {
        seed,
        stream,
        matrix,
    })
}
