//! Link-level simulation of hybrid reflecting-and-sensing metasurfaces (HRIS).
//!
//! Every meta-atom of an HRIS splits the impinging wave: a fraction `rho` of the
//! energy is reflected through a tunable phase shifter, the remaining `1 - rho`
//! is coupled into sampling waveguides and digitized by a small number of RF
//! chains. The crate models that split and measures what it buys:
//!
//! * [`array`] planar aperture geometry, steering vectors, array factors.
//! * [`hris`] the reflect/sense operation model and analog combiner schedules.
//! * [`channel`] Rayleigh/Rician UT-HRIS and HRIS-BS channels and cascades.
//! * [`aoa`] maximum-likelihood elevation estimation and its Cramér-Rao bound.
//! * [`chest`] two-sided pilot channel estimation and the reflective baseline.
//! * [`montecarlo`] deterministic, worker-count-invariant trial execution.
//!
//! All numerics are generic over the real scalar ([`Real`], implemented for
//! `f32` and `f64`). The `*64` aliases below are what the experiments use.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aoa;
pub mod array;
pub mod channel;
pub mod chest;
mod error;
pub mod hris;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
mod scalar;

pub use error::{HrisError, Result};
pub use scalar::{cis, lit, Cplx, Real};

pub type C64 = Cplx<f64>;
pub type C32 = Cplx<f32>;

pub type PlanarArray64 = array::PlanarArray<f64>;
pub type PlanarArray32 = array::PlanarArray<f32>;
pub type Direction64 = array::Direction<f64>;
pub type Direction32 = array::Direction<f32>;
pub type HrisConfig64 = hris::HrisConfig<f64>;
pub type HrisConfig32 = hris::HrisConfig<f32>;
pub type HrisSignals64 = hris::HrisSignals<f64>;
pub type ChannelSet64 = channel::ChannelSet<f64>;
pub type ChannelSet32 = channel::ChannelSet<f32>;
pub type AoaScenario64 = aoa::AoaScenario<f64>;
pub type AoaGrid64 = aoa::AoaGrid<f64>;
pub type PilotSchedule64 = chest::PilotSchedule<f64>;
