//! Decay spectra of diagonal linear recurrences.
//!
//! This crate holds the numerical core: the cumulative-softplus spectral
//! reparameterization, position-adaptive taper exponents, per-architecture
//! decay-gate schedules, a reference scan engine, exponential-sum fitting of
//! power-law kernels and the order-statistics Monte Carlo used to study gap
//! collapse. Everything here is `no_std` (with `alloc`); file formats, the
//! experiment runner and the CLI live in the `post-lab` crate.
//!
//! Conventions used throughout:
//!
//! * a spectrum stores log-rates `p_k = ln r_k`, the rate `r_k` is the per-token
//!   log-decay magnitude and the multiplicative gate is `w_k = exp(-r_k)`;
//! * positions are 1-indexed, `t = t0 + l` for `l = 1..=L`;
//! * all logarithms are natural.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod gates;
pub mod kernel_approx;
pub mod linalg;
pub mod math;
pub mod recurrence;
pub mod rng;
pub mod spacing_mc;
pub mod spectrum;
pub mod stats;
pub mod taper;

pub use error::{Error, Result};
pub use gates::{GateSchedule, ModulationInput, ModulationKind, RwkvInit, RwkvSchedule};
pub use kernel_approx::{ExpSumApprox, NodePlacement, PowerLawKernel, Strategy};
pub use recurrence::{EnergyReport, ImpulseRecord, ScanInput, ScanState, ScanTrace};
pub use spacing_mc::{Density, GapTrialResult};
pub use spectrum::{DecaySpectrum, PostParams, SpectrumStats};
pub use taper::{EquipartitionBand, TaperVector};
