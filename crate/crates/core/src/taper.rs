//! Taper exponents `alpha_k`: the effective rate of channel `k` at position
//! `t` is `r_k * t^{-alpha_k}`.

use alloc::vec::Vec;
use libm::log;

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, position_scale};
use crate::spectrum::DecaySpectrum;

#[derive(Debug, Clone, PartialEq)]
pub struct TaperVector {
    alpha: Vec<f64>,
}

impl TaperVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("alpha", "taper needs at least one channel"));
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("alpha", "taper exponents must lie in [0, 1]"));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

fn linear_term(n: usize, k: usize) -> f64 {
    (n - 1 - k) as f64 / (n - 1) as f64
}

/// `alpha_k = (N - k)/(N - 1)`; a single channel gets `[0]`.
pub fn linear_taper(n: usize) -> Result<TaperVector> {
    if n == 0 {
        return Err(Error::invalid("n", "taper needs at least one channel"));
    }
    if n == 1 {
        return TaperVector::new(alloc::vec![0.0]);
    }
    TaperVector::new((0..n).map(|k| linear_term(n, k)).collect())
}

/// Spectrum-adaptive taper before clamping:
/// `(N-k)/(N-1) + ((p_k - p_1) - (k-1) G) / ln T_ref` with `G = (p_N - p_1)/(N-1)`.
///
/// Corrections at rounding level (relative to the spectrum's magnitude) are
/// flushed to zero so geometric spectra reproduce the linear taper exactly.
pub fn adaptive_taper_unclamped(spectrum: &DecaySpectrum, t_ref: f64) -> Result<Vec<f64>> {
    if !(t_ref > 1.0) || !t_ref.is_finite() {
        return Err(Error::domain("T_ref", t_ref, "T_ref > 1"));
    }
    let p = spectrum.log_rates();
    let n = p.len();
    if n == 1 {
        return Ok(alloc::vec![0.0]);
    }
    if let Some(k) = p.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::NotStrictlyOrdered { index: k + 1 });
    }
    let ln_ref = log(t_ref);
    let span = p[n - 1] - p[0];
    let mean_gap = span / (n - 1) as f64;
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let noise = 64.0 * f64::EPSILON * scale;
    Ok(p.iter()
        .enumerate()
        .map(|(k, &pk)| {
            let mut corr = (pk - p[0]) - k as f64 * mean_gap;
            if corr.abs() <= noise {
                corr = 0.0;
            }
            linear_term(n, k) + corr / ln_ref
        })
        .collect())
}

pub fn adaptive_taper(spectrum: &DecaySpectrum, t_ref: f64) -> Result<TaperVector> {
    let raw = adaptive_taper_unclamped(spectrum, t_ref)?;
    TaperVector::new(raw.into_iter().map(|a| a.clamp(0.0, 1.0)).collect())
}

/// Whether any exponent in an unclamped taper falls outside `[0, 1]`.
pub fn clamp_active(raw: &[f64]) -> bool {
    raw.iter().any(|a| !(0.0..=1.0).contains(a))
}

/// Log-timescale proxy `ln σ(w0_k)` for sigmoid-gated decays.
pub fn sigmoid_lograte_proxy(w0: &[f64]) -> Vec<f64> {
    w0.iter().map(|&w| log_sigmoid(w)).collect()
}

/// Allowed deviation of optimal exponents from the linear taper under
/// approximate equipartition with slack `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquipartitionBand {
    pub epsilon: f64,
    pub deviation: Vec<f64>,
}

pub fn equipartition_band(n: usize, epsilon: f64) -> Result<EquipartitionBand> {
    if n < 2 {
        return Err(Error::invalid("n", "band needs at least two channels"));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::domain("epsilon", epsilon, "0 <= epsilon < 1"));
    }
    let width = 2.0 * epsilon / (1.0 - epsilon);
    Ok(EquipartitionBand {
        epsilon,
        deviation: (0..n).map(|k| width * linear_term(n, k)).collect(),
    })
}

/// Spectrum seen at position `t`: `p_k - alpha_k ln t`.
pub fn effective_spectrum(spectrum: &DecaySpectrum, taper: &TaperVector, t: f64) -> Result<DecaySpectrum> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(Error::domain("t", t, "t >= 1"));
    }
    if taper.len() != spectrum.len() {
        return Err(Error::Shape {
            name: "taper",
            expected: spectrum.len(),
            found: taper.len(),
        });
    }
    let ln_t = log(t);
    let p = spectrum
        .log_rates()
        .iter()
        .zip(taper.alpha())
        .map(|(&p, &a)| if a == 0.0 { p } else { p - a * ln_t })
        .collect();
    DecaySpectrum::new(p)
}

/// Effective rate `r_k t^{-alpha_k}` with the pinned exponent evaluation.
pub fn effective_rate(rate: f64, alpha: f64, t: f64) -> f64 {
    rate * position_scale(alpha, t)
}
