//! Decay spectra and the cumulative-softplus reparameterization.
//!
//! A [`DecaySpectrum`] stores log-rates `p_k = ln r_k`. [`PostParams`] is the
//! anchor/gap parameterization `p_1 = theta`, `p_k = p_{k-1} + softplus(delta_{k-1})`,
//! which produces a strictly ascending spectrum for every finite input and
//! reaches every strictly ascending spectrum through [`inverse_post_map`].

use alloc::vec::Vec;
use libm::{exp, fabs, log, log1p};

use crate::error::{Error, Result};
use crate::math::{one_minus_sech, sech, softplus, softplus_inv};

#[derive(Debug, Clone, PartialEq)]
pub struct DecaySpectrum {
    p: Vec<f64>,
}

impl DecaySpectrum {
    pub fn new(log_rates: Vec<f64>) -> Result<Self> {
        if log_rates.is_empty() {
            return Err(Error::invalid("p", "a spectrum needs at least one channel"));
        }
        if log_rates.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("p", "log-rates must be finite"));
        }
        Ok(Self { p: log_rates })
    }

    /// Builds a spectrum from positive per-token rates.
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        if rates.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::invalid("rates", "rates must be positive and finite"));
        }
        Self::new(rates.iter().map(|&r| log(r)).collect())
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn log_rates(&self) -> &[f64] {
        &self.p
    }

    pub fn rates(&self) -> Vec<f64> {
        self.p.iter().map(|&p| exp(p)).collect()
    }

    pub fn timescales(&self) -> Vec<f64> {
        self.p.iter().map(|&p| exp(-p)).collect()
    }

    /// Multiplicative gates `w_k = exp(-exp(p_k))`.
    pub fn gates(&self) -> Vec<f64> {
        self.p.iter().map(|&p| exp(-exp(p))).collect()
    }

    pub fn is_strictly_ordered(&self) -> bool {
        self.p.windows(2).all(|w| w[1] > w[0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostParams {
    theta: f64,
    delta: Vec<f64>,
}

impl PostParams {
    pub fn new(theta: f64, delta: Vec<f64>) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::invalid("theta", "anchor must be finite"));
        }
        if delta.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("delta", "gap parameters must be finite"));
        }
        Ok(Self { theta, delta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn channels(&self) -> usize {
        self.delta.len() + 1
    }

    /// Induced gaps `softplus(delta_j)`.
    pub fn gaps(&self) -> Vec<f64> {
        self.delta.iter().map(|&d| softplus(d)).collect()
    }
}

pub fn post_map(params: &PostParams) -> Result<DecaySpectrum> {
    let mut p = Vec::with_capacity(params.channels());
    let mut acc = params.theta;
    p.push(acc);
    for &d in &params.delta {
        acc += softplus(d);
        p.push(acc);
    }
    if !acc.is_finite() {
        return Err(Error::invalid("delta", "cumulative gaps overflow"));
    }
    DecaySpectrum::new(p)
}

pub fn inverse_post_map(spectrum: &DecaySpectrum) -> Result<PostParams> {
    let p = spectrum.log_rates();
    let mut delta = Vec::with_capacity(p.len().saturating_sub(1));
    for (j, w) in p.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if !(gap > 0.0) {
            return Err(Error::NotStrictlyOrdered { index: j + 1 });
        }
        delta.push(softplus_inv(gap));
    }
    PostParams::new(p[0], delta)
}

/// Spectral coherence of two channels given their log-rates:
/// `sech(|p_i - p_j| / 2)`, the normalized L2 overlap of `e^{-r_i s}` and
/// `e^{-r_j s}` on `[0, inf)`.
pub fn coherence(p_i: f64, p_j: f64) -> f64 {
    sech(0.5 * fabs(p_i - p_j))
}

/// `1 - coherence(p_i, p_j)` without cancellation for nearby channels.
pub fn coherence_deficit(p_i: f64, p_j: f64) -> f64 {
    one_minus_sech(0.5 * fabs(p_i - p_j))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSummary {
    pub min_gap: f64,
    pub max_gap: f64,
    pub mean_gap: f64,
}

/// Gap and coherence statistics. Single-channel spectra have no pairs, so
/// `gaps` and `max_coherence` are `None` for them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumStats {
    pub gaps: Option<GapSummary>,
    pub max_coherence: Option<f64>,
    pub is_strictly_ordered: bool,
}

pub fn spectrum_stats(spectrum: &DecaySpectrum) -> SpectrumStats {
    let ordered = spectrum.is_strictly_ordered();
    if spectrum.len() < 2 {
        return SpectrumStats {
            gaps: None,
            max_coherence: None,
            is_strictly_ordered: true,
        };
    }
    let mut sorted = spectrum.log_rates().to_vec();
    crate::stats::sort_floats(&mut sorted);
    let gaps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_gap = (sorted[sorted.len() - 1] - sorted[0]) / gaps.len() as f64;
    SpectrumStats {
        gaps: Some(GapSummary {
            min_gap,
            max_gap,
            // guard the identity against rounding in the span/count quotient
            mean_gap: mean_gap.clamp(min_gap, max_gap),
        }),
        // coherence is decreasing in the gap, so the closest pair dominates
        max_coherence: Some(sech(0.5 * min_gap)),
        is_strictly_ordered: ordered,
    }
}

/// Parameters whose spectrum has log-rates evenly spaced on `[-ln T, 0]`,
/// i.e. timescales geometrically spaced on `[1, T]`.
pub fn geometric_init(n: usize, horizon: f64) -> Result<PostParams> {
    if n < 2 {
        return Err(Error::invalid(
            "n",
            "geometric initialization needs at least two channels",
        ));
    }
    if !(horizon > 1.0) || !horizon.is_finite() {
        return Err(Error::domain("T", horizon, "T > 1"));
    }
    let span = log(horizon);
    let gap = span / (n - 1) as f64;
    PostParams::new(-span, alloc::vec![softplus_inv(gap); n - 1])
}

/// Coherence bound `sech(ln(1 + softplus(c)/theta) / 2)` for the anchor pair
/// of a rate-space spectrum: rates `r_1 = theta > 0`, `r_2 = r_1 + softplus(d_1)`
/// with `d_1 >= c`. Equality holds when `d_1 = c`.
///
/// Only the anchor pair is covered. With additive rate gaps the ratio
/// `r_{k+1}/r_k` shrinks as `k` grows, so later pairs can be more coherent.
/// For log-rate spectra built by [`post_map`] the pair-independent bound is
/// `sech(softplus(c)/2)`.
pub fn nondegeneracy_bound(theta: f64, c: f64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::domain("theta", theta, "theta > 0"));
    }
    Ok(sech(0.5 * log1p(softplus(c) / theta)))
}
