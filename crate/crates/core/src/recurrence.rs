//! Reference scan engine for diagonal linear recurrences
//! `S_t = diag(w_t) S_{t-1} + u_t`, plus the behavioural checks built on it:
//! impulse responses against the scale-free idealization and state energy
//! under white-noise driving.

use alloc::vec;
use alloc::vec::Vec;
use libm::{exp, log};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gates::GateSchedule;
use crate::math::position_scale;
use crate::rng::trial_rng;
use crate::spectrum::DecaySpectrum;
use crate::stats::{mean_estimate, ratio_estimate, MeanEstimate};
use crate::taper::TaperVector;

/// `L x N x d` additive increments, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanInput {
    values: Vec<f64>,
    len: usize,
    channels: usize,
    width: usize,
}

impl ScanInput {
    pub fn new(values: Vec<f64>, len: usize, channels: usize, width: usize) -> Result<Self> {
        if values.len() != len * channels * width {
            return Err(Error::Shape {
                name: "inputs",
                expected: len * channels * width,
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            len,
            channels,
            width,
        })
    }

    pub fn zeros(len: usize, channels: usize, width: usize) -> Self {
        Self {
            values: vec![0.0; len * channels * width],
            len,
            channels,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Increments of step `l`, an `N x d` block.
    pub fn step(&self, l: usize) -> &[f64] {
        let b = self.channels * self.width;
        &self.values[l * b..(l + 1) * b]
    }
}

/// `N x d` hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanState {
    values: Vec<f64>,
    channels: usize,
    width: usize,
}

impl ScanState {
    pub fn zeros(channels: usize, width: usize) -> Self {
        Self {
            values: vec![0.0; channels * width],
            channels,
            width,
        }
    }

    pub fn new(values: Vec<f64>, channels: usize, width: usize) -> Result<Self> {
        if values.len() != channels * width {
            return Err(Error::Shape {
                name: "state",
                expected: channels * width,
                found: values.len(),
            });
        }
        Ok(Self {
            values,
            channels,
            width,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.width + j]
    }
}

/// States after every step, `L x N x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTrace {
    values: Vec<f64>,
    channels: usize,
    width: usize,
}

impl ScanTrace {
    pub fn len(&self) -> usize {
        self.values.len() / (self.channels * self.width)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn state(&self, l: usize) -> &[f64] {
        let b = self.channels * self.width;
        &self.values[l * b..(l + 1) * b]
    }

    pub fn final_state(&self) -> Option<ScanState> {
        let len = self.len();
        (len > 0).then(|| ScanState {
            values: self.state(len - 1).to_vec(),
            channels: self.channels,
            width: self.width,
        })
    }
}

fn check_shapes(gates: &GateSchedule, inputs: &ScanInput, init: Option<&ScanState>) -> Result<()> {
    if gates.len() != inputs.len() {
        return Err(Error::Shape {
            name: "gate rows",
            expected: inputs.len(),
            found: gates.len(),
        });
    }
    if gates.channels() != inputs.channels() {
        return Err(Error::Shape {
            name: "gate channels",
            expected: inputs.channels(),
            found: gates.channels(),
        });
    }
    if let Some(s) = init {
        if s.channels != inputs.channels || s.width != inputs.width {
            return Err(Error::Shape {
                name: "initial state",
                expected: inputs.channels * inputs.width,
                found: s.channels * s.width,
            });
        }
    }
    Ok(())
}

/// Left-to-right scan; the initial state is zero unless supplied.
pub fn sequential_scan(gates: &GateSchedule, inputs: &ScanInput, init: Option<&ScanState>) -> Result<ScanTrace> {
    check_shapes(gates, inputs, init)?;
    let (n, d) = (inputs.channels, inputs.width);
    let mut state = init.map_or_else(|| vec![0.0; n * d], |s| s.values.clone());
    let mut out = Vec::with_capacity(inputs.values.len());
    for l in 0..inputs.len {
        let u = inputs.step(l);
        for k in 0..n {
            let w = gates.get(l, k);
            for j in 0..d {
                let i = k * d + j;
                state[i] = w * state[i] + u[i];
            }
        }
        out.extend_from_slice(&state);
    }
    Ok(ScanTrace {
        values: out,
        channels: n,
        width: d,
    })
}

/// Chunked scan: within each chunk a zero-start local scan and the running
/// gate products are formed independently of the incoming state, which is
/// then folded in as `S_l = P_l * carry + local_l`.
pub fn chunked_scan(
    gates: &GateSchedule,
    inputs: &ScanInput,
    chunk: usize,
    init: Option<&ScanState>,
) -> Result<ScanTrace> {
    if chunk == 0 {
        return Err(Error::invalid("chunk", "must be at least 1"));
    }
    check_shapes(gates, inputs, init)?;
    let (n, d) = (inputs.channels, inputs.width);
    let block = n * d;
    let mut carry = init.map_or_else(|| vec![0.0; block], |s| s.values.clone());
    let mut out = vec![0.0; inputs.values.len()];
    let mut local = vec![0.0; block];
    let mut prod = vec![0.0; n];
    let mut start = 0;
    while start < inputs.len {
        let end = (start + chunk).min(inputs.len);
        local.iter_mut().for_each(|x| *x = 0.0);
        for l in start..end {
            let u = inputs.step(l);
            for k in 0..n {
                let w = gates.get(l, k);
                prod[k] = if l == start { w } else { prod[k] * w };
                for j in 0..d {
                    let i = k * d + j;
                    local[i] = if l == start { u[i] } else { w * local[i] + u[i] };
                    out[l * block + i] = prod[k] * carry[i] + local[i];
                }
            }
        }
        carry.copy_from_slice(&out[(end - 1) * block..end * block]);
        start = end;
    }
    Ok(ScanTrace {
        values: out,
        channels: n,
        width: d,
    })
}

/// Response of one channel to a unit impulse emitted at position `t0`.
///
/// The response after `s` steps is the product of the gates at positions
/// `t0 + 1, ..., t0 + s`; it is evaluated in the log domain as
/// `-ell * sum_j j^{-alpha}`. The idealization freezes the rate at the
/// observation position `t = t0 + s`: `exp(-s ell t^{-alpha})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseRecord {
    pub channel: usize,
    pub alpha: f64,
    pub base_rate: f64,
    pub t0: u64,
    pub lags: Vec<u64>,
    pub log_measured: Vec<f64>,
    pub log_ideal: Vec<f64>,
}

impl ImpulseRecord {
    pub fn measured(&self, i: usize) -> f64 {
        exp(self.log_measured[i])
    }

    pub fn ideal(&self, i: usize) -> f64 {
        exp(self.log_ideal[i])
    }

    /// `|ln measured - ln ideal| / |ln ideal|`; zero at lag 0.
    pub fn relative_log_mismatch(&self, i: usize) -> f64 {
        let (m, id) = (self.log_measured[i], self.log_ideal[i]);
        if id == 0.0 {
            if m == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            ((m - id) / id).abs()
        }
    }
}

/// Impulse response for a single channel with base rate `ell` and taper `alpha`.
pub fn impulse_response_scalar(ell: f64, alpha: f64, t0: u64, lags: &[u64]) -> Result<ImpulseRecord> {
    if t0 < 1 {
        return Err(Error::invalid("t0", "emission position must be at least 1"));
    }
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::domain("ell", ell, "ell > 0"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain("alpha", alpha, "0 <= alpha <= 1"));
    }
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    // prefix[s] = sum_{j = t0+1}^{t0+s} j^{-alpha}
    let mut prefix = Vec::with_capacity(max_lag as usize + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for j in 1..=max_lag {
        acc += position_scale(alpha, (t0 + j) as f64);
        prefix.push(acc);
    }
    let log_measured = lags.iter().map(|&s| -ell * prefix[s as usize]).collect();
    let log_ideal = lags
        .iter()
        .map(|&s| -ell * (s as f64 * position_scale(alpha, (t0 + s) as f64)))
        .collect();
    Ok(ImpulseRecord {
        channel: 0,
        alpha,
        base_rate: ell,
        t0,
        lags: lags.to_vec(),
        log_measured,
        log_ideal,
    })
}

/// Impulse response of channel `k` of a tapered spectrum.
pub fn impulse_response(
    spectrum: &DecaySpectrum,
    taper: &TaperVector,
    channel: usize,
    t0: u64,
    lags: &[u64],
) -> Result<ImpulseRecord> {
    if taper.len() != spectrum.len() {
        return Err(Error::Shape {
            name: "taper",
            expected: spectrum.len(),
            found: taper.len(),
        });
    }
    if channel >= spectrum.len() {
        return Err(Error::Shape {
            name: "channel",
            expected: spectrum.len(),
            found: channel,
        });
    }
    let ell = exp(spectrum.log_rates()[channel]);
    let mut rec = impulse_response_scalar(ell, taper.alpha()[channel], t0, lags)?;
    rec.channel = channel;
    Ok(rec)
}

/// Minimum number of trials accepted by [`energy_mc`].
pub const MIN_ENERGY_TRIALS: usize = 1000;

/// Frozen-rate timescales below this make the continuous energy law a poor
/// guide; reported through [`EnergyReport::continuum_ok`].
pub const MIN_CONTINUUM_TIMESCALE: f64 = 10.0;

fn validate_energy(alpha: f64, ell: f64, t_list: &[u64]) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain("alpha", alpha, "0 <= alpha <= 1"));
    }
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::domain("ell", ell, "ell > 0"));
    }
    if t_list.is_empty() || t_list[0] < 1 || t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(
            "t_list",
            "positions must be >= 1 and strictly ascending",
        ));
    }
    Ok(())
}

/// One white-noise trajectory of a scalar channel with gates
/// `w_j = exp(-ell j^{-alpha})`, started from zero at position 1. Returns
/// `S_t^2` at each `t` of `t_list` (ascending).
pub fn energy_trial(alpha: f64, ell: f64, t_list: &[u64], seed: u64, trial: u64) -> Vec<f64> {
    let mut rng = trial_rng(seed, trial);
    let mut out = Vec::with_capacity(t_list.len());
    let mut s = 0.0f64;
    let mut next = 0;
    let t_max = t_list.last().copied().unwrap_or(0);
    for t in 1..=t_max {
        let w = exp(-ell * position_scale(alpha, t as f64));
        let xi: f64 = rng.sample(StandardNormal);
        s = w * s + xi;
        if t == t_list[next] {
            out.push(s * s);
            next += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub alpha: f64,
    pub ell: f64,
    pub t_list: Vec<u64>,
    /// `samples[i][trial]` is the squared state at `t_list[i]`.
    pub samples: Vec<Vec<f64>>,
}

impl EnergyReport {
    /// Assembles a report from per-trial outputs of [`energy_trial`], in trial order.
    pub fn from_trials(alpha: f64, ell: f64, t_list: &[u64], trials: &[Vec<f64>]) -> Self {
        let samples = (0..t_list.len())
            .map(|i| trials.iter().map(|row| row[i]).collect())
            .collect();
        Self {
            alpha,
            ell,
            t_list: t_list.to_vec(),
            samples,
        }
    }

    pub fn trials(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, i: usize) -> MeanEstimate {
        mean_estimate(&self.samples[i])
    }

    /// `E(t_j) / E(t_i)` with a paired standard error.
    pub fn ratio(&self, i: usize, j: usize) -> (f64, f64) {
        ratio_estimate(&self.samples[j], &self.samples[i])
    }

    /// Whether the frozen-rate timescale `t^alpha / ell` is at least
    /// [`MIN_CONTINUUM_TIMESCALE`] at the largest position.
    pub fn continuum_ok(&self) -> bool {
        let t = self.t_list.last().copied().unwrap_or(1) as f64;
        1.0 / (self.ell * position_scale(self.alpha, t)) >= MIN_CONTINUUM_TIMESCALE
    }
}

/// Monte Carlo state energy under unit-variance white noise.
pub fn energy_mc(alpha: f64, ell: f64, t_list: &[u64], trials: usize, seed: u64) -> Result<EnergyReport> {
    validate_energy(alpha, ell, t_list)?;
    if trials < MIN_ENERGY_TRIALS {
        return Err(Error::invalid(
            "trials",
            "energy Monte Carlo needs at least 1000 trials",
        ));
    }
    let rows: Vec<Vec<f64>> = (0..trials as u64)
        .map(|trial| energy_trial(alpha, ell, t_list, seed, trial))
        .collect();
    Ok(EnergyReport::from_trials(alpha, ell, t_list, &rows))
}

/// Exact second moment of the discrete recurrence at position `t`:
/// `sum_{s<=t} prod_{s<j<=t} w_j^2`.
pub fn energy_exact(alpha: f64, ell: f64, t: u64) -> Result<f64> {
    validate_energy(alpha, ell, &[t])?;
    let mut e = 0.0;
    for j in 1..=t {
        let w = exp(-ell * position_scale(alpha, j as f64));
        e = w * w * e + 1.0;
    }
    Ok(e)
}

/// Continuous-time energy law `t^alpha / (2 ell) (1 - exp(-2 ell t^{1-alpha}))`.
pub fn energy_closed_form(alpha: f64, ell: f64, t: f64) -> f64 {
    let x = 2.0 * ell * t * position_scale(alpha, t);
    -libm::expm1(-x) / (2.0 * ell * position_scale(alpha, t))
}

/// Asymptotic inter-channel energy distortion `(t2/t1)^{alpha_i - alpha_j}`.
pub fn energy_ratio_distortion(alpha_i: f64, alpha_j: f64, t1: f64, t2: f64) -> Result<f64> {
    if !(t1 >= 1.0 && t2 > t1) {
        return Err(Error::invalid("t1, t2", "need t2 > t1 >= 1"));
    }
    Ok(exp((alpha_i - alpha_j) * log(t2 / t1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn const_gates(w: f64, len: usize, channels: usize) -> GateSchedule {
        GateSchedule::from_values(vec![w; len * channels], channels, 0).unwrap()
    }

    #[test]
    fn zero_inputs_stay_zero() {
        let g = const_gates(0.9, 10, 2);
        let tr = sequential_scan(&g, &ScanInput::zeros(10, 2, 3), None).unwrap();
        assert!(tr.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_gate_impulse_decays_geometrically() {
        let w = 0.8;
        let g = const_gates(w, 12, 1);
        let mut u = ScanInput::zeros(12, 1, 1);
        u.values_mut()[0] = 1.0;
        let tr = sequential_scan(&g, &u, None).unwrap();
        for l in 0..12 {
            assert!((tr.state(l)[0] - libm::pow(w, l as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn chunk_extremes_are_bit_identical() {
        let len = 37;
        let vals: Vec<f64> = (0..len * 3).map(|i| 0.5 + 0.49 * libm::sin(i as f64)).collect();
        let g = GateSchedule::from_values(vals, 3, 5).unwrap();
        let u: Vec<f64> = (0..len * 3 * 2).map(|i| libm::cos(1.7 * i as f64)).collect();
        let u = ScanInput::new(u, len, 3, 2).unwrap();
        let seq = sequential_scan(&g, &u, None).unwrap();
        assert_eq!(chunked_scan(&g, &u, 1, None).unwrap(), seq);
        assert_eq!(chunked_scan(&g, &u, len, None).unwrap(), seq);
        let mid = chunked_scan(&g, &u, 8, None).unwrap();
        for (a, b) in mid.values().iter().zip(seq.values()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let g = const_gates(0.5, 4, 2);
        assert!(sequential_scan(&g, &ScanInput::zeros(5, 2, 1), None).is_err());
        assert!(sequential_scan(&g, &ScanInput::zeros(4, 3, 1), None).is_err());
        assert!(chunked_scan(&g, &ScanInput::zeros(4, 2, 1), 0, None).is_err());
        assert!(ScanInput::new(vec![0.0; 7], 2, 2, 2).is_err());
        let bad = ScanState::zeros(2, 3);
        assert!(sequential_scan(&g, &ScanInput::zeros(4, 2, 1), Some(&bad)).is_err());
    }

    #[test]
    fn untapered_impulse_is_exact() {
        let rec = impulse_response_scalar(0.03, 0.0, 17, &[0, 1, 5, 100]).unwrap();
        assert_eq!(rec.log_measured, rec.log_ideal);
        assert_eq!(rec.measured(0), 1.0);
    }

    #[test]
    fn slowest_channel_ideal_is_scale_free() {
        let a = impulse_response_scalar(0.7, 1.0, 90, &[10]).unwrap();
        let b = impulse_response_scalar(0.7, 1.0, 180, &[20]).unwrap();
        assert_eq!(a.log_ideal, b.log_ideal);
    }

    #[test]
    fn impulse_mismatch_tracks_lag_fraction() {
        // t = 1000: s/t = 0.1 and 0.05
        let a = impulse_response_scalar(1.0, 1.0, 900, &[100]).unwrap();
        let b = impulse_response_scalar(1.0, 1.0, 950, &[50]).unwrap();
        let ratio = a.relative_log_mismatch(0) / b.relative_log_mismatch(0);
        assert!(ratio > 1.8 && ratio < 2.2, "{ratio}");
    }

    #[test]
    fn energy_exact_constant_gate() {
        // alpha = 0: geometric series (1 - w^{2t}) / (1 - w^2)
        let ell = 0.1;
        let w2 = exp(-2.0 * ell);
        let t = 50;
        let want = (1.0 - libm::pow(w2, t as f64)) / (1.0 - w2);
        assert!((energy_exact(0.0, ell, t).unwrap() / want - 1.0).abs() < 1e-13);
    }

    #[test]
    fn closed_form_limits() {
        // alpha = 0, large t: 1 / (2 ell)
        assert!((energy_closed_form(0.0, 0.05, 1e6) - 10.0).abs() < 1e-12);
        // alpha = 1: proportional to t
        let r = energy_closed_form(1.0, 1.0, 400.0) / energy_closed_form(1.0, 1.0, 100.0);
        assert!((r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn distortion_examples() {
        assert_eq!(energy_ratio_distortion(0.3, 0.3, 2.0, 9.0).unwrap(), 1.0);
        assert!((energy_ratio_distortion(1.0, 0.0, 10.0, 20.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((energy_ratio_distortion(0.5, 0.25, 1.0, 16.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(energy_ratio_distortion(0.5, 0.25, 4.0, 4.0).is_err());
    }

    #[test]
    fn energy_mc_validates_and_is_reproducible() {
        assert!(energy_mc(0.5, 0.1, &[10, 20], 10, 1).is_err());
        assert!(energy_mc(0.5, 0.1, &[20, 10], 1000, 1).is_err());
        let a = energy_mc(0.0, 0.1, &[40, 80], 1000, 3).unwrap();
        let b = energy_mc(0.0, 0.1, &[40, 80], 1000, 3).unwrap();
        assert_eq!(a, b);
        let exact = energy_exact(0.0, 0.1, 80).unwrap();
        let m = a.mean(1);
        assert!((m.mean - exact).abs() < 4.0 * m.stderr, "{} vs {exact}", m.mean);
        assert!(a.continuum_ok());
    }
}
