//! Position-adaptive decay-gate schedules for the supported architecture
//! families. All schedules are `L x N` row-major matrices indexed by window row
//! `l` (position `t = t0 + l + 1`) and channel `k`.

use alloc::vec::Vec;
use libm::{exp, log};

use crate::error::{Error, Result};
use crate::math::{logit, position_scale, sigmoid};
use crate::spectrum::DecaySpectrum;
use crate::spectrum::{post_map, PostParams};
use crate::taper::{adaptive_taper, sigmoid_lograte_proxy, TaperVector};

/// Fixed RWKV decay scale `e^{-1/2}`.
pub const RWKV_LAMBDA: f64 = 0.606_530_659_712_633_4;

#[derive(Debug, Clone, PartialEq)]
pub struct GateSchedule {
    w: Vec<f64>,
    channels: usize,
    t0: u64,
}

impl GateSchedule {
    fn from_fn(len: usize, channels: usize, t0: u64, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut w = Vec::with_capacity(len * channels);
        for l in 0..len {
            let t = position(t0, l);
            for k in 0..channels {
                w.push(f(l, k, t));
            }
        }
        Self { w, channels, t0 }
    }

    /// Wraps an explicit row-major gate matrix.
    pub fn from_values(values: Vec<f64>, channels: usize, t0: u64) -> Result<Self> {
        if channels == 0 || !values.len().is_multiple_of(channels) {
            return Err(Error::Shape {
                name: "gates",
                expected: channels,
                found: values.len(),
            });
        }
        Ok(Self {
            w: values,
            channels,
            t0,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.w[l * self.channels + k]
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.w[l * self.channels..(l + 1) * self.channels]
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    /// Absolute position of window row `l`.
    pub fn position(&self, l: usize) -> u64 {
        self.t0 + l as u64 + 1
    }
}

fn position(t0: u64, l: usize) -> f64 {
    (t0 + l as u64 + 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModulationKind {
    /// Mamba-style discretization steps `Delta_{k,t} > 0`, multiplying the log-gate.
    MambaDelta,
    /// RWKV-style additive logit modulation `f_k(x_t)`.
    RwkvLogit,
}

/// Data-dependent modulation supplied as a raw `L x N` matrix. A per-head
/// value can be broadcast across that head's channels by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationInput {
    kind: ModulationKind,
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl ModulationInput {
    pub fn mamba(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_len(rows, cols, values.len())?;
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModulation {
                    row: i / cols,
                    col: i % cols,
                    value: v,
                });
            }
        }
        Ok(Self {
            kind: ModulationKind::MambaDelta,
            values,
            rows,
            cols,
        })
    }

    pub fn rwkv(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        check_len(rows, cols, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("modulation", "RWKV modulation entries must be finite"));
        }
        Ok(Self {
            kind: ModulationKind::RwkvLogit,
            values,
            rows,
            cols,
        })
    }

    /// Constant modulation of the given kind.
    pub fn constant(kind: ModulationKind, rows: usize, cols: usize, value: f64) -> Result<Self> {
        let values = alloc::vec![value; rows * cols];
        match kind {
            ModulationKind::MambaDelta => Self::mamba(rows, cols, values),
            ModulationKind::RwkvLogit => Self::rwkv(rows, cols, values),
        }
    }

    pub fn kind(&self) -> ModulationKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, l: usize, k: usize) -> f64 {
        self.values[l * self.cols + k]
    }
}

fn check_len(rows: usize, cols: usize, found: usize) -> Result<()> {
    if rows * cols != found || cols == 0 {
        return Err(Error::Shape {
            name: "modulation",
            expected: rows * cols,
            found,
        });
    }
    Ok(())
}

fn check_dims(m: &ModulationInput, kind: ModulationKind, len: usize, channels: usize) -> Result<()> {
    if m.kind != kind {
        return Err(Error::invalid(
            "modulation",
            "modulation kind does not match the architecture",
        ));
    }
    if m.rows != len {
        return Err(Error::Shape {
            name: "modulation rows",
            expected: len,
            found: m.rows,
        });
    }
    if m.cols != channels {
        return Err(Error::Shape {
            name: "modulation columns",
            expected: channels,
            found: m.cols,
        });
    }
    Ok(())
}

fn check_window(len: usize, t_train: f64) -> Result<()> {
    if len == 0 {
        return Err(Error::invalid("L", "window length must be at least 1"));
    }
    if !(t_train > 1.0) || !t_train.is_finite() {
        return Err(Error::domain("T_train", t_train, "T_train > 1"));
    }
    Ok(())
}

/// Base log-gates `-exp(p_k)` together with the adaptive taper.
fn tapered_base(params: &PostParams, t_train: f64) -> Result<(Vec<f64>, TaperVector)> {
    let spectrum = post_map(params)?;
    let taper = adaptive_taper(&spectrum, t_train)?;
    let base = spectrum.log_rates().iter().map(|&p| -exp(p)).collect();
    Ok((base, taper))
}

/// Architecture-agnostic drop-in: `w[l][k] = exp(d_k * t^{-alpha_k})` with
/// `d_k = -exp(p_k)`.
pub fn generic_gates(params: &PostParams, t0: u64, len: usize, t_train: f64) -> Result<GateSchedule> {
    check_window(len, t_train)?;
    let (base, taper) = tapered_base(params, t_train)?;
    let alpha = taper.alpha();
    Ok(GateSchedule::from_fn(len, base.len(), t0, |_, k, t| {
        exp(base[k] * position_scale(alpha[k], t))
    }))
}

/// Mamba-2 style: `w[l][k] = exp(A_k * t^{-alpha_k} * Delta[l][k])`.
pub fn mamba_gates(
    params: &PostParams,
    delta: &ModulationInput,
    t0: u64,
    len: usize,
    t_train: f64,
) -> Result<GateSchedule> {
    check_window(len, t_train)?;
    check_dims(delta, ModulationKind::MambaDelta, len, params.channels())?;
    let (base, taper) = tapered_base(params, t_train)?;
    let alpha = taper.alpha();
    Ok(GateSchedule::from_fn(len, base.len(), t0, |l, k, t| {
        exp(base[k] * position_scale(alpha[k], t) * delta.get(l, k))
    }))
}

/// RetNet/GLA per-head decay `gamma_h^{t^{-alpha_h}}` with
/// `gamma_h = exp(-exp(p_h))`.
pub fn retnet_gates(params: &PostParams, t0: u64, len: usize, t_train: f64) -> Result<GateSchedule> {
    if params.channels() < 2 {
        return Err(Error::invalid("H", "retention needs at least two heads"));
    }
    check_window(len, t_train)?;
    let (log_gamma, taper) = tapered_base(params, t_train)?;
    let alpha = taper.alpha();
    Ok(GateSchedule::from_fn(len, log_gamma.len(), t0, |_, h, t| {
        exp(log_gamma[h] * position_scale(alpha[h], t))
    }))
}

/// Base logits, fixed scale and intra-head bias of an RWKV-style decay.
#[derive(Debug, Clone, PartialEq)]
pub struct RwkvInit {
    pub w0: Vec<f64>,
    pub lambda: f64,
    pub zigzag: Vec<f64>,
}

impl RwkvInit {
    /// Attaches the signed-quadratic intra-head bias for head dimension `d_h`.
    pub fn with_zigzag(mut self, head_dim: usize) -> Result<Self> {
        self.zigzag = zigzag_bias(self.w0.len(), head_dim)?;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.w0.len()
    }
}

/// Logits linearly spaced from `logit(1/(lambda T_train))` (slowest channel,
/// timescale `T_train`) to `0.5` (fastest channel).
pub fn rwkv_init(channels: usize, t_train: f64) -> Result<RwkvInit> {
    if channels < 2 {
        return Err(Error::invalid("C", "RWKV initialization needs at least two channels"));
    }
    let x = 1.0 / (RWKV_LAMBDA * t_train);
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain("T_train", t_train, "lambda * T_train > 1"));
    }
    let first = logit(x);
    let last = 0.5;
    if !(first < last) {
        return Err(Error::domain("T_train", t_train, "slowest logit must lie below 0.5"));
    }
    let step = (last - first) / (channels - 1) as f64;
    let mut w0: Vec<f64> = (0..channels).map(|k| first + k as f64 * step).collect();
    w0[channels - 1] = last;
    Ok(RwkvInit {
        w0,
        lambda: RWKV_LAMBDA,
        zigzag: alloc::vec![0.0; channels],
    })
}

/// `b_n = 2.5 u_n |u_n|` with `u_n = ((n mod d_h) - (d_h-1)/2) / ((d_h-1)/2)`.
pub fn zigzag_bias(channels: usize, head_dim: usize) -> Result<Vec<f64>> {
    if head_dim < 2 {
        return Err(Error::invalid("d_h", "head dimension must be at least 2"));
    }
    if !channels.is_multiple_of(head_dim) {
        return Err(Error::Shape {
            name: "channels (multiple of d_h)",
            expected: (channels / head_dim + 1) * head_dim,
            found: channels,
        });
    }
    let half = (head_dim - 1) as f64 / 2.0;
    Ok((0..channels)
        .map(|n| {
            let u = ((n % head_dim) as f64 - half) / half;
            2.5 * u * u.abs()
        })
        .collect())
}

/// Taper from the sigmoid proxy spectrum `ln σ(w0_k)`.
pub fn rwkv_taper(init: &RwkvInit, t_train: f64) -> Result<TaperVector> {
    if let Some(k) = init.w0.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotStrictlyOrdered { index: k + 1 });
    }
    let proxy = DecaySpectrum::new(sigmoid_lograte_proxy(&init.w0))?;
    adaptive_taper(&proxy, t_train)
}

/// RWKV schedule: per-step log-decay factors in `(-lambda, 0)` and the
/// multiplicative gates `exp(factor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RwkvSchedule {
    pub log_factors: Vec<f64>,
    pub gates: GateSchedule,
}

/// `factor[l][k] = -lambda * σ(w0_k + f[l][k] - alpha_k ln t)`.
pub fn rwkv_gates(
    init: &RwkvInit,
    modulation: &ModulationInput,
    taper: &TaperVector,
    t0: u64,
    len: usize,
) -> Result<RwkvSchedule> {
    let c = init.channels();
    if len == 0 {
        return Err(Error::invalid("L", "window length must be at least 1"));
    }
    check_dims(modulation, ModulationKind::RwkvLogit, len, c)?;
    if taper.len() != c {
        return Err(Error::Shape {
            name: "taper",
            expected: c,
            found: taper.len(),
        });
    }
    let alpha = taper.alpha();
    let mut log_factors = Vec::with_capacity(len * c);
    for l in 0..len {
        let ln_t = log(position(t0, l));
        for k in 0..c {
            let logit = init.w0[k] + modulation.get(l, k) - alpha[k] * ln_t;
            log_factors.push(-init.lambda * sigmoid(logit));
        }
    }
    let gates = GateSchedule {
        w: log_factors.iter().map(|&f| exp(f)).collect(),
        channels: c,
        t0,
    };
    Ok(RwkvSchedule { log_factors, gates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{geometric_init, inverse_post_map};
    use crate::taper::linear_taper;
    use alloc::vec;

    #[test]
    fn lambda_constant() {
        assert_eq!(RWKV_LAMBDA, exp(-0.5));
    }

    #[test]
    fn single_channel_unit_rate() {
        let params = PostParams::new(0.0, vec![]).unwrap();
        let g = generic_gates(&params, 10, 5, 100.0).unwrap();
        for l in 0..5 {
            assert_eq!(g.get(l, 0), exp(-1.0));
        }
    }

    #[test]
    fn slowest_channel_gate() {
        let t_train = 256.0;
        let params = geometric_init(6, t_train).unwrap();
        let g = generic_gates(&params, 0, 300, t_train).unwrap();
        for l in [0usize, 9, 99, 299] {
            let t = (l + 1) as f64;
            let want = exp(-1.0 / (t * t_train));
            assert!((g.get(l, 0) / want - 1.0).abs() < 1e-14, "l = {l}");
        }
    }

    #[test]
    fn first_position_is_untapered() {
        let params = PostParams::new(-2.0, vec![0.1, -0.4, 1.3]).unwrap();
        let g = generic_gates(&params, 0, 1, 64.0).unwrap();
        let spectrum = post_map(&params).unwrap();
        assert_eq!(g.row(0), spectrum.gates().as_slice());
    }

    #[test]
    fn mamba_reductions() {
        let params = geometric_init(4, 512.0).unwrap();
        let (len, n) = (40, 4);
        let ones = ModulationInput::constant(ModulationKind::MambaDelta, len, n, 1.0).unwrap();
        let g = generic_gates(&params, 3, len, 512.0).unwrap();
        assert_eq!(mamba_gates(&params, &ones, 3, len, 512.0).unwrap(), g);

        let fixed = ModulationInput::constant(ModulationKind::MambaDelta, len, n, 0.05).unwrap();
        let m = mamba_gates(&params, &fixed, 3, len, 512.0).unwrap();
        for (a, b) in m.values().iter().zip(g.values()) {
            assert!((log(*a) - 0.05 * log(*b)).abs() < 1e-15 * log(*b).abs().max(1.0));
        }

        let two = ModulationInput::constant(ModulationKind::MambaDelta, len, n, 2.0).unwrap();
        let m2 = mamba_gates(&params, &two, 3, len, 512.0).unwrap();
        for (a, b) in m2.values().iter().zip(g.values()) {
            assert!((a - b * b).abs() <= 4.0 * f64::EPSILON * a);
        }
    }

    #[test]
    fn mamba_rejects_bad_modulation() {
        assert_eq!(
            ModulationInput::mamba(1, 2, vec![0.3, 0.0]),
            Err(Error::InvalidModulation {
                row: 0,
                col: 1,
                value: 0.0
            })
        );
        let params = geometric_init(3, 64.0).unwrap();
        let wrong = ModulationInput::constant(ModulationKind::MambaDelta, 4, 2, 1.0).unwrap();
        assert!(mamba_gates(&params, &wrong, 0, 4, 64.0).is_err());
        let rwkv = ModulationInput::constant(ModulationKind::RwkvLogit, 4, 3, 1.0).unwrap();
        assert!(mamba_gates(&params, &rwkv, 0, 4, 64.0).is_err());
    }

    #[test]
    fn rwkv_init_endpoints() {
        let init = rwkv_init(8, 2048.0).unwrap();
        assert!((sigmoid(init.w0[7]) - 0.6225).abs() < 1e-4);
        let tau_fast = 1.0 / (init.lambda * sigmoid(init.w0[7]));
        assert!((tau_fast - 2.65).abs() < 5e-3);
        let x = 1.0 / (exp(-0.5) * 2048.0);
        assert!((x - 8.05e-4).abs() < 1e-6);
        assert!((init.w0[0] - log(x / (1.0 - x))).abs() < 1e-12);
        assert!((init.w0[0] + 7.12).abs() < 5e-3);
        let steps: Vec<f64> = init.w0.windows(2).map(|w| w[1] - w[0]).collect();
        for s in &steps {
            assert!((s - steps[0]).abs() < 1e-12);
        }
        assert!(rwkv_init(4, 1.5).is_err());
        assert!(rwkv_init(1, 2048.0).is_err());
    }

    #[test]
    fn zigzag_examples() {
        let b = zigzag_bias(8, 4).unwrap();
        let want = [-2.5, -2.5 / 9.0, 2.5 / 9.0, 2.5];
        for (i, v) in b.iter().enumerate() {
            assert!((v - want[i % 4]).abs() < 1e-15);
        }
        let odd = zigzag_bias(5, 5).unwrap();
        assert_eq!(odd[0], -2.5);
        assert_eq!(odd[2], 0.0);
        assert_eq!(odd[4], 2.5);
        assert!(zigzag_bias(6, 4).is_err());
        assert!(zigzag_bias(4, 1).is_err());
        let init = rwkv_init(8, 2048.0).unwrap().with_zigzag(4).unwrap();
        assert_eq!(init.zigzag, b);
    }

    #[test]
    fn rwkv_gate_examples() {
        let init = RwkvInit {
            w0: vec![-3.0, 0.0],
            lambda: RWKV_LAMBDA,
            zigzag: vec![0.0; 2],
        };
        let zero = ModulationInput::constant(ModulationKind::RwkvLogit, 3, 2, 0.0).unwrap();
        let static_taper = TaperVector::new(vec![0.0, 0.0]).unwrap();
        let s = rwkv_gates(&init, &zero, &static_taper, 0, 3).unwrap();
        for l in 0..3 {
            assert_eq!(s.gates.get(l, 0), exp(-RWKV_LAMBDA * sigmoid(-3.0)));
            assert!((s.log_factors[l * 2 + 1] + 0.303_265_329_856_316_7).abs() < 1e-15);
            assert!((s.gates.get(l, 1) - 0.738_403_6).abs() < 1e-6);
        }
    }

    #[test]
    fn rwkv_slow_channel_timescale_grows_linearly() {
        let init = RwkvInit {
            w0: vec![-12.0, 0.5],
            lambda: RWKV_LAMBDA,
            zigzag: vec![0.0; 2],
        };
        let zero = ModulationInput::constant(ModulationKind::RwkvLogit, 1000, 2, 0.0).unwrap();
        let taper = linear_taper(2).unwrap();
        let s = rwkv_gates(&init, &zero, &taper, 0, 1000).unwrap();
        let base = RWKV_LAMBDA * exp(-12.0);
        for l in [9usize, 99, 999] {
            let t = (l + 1) as f64;
            let rate = -s.log_factors[l * 2];
            assert!((rate * t / base - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn rwkv_gates_range() {
        let init = rwkv_init(6, 512.0).unwrap().with_zigzag(3).unwrap();
        let taper = rwkv_taper(&init, 512.0).unwrap();
        let mut f = Vec::new();
        for l in 0..50 {
            for k in 0..6 {
                f.push(init.zigzag[k] + 0.1 * ((l * 7 + k * 3) % 11) as f64 - 0.5);
            }
        }
        let m = ModulationInput::rwkv(50, 6, f).unwrap();
        let s = rwkv_gates(&init, &m, &taper, 17, 50).unwrap();
        for (&w, &f) in s.gates.values().iter().zip(&s.log_factors) {
            assert!(f < 0.0 && f > -RWKV_LAMBDA);
            assert!(w > exp(-RWKV_LAMBDA) && w < 1.0);
        }
    }

    #[test]
    fn rwkv_taper_examples() {
        // deep in the exponential regime the proxy is the identity
        let w0: Vec<f64> = (0..6).map(|k| -40.0 + 3.0 * k as f64).collect();
        let init = RwkvInit {
            w0,
            lambda: RWKV_LAMBDA,
            zigzag: vec![0.0; 6],
        };
        let a = rwkv_taper(&init, 4096.0).unwrap();
        for (x, y) in a.alpha().iter().zip(linear_taper(6).unwrap().alpha()) {
            assert!((x - y).abs() < 1e-9);
        }
        let init = RwkvInit {
            w0: vec![-3.0, 2.0],
            lambda: RWKV_LAMBDA,
            zigzag: vec![0.0; 2],
        };
        assert_eq!(rwkv_taper(&init, 100.0).unwrap().alpha(), &[1.0, 0.0]);
        let full = rwkv_taper(&rwkv_init(16, 2048.0).unwrap(), 2048.0).unwrap();
        assert_eq!(full.alpha()[0], 1.0);
        assert_eq!(full.alpha()[15], 0.0);
    }

    #[test]
    fn retnet_matches_generic() {
        let params = inverse_post_map(&DecaySpectrum::new(vec![-7.0, -4.5, -4.0, -1.0, 0.2]).unwrap()).unwrap();
        let r = retnet_gates(&params, 5, 64, 1024.0).unwrap();
        let g = generic_gates(&params, 5, 64, 1024.0).unwrap();
        assert_eq!(r, g);
        assert!(r.values().iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(retnet_gates(&PostParams::new(0.0, vec![]).unwrap(), 0, 4, 64.0).is_err());
    }

    #[test]
    fn retnet_untapered_head_is_constant() {
        let params = geometric_init(4, 128.0).unwrap();
        let r = retnet_gates(&params, 0, 32, 128.0).unwrap();
        for l in 1..32 {
            assert_eq!(r.get(l, 3), r.get(0, 3));
        }
    }

    #[test]
    fn chunked_schedule_is_bit_identical() {
        let params = PostParams::new(-5.0, vec![0.3, -0.2, 1.1, 0.0]).unwrap();
        let whole = generic_gates(&params, 7, 100, 2048.0).unwrap();
        let a = generic_gates(&params, 7, 37, 2048.0).unwrap();
        let b = generic_gates(&params, 44, 63, 2048.0).unwrap();
        let mut joined = a.values().to_vec();
        joined.extend_from_slice(b.values());
        assert_eq!(joined.as_slice(), whole.values());
    }
}
