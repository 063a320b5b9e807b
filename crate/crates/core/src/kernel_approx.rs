//! Exponential-sum approximation of power-law kernels with fixed nodes.
//!
//! Node placement (random, linear, geometric) is held fixed and only the
//! weights are fitted: weighted least squares on a log-spaced grid over
//! `[1, T]`, refined by Lawson reweighting towards the sup-norm optimum. The
//! reported error is measured on a separate, finer log-spaced grid.
//!
//! Lawson's weighted residual is a lower bound on the grid minimax error for
//! the given nodes, so every fit also carries a certified gap between what was
//! achieved and what is achievable.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use libm::{exp, log, pow, sqrt};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::rng::trial_rng;
use crate::stats::{line_fit, quantile_sorted, sort_floats, LineFit};

/// Target function on `[1, horizon]`.
pub trait Kernel {
    fn eval(&self, s: f64) -> f64;
    fn horizon(&self) -> f64;
}

/// `K(s) = s^{-beta}` on `[1, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawKernel {
    beta: f64,
    horizon: f64,
}

impl PowerLawKernel {
    pub fn new(beta: f64, horizon: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain("beta", beta, "0 < beta < 1"));
        }
        if !(horizon > 1.0) || !horizon.is_finite() {
            return Err(Error::domain("T", horizon, "T > 1"));
        }
        Ok(Self { beta, horizon })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Kernel for PowerLawKernel {
    fn eval(&self, s: f64) -> f64 {
        pow(s, -self.beta)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// A single decaying exponential; exactly representable when its rate is a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialKernel {
    pub rate: f64,
    pub horizon: f64,
}

impl Kernel for ExponentialKernel {
    fn eval(&self, s: f64) -> f64 {
        exp(-self.rate * s)
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Random,
    Linear,
    Geometric,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Linear => "linear",
            Strategy::Geometric => "geometric",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Strategy::Random),
            "linear" => Ok(Strategy::Linear),
            "geometric" => Ok(Strategy::Geometric),
            _ => Err(Error::invalid("strategy", "expected one of random, linear, geometric")),
        }
    }
}

/// Extension of the log-rate interval `[ln(1/T), 0]` by `below` e-folds
/// towards slower rates and `above` e-folds towards faster rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpanMargins {
    pub below: f64,
    pub above: f64,
}

impl SpanMargins {
    /// Rates exactly on `[1/T, 1]`: timescales cover `[1, T]`.
    pub const COVERAGE: SpanMargins = SpanMargins { below: 0.0, above: 0.0 };
    /// Rates on `[e^{-1}/T, e^2]`. Minimax-quality node sets for `s^{-beta}`
    /// on `[1, T]` reach slightly past both ends of the coverage interval;
    /// with the bare coverage span the fitted error stalls near 1e-3.
    pub const FITTING: SpanMargins = SpanMargins { below: 1.0, above: 2.0 };

    fn log_bounds(self, horizon: f64) -> (f64, f64) {
        (-log(horizon) - self.below, self.above)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodePlacement {
    pub strategy: Strategy,
    /// Rates in nats/token, ascending.
    pub rates: Vec<f64>,
    pub seed: Option<u64>,
    /// Slope of the linear grid, when applicable.
    pub slope: Option<f64>,
}

/// Places `n` decay rates for approximation on `[1, horizon]`.
///
/// * geometric: `ln r` evenly spaced over the (margin-extended) interval
///   `[ln(1/T), 0]`;
/// * linear: `r_k = c k`, with `c = 1/T` unless `slope` is given;
/// * random: `n` i.i.d. rates, log-uniform over the same interval as
///   geometric, drawn from stream 0 of `seed`.
pub fn place_nodes(
    strategy: Strategy,
    n: usize,
    horizon: f64,
    slope: Option<f64>,
    seed: u64,
    margins: SpanMargins,
) -> Result<NodePlacement> {
    if n == 0 {
        return Err(Error::invalid("N", "need at least one node"));
    }
    if !(horizon > 1.0) || !horizon.is_finite() {
        return Err(Error::domain("T", horizon, "T > 1"));
    }
    let (lo, hi) = margins.log_bounds(horizon);
    let (rates, seed, slope) = match strategy {
        Strategy::Geometric => {
            let rates = if n == 1 {
                alloc::vec![exp(lo)]
            } else {
                let h = (hi - lo) / (n - 1) as f64;
                (0..n)
                    .map(|k| if k == n - 1 { exp(hi) } else { exp(lo + k as f64 * h) })
                    .collect()
            };
            (rates, None, None)
        }
        Strategy::Linear => {
            let c = slope.unwrap_or(1.0 / horizon);
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::domain("c", c, "c > 0"));
            }
            ((1..=n).map(|k| c * k as f64).collect(), None, Some(c))
        }
        Strategy::Random => {
            let mut rng = trial_rng(seed, 0);
            let mut rates: Vec<f64> = (0..n).map(|_| exp(lo + (hi - lo) * rng.random::<f64>())).collect();
            sort_floats(&mut rates);
            (rates, Some(seed), None)
        }
    };
    Ok(NodePlacement {
        strategy,
        rates,
        seed,
        slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Points of the log-spaced fitting grid.
    pub grid_points: usize,
    /// The sup error is measured on `grid_points * sup_factor` points.
    pub sup_factor: usize,
    pub reweight_iterations: usize,
    /// Fits whose best sup error is within this relative distance of the
    /// Lawson lower bound are flagged converged.
    pub convergence_tol: f64,
    /// Minimum relative separation between distinct nodes.
    pub min_separation: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_points: 8192,
            sup_factor: 4,
            reweight_iterations: 30,
            convergence_tol: 0.1,
            min_separation: 1e-10,
        }
    }
}

/// Log-spaced evaluation grid on `[1, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalGrid {
    pub upper: f64,
    pub points: usize,
}

impl EvalGrid {
    pub fn nodes(&self) -> Vec<f64> {
        let ln_u = log(self.upper);
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    1.0
                } else if i == self.points - 1 {
                    self.upper
                } else {
                    exp(ln_u * i as f64 / last)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpSumApprox {
    pub nodes: NodePlacement,
    pub weights: Vec<f64>,
    /// `max |K(s) - sum_k w_k e^{-r_k s}|` on `sup_grid`.
    pub sup_error: f64,
    /// Lawson lower bound on the fit-grid minimax error for these nodes.
    pub lower_bound: f64,
    pub fit_grid: EvalGrid,
    pub sup_grid: EvalGrid,
    /// Condition estimate of the final least-squares factor.
    pub condition: f64,
    /// Numerical rank of the basis on the fitting grid.
    pub rank: usize,
    pub converged: bool,
}

impl ExpSumApprox {
    pub fn eval(&self, s: f64) -> f64 {
        self.nodes
            .rates
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * exp(-r * s))
            .sum()
    }
}

fn check_separation(rates: &[f64], min_sep: f64) -> Result<()> {
    let mut idx: Vec<usize> = (0..rates.len()).collect();
    idx.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    for w in idx.windows(2) {
        let (a, b) = (rates[w[0]], rates[w[1]]);
        if (b - a) <= min_sep * b.abs().max(a.abs()) {
            return Err(Error::IllConditioned {
                first: w[0].min(w[1]),
                second: w[0].max(w[1]),
            });
        }
    }
    Ok(())
}

/// Fits weights for fixed nodes to `kernel` on `[1, kernel.horizon()]`.
pub fn fit_weights<K: Kernel>(nodes: &NodePlacement, kernel: &K, opts: &FitOptions) -> Result<ExpSumApprox> {
    let n = nodes.rates.len();
    let g = opts.grid_points;
    if n == 0 {
        return Err(Error::invalid("nodes", "need at least one node"));
    }
    if g < 4 * n {
        return Err(Error::invalid(
            "grid_points",
            "fitting grid must have at least 4N points",
        ));
    }
    if opts.sup_factor == 0 {
        return Err(Error::invalid("sup_factor", "must be at least 1"));
    }
    check_separation(&nodes.rates, opts.min_separation)?;

    let fit_grid = EvalGrid {
        upper: kernel.horizon(),
        points: g,
    };
    let s = fit_grid.nodes();
    let target: Vec<f64> = s.iter().map(|&x| kernel.eval(x)).collect();
    let mut basis = Vec::with_capacity(g * n);
    for &x in &s {
        for &r in &nodes.rates {
            basis.push(exp(-r * x));
        }
    }

    let mut lawson = alloc::vec![1.0 / g as f64; g];
    let mut scaled = alloc::vec![0.0; g * n];
    let mut rhs = alloc::vec![0.0; g];
    let mut resid = alloc::vec![0.0; g];
    let mut best: Option<(f64, Vec<f64>, f64, usize)> = None;
    let mut lower_bound: f64 = 0.0;

    for _ in 0..=opts.reweight_iterations {
        for i in 0..g {
            let sw = sqrt(lawson[i]);
            rhs[i] = sw * target[i];
            for k in 0..n {
                scaled[i * n + k] = sw * basis[i * n + k];
            }
        }
        let Some(ls) = least_squares(&scaled, &rhs, g, n) else {
            return Err(closest_pair(&nodes.rates));
        };
        let mut sup: f64 = 0.0;
        let mut weighted = 0.0;
        for i in 0..g {
            let fit: f64 = (0..n).map(|k| basis[i * n + k] * ls.x[k]).sum();
            let r = (fit - target[i]).abs();
            resid[i] = r;
            sup = sup.max(r);
            weighted += lawson[i] * r * r;
        }
        // weights sum to one, so the weighted RMS residual of the weighted
        // least-squares optimum bounds the minimax error from below
        lower_bound = lower_bound.max(sqrt(weighted));
        if best.as_ref().is_none_or(|b| sup < b.0) {
            best = Some((sup, ls.x.clone(), ls.condition, ls.rank));
        }
        let total: f64 = lawson.iter().zip(&resid).map(|(v, r)| v * r).sum();
        if !(total > 0.0) {
            break;
        }
        for (v, r) in lawson.iter_mut().zip(&resid) {
            *v = *v * r / total;
        }
    }

    let (fit_sup, weights, condition, rank) = best.expect("at least one iteration runs");
    let sup_grid = EvalGrid {
        upper: kernel.horizon(),
        points: g * opts.sup_factor,
    };
    let mut approx = ExpSumApprox {
        nodes: nodes.clone(),
        weights,
        sup_error: 0.0,
        lower_bound,
        fit_grid,
        sup_grid,
        condition,
        rank,
        converged: fit_sup <= (1.0 + opts.convergence_tol) * lower_bound,
    };
    approx.sup_error = sup_grid
        .nodes()
        .iter()
        .map(|&x| (kernel.eval(x) - approx.eval(x)).abs())
        .fold(0.0, f64::max);
    Ok(approx)
}

fn closest_pair(rates: &[f64]) -> Error {
    let mut best = (0, 1.min(rates.len() - 1), f64::INFINITY);
    for i in 0..rates.len() {
        for j in (i + 1)..rates.len() {
            let d = (rates[i] - rates[j]).abs() / rates[i].abs().max(rates[j].abs());
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    Error::IllConditioned {
        first: best.0,
        second: best.1,
    }
}

/// Knobs shared by the rate and scale-mismatch experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOptions {
    pub fit: FitOptions,
    pub margins: SpanMargins,
    /// Candidate slopes for the linear grid, as multiples resolved against
    /// `T`; `None` uses `{1/T, 2/T, 1/sqrt(T)}` and keeps the best.
    pub linear_slopes: Option<Vec<f64>>,
    /// Errors at or below this value are excluded from slope fits.
    pub error_floor: f64,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            margins: SpanMargins::FITTING,
            linear_slopes: None,
            error_floor: 1e-12,
        }
    }
}

impl ApproxOptions {
    fn slopes(&self, horizon: f64) -> Vec<f64> {
        self.linear_slopes
            .clone()
            .unwrap_or_else(|| alloc::vec![1.0 / horizon, 2.0 / horizon, 1.0 / sqrt(horizon)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub n: usize,
    /// Sup error; the median over seeds for random placement.
    pub sup_error: f64,
    /// Lower and upper quartile over seeds (random placement only).
    pub quartiles: Option<(f64, f64)>,
    /// Winning slope of the linear grid (linear placement only).
    pub best_slope: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub strategy: Strategy,
    pub beta: f64,
    pub horizon: f64,
    pub points: Vec<RatePoint>,
    /// Straight-line fit of `ln(sup_error)` against `N` over points above the
    /// error floor.
    pub line: Option<LineFit>,
}

/// Error of one `(strategy, N)` cell of the rate experiment.
pub fn rate_cell(
    strategy: Strategy,
    kernel: &PowerLawKernel,
    n: usize,
    seeds: &[u64],
    opts: &ApproxOptions,
) -> Result<RatePoint> {
    let horizon = kernel.horizon();
    match strategy {
        Strategy::Geometric => {
            let nodes = place_nodes(strategy, n, horizon, None, 0, opts.margins)?;
            let fit = fit_weights(&nodes, kernel, &opts.fit)?;
            Ok(RatePoint {
                n,
                sup_error: fit.sup_error,
                quartiles: None,
                best_slope: None,
                converged: fit.converged,
            })
        }
        Strategy::Linear => {
            let mut best: Option<(f64, f64, bool)> = None;
            for c in opts.slopes(horizon) {
                let nodes = place_nodes(strategy, n, horizon, Some(c), 0, opts.margins)?;
                let fit = fit_weights(&nodes, kernel, &opts.fit)?;
                if best.is_none_or(|b| fit.sup_error < b.0) {
                    best = Some((fit.sup_error, c, fit.converged));
                }
            }
            let (err, c, converged) = best.ok_or(Error::invalid("linear_slopes", "need at least one slope"))?;
            Ok(RatePoint {
                n,
                sup_error: err,
                quartiles: None,
                best_slope: Some(c),
                converged,
            })
        }
        Strategy::Random => {
            if seeds.is_empty() {
                return Err(Error::invalid("seeds", "random placement needs at least one seed"));
            }
            let mut errors = Vec::with_capacity(seeds.len());
            let mut converged = true;
            for &seed in seeds {
                let nodes = place_nodes(strategy, n, horizon, None, seed, opts.margins)?;
                let fit = fit_weights(&nodes, kernel, &opts.fit)?;
                converged &= fit.converged;
                errors.push(fit.sup_error);
            }
            sort_floats(&mut errors);
            Ok(RatePoint {
                n,
                sup_error: quantile_sorted(&errors, 0.5),
                quartiles: Some((quantile_sorted(&errors, 0.25), quantile_sorted(&errors, 0.75))),
                best_slope: None,
                converged,
            })
        }
    }
}

impl RateCurve {
    /// Assembles a curve from per-`N` cells and fits the log-error line.
    pub fn from_points(strategy: Strategy, kernel: &PowerLawKernel, points: Vec<RatePoint>, floor: f64) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|p| p.sup_error > floor)
            .map(|p| (p.n as f64, log(p.sup_error)))
            .unzip();
        RateCurve {
            strategy,
            beta: kernel.beta(),
            horizon: kernel.horizon(),
            line: line_fit(&xs, &ys),
            points,
        }
    }
}

/// Sup error against `N` for one placement strategy.
pub fn rate_experiment(
    strategy: Strategy,
    beta: f64,
    horizon: f64,
    n_list: &[usize],
    seeds: &[u64],
    opts: &ApproxOptions,
) -> Result<RateCurve> {
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("N_list", "must be strictly ascending"));
    }
    let kernel = PowerLawKernel::new(beta, horizon)?;
    let points = n_list
        .iter()
        .map(|&n| rate_cell(strategy, &kernel, n, seeds, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateCurve::from_points(strategy, &kernel, points, opts.error_floor))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMismatch {
    pub t: f64,
    /// Fit error on `[1, t]` with the geometric spectrum designed for `[1, T]`.
    pub static_error: f64,
    /// Fit error on `[1, t]` with the geometric spectrum rescaled to `[1, t]`.
    pub adapted_error: f64,
    /// Channels of the static spectrum whose timescales fall in `[1, t]`:
    /// `N ln t / ln T`.
    pub n_eff: f64,
}

pub fn scale_mismatch_experiment(
    n: usize,
    horizon: f64,
    t: f64,
    beta: f64,
    opts: &ApproxOptions,
) -> Result<ScaleMismatch> {
    if !(t > 1.0 && t <= horizon) {
        return Err(Error::domain("t", t, "1 < t <= T"));
    }
    let kernel = PowerLawKernel::new(beta, t)?;
    let static_nodes = place_nodes(Strategy::Geometric, n, horizon, None, 0, opts.margins)?;
    let adapted_nodes = place_nodes(Strategy::Geometric, n, t, None, 0, opts.margins)?;
    let static_error = fit_weights(&static_nodes, &kernel, &opts.fit)?.sup_error;
    let adapted_error = if adapted_nodes == static_nodes {
        static_error
    } else {
        fit_weights(&adapted_nodes, &kernel, &opts.fit)?.sup_error
    };
    Ok(ScaleMismatch {
        t,
        static_error,
        adapted_error,
        n_eff: n as f64 * log(t) / log(horizon),
    })
}
