//! Order statistics of i.i.d. decay parameters: minimum and maximum internal
//! spacings, the spacing survival law and the collapse of spectral coherence.

use alloc::vec::Vec;
use libm::{log, pow, sqrt};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::trial_rng;
use crate::spectrum::{coherence, coherence_deficit};
use crate::stats::{mean_estimate, sort_floats, MeanEstimate};

/// Minimum number of trials accepted by the gap experiments.
pub const MIN_GAP_TRIALS: usize = 10_000;

/// Sampling density of the decay parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    /// Uniform on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// Linear ramp `f(x) = 1/2 + x` on `[0, 1]`; its floor is `1/2`.
    Ramp,
}

impl Density {
    pub const UNIT: Density = Density::Uniform { a: 0.0, b: 1.0 };

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::invalid("a, b", "need finite a < b"));
        }
        Ok(Density::Uniform { a, b })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Density::Uniform { .. } => "uniform",
            Density::Ramp => "ramp",
        }
    }

    /// Lower bound `m` of the density on its support.
    pub fn floor(&self) -> f64 {
        match *self {
            Density::Uniform { a, b } => 1.0 / (b - a),
            Density::Ramp => 0.5,
        }
    }

    /// Length of the support.
    pub fn width(&self) -> f64 {
        match *self {
            Density::Uniform { a, b } => b - a,
            Density::Ramp => 1.0,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match *self {
            Density::Uniform { a, b } => a + (b - a) * u,
            // inverse of F(x) = x/2 + x^2/2
            Density::Ramp => -0.5 + sqrt(0.25 + 2.0 * u),
        }
    }
}

/// `Pr(S_min > x) = (1 - (N-1) x)_+^N` for the minimum internal spacing of
/// `N` uniform points on `[0, 1]`.
pub fn spacing_survival(n: usize, x: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("N", "need at least two points"));
    }
    if !(x >= 0.0) {
        return Err(Error::domain("x", x, "x >= 0"));
    }
    let base = 1.0 - (n - 1) as f64 * x;
    Ok(if base <= 0.0 { 0.0 } else { pow(base, n as f64) })
}

/// Mean minimum internal spacing for a uniform density on `[a, b]`:
/// `(b - a) / ((N-1)(N+1))`.
pub fn expected_min_gap(n: usize, width: f64) -> f64 {
    width / (((n - 1) * (n + 1)) as f64)
}

/// Minimum and maximum internal spacing of one sorted draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapDraw {
    pub min_gap: f64,
    pub max_gap: f64,
}

/// Draws `n` i.i.d. points for trial `trial` and returns their extreme
/// internal spacings.
pub fn gap_trial(n: usize, density: &Density, seed: u64, trial: u64) -> GapDraw {
    let mut rng = trial_rng(seed, trial);
    let mut xs: Vec<f64> = (0..n).map(|_| density.sample(&mut rng)).collect();
    sort_floats(&mut xs);
    let mut min_gap = f64::INFINITY;
    let mut max_gap: f64 = 0.0;
    for w in xs.windows(2) {
        let g = w[1] - w[0];
        min_gap = min_gap.min(g);
        max_gap = max_gap.max(g);
    }
    GapDraw { min_gap, max_gap }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTrialResult {
    pub n: usize,
    pub trials: usize,
    pub density: Density,
    pub min_gap: MeanEstimate,
    pub max_gap: MeanEstimate,
}

impl GapTrialResult {
    /// Summarizes per-trial draws, in trial order.
    pub fn from_draws(n: usize, density: Density, draws: &[GapDraw]) -> Self {
        let mins: Vec<f64> = draws.iter().map(|d| d.min_gap).collect();
        let maxs: Vec<f64> = draws.iter().map(|d| d.max_gap).collect();
        Self {
            n,
            trials: draws.len(),
            density,
            min_gap: mean_estimate(&mins),
            max_gap: mean_estimate(&maxs),
        }
    }

    /// Upper bound `1 / (m (N-1)(N+1))` on the mean minimum gap; exact for
    /// the uniform density.
    pub fn min_gap_bound(&self) -> f64 {
        1.0 / (self.density.floor() * ((self.n - 1) * (self.n + 1)) as f64)
    }

    /// `N E[S_max] / ln N`, the normalized maximum spacing.
    pub fn normalized_max_gap(&self) -> f64 {
        self.n as f64 * self.max_gap.mean / log(self.n as f64)
    }
}

fn validate_gap(n: usize, trials: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid("N", "need at least two points"));
    }
    if trials < MIN_GAP_TRIALS {
        return Err(Error::invalid("trials", "gap Monte Carlo needs at least 10000 trials"));
    }
    Ok(())
}

/// Per-trial extreme spacings, in trial order.
pub fn gap_draws(n: usize, trials: usize, density: &Density, seed: u64) -> Result<Vec<GapDraw>> {
    validate_gap(n, trials)?;
    Ok((0..trials as u64).map(|t| gap_trial(n, density, seed, t)).collect())
}

pub fn min_gap_mc(n: usize, trials: usize, density: Density, seed: u64) -> Result<GapTrialResult> {
    let draws = gap_draws(n, trials, &density, seed)?;
    Ok(GapTrialResult::from_draws(n, density, &draws))
}

/// Mean maximum internal spacing on `[0, 1]` for each `N`.
pub fn max_gap_mc(n_list: &[usize], trials: usize, seed: u64) -> Result<Vec<GapTrialResult>> {
    n_list
        .iter()
        .map(|&n| min_gap_mc(n, trials, Density::UNIT, seed))
        .collect()
}

/// Largest pairwise coherence of one draw of `n` rates, with its deficit
/// `1 - coherence` computed without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceDraw {
    pub max_coherence: f64,
    pub deficit: f64,
}

/// Draws `n` rates uniform on `[a, b]` and returns the coherence of the
/// closest pair in log-rate.
pub fn coherence_trial(n: usize, a: f64, b: f64, seed: u64, trial: u64) -> CoherenceDraw {
    let density = Density::Uniform { a, b };
    let mut rng = trial_rng(seed, trial);
    let mut p: Vec<f64> = (0..n).map(|_| log(density.sample(&mut rng))).collect();
    sort_floats(&mut p);
    let mut best = (p[0], p[1]);
    for w in p.windows(2) {
        if w[1] - w[0] < best.1 - best.0 {
            best = (w[0], w[1]);
        }
    }
    CoherenceDraw {
        max_coherence: coherence(best.0, best.1),
        deficit: coherence_deficit(best.0, best.1),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceResult {
    pub n: usize,
    pub trials: usize,
    pub max_coherence: MeanEstimate,
    /// Mean of `1 - max coherence`.
    pub deficit: MeanEstimate,
}

impl CoherenceResult {
    pub fn from_draws(n: usize, draws: &[CoherenceDraw]) -> Self {
        let mu: Vec<f64> = draws.iter().map(|d| d.max_coherence).collect();
        let def: Vec<f64> = draws.iter().map(|d| d.deficit).collect();
        Self {
            n,
            trials: draws.len(),
            max_coherence: mean_estimate(&mu),
            deficit: mean_estimate(&def),
        }
    }
}

pub fn validate_coherence(n_list: &[usize], trials: usize, a: f64, b: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(Error::domain("a", a, "a > 0"));
    }
    if !(b > a) || !b.is_finite() {
        return Err(Error::domain("b", b, "finite b > a"));
    }
    if n_list.iter().any(|&n| n < 2) {
        return Err(Error::invalid("N_list", "every N must be at least 2"));
    }
    if trials < 2 {
        return Err(Error::invalid("trials", "need at least two trials"));
    }
    Ok(())
}

/// Mean maximum coherence of `N` i.i.d. uniform rates on `[a, b]`, per `N`.
pub fn coherence_collapse_mc(
    n_list: &[usize],
    trials: usize,
    seed: u64,
    a: f64,
    b: f64,
) -> Result<Vec<CoherenceResult>> {
    validate_coherence(n_list, trials, a, b)?;
    Ok(n_list
        .iter()
        .map(|&n| {
            let draws: Vec<CoherenceDraw> = (0..trials as u64).map(|t| coherence_trial(n, a, b, seed, t)).collect();
            CoherenceResult::from_draws(n, &draws)
        })
        .collect())
}
