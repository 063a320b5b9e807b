//! Small summary statistics with a pinned summation order.

use alloc::vec::Vec;

/// Pairwise summation with a fixed split, so the result depends only on the
/// order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / sqrt(n)).
    pub stderr: f64,
    pub count: usize,
}

pub fn mean_estimate(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            count: 0,
        };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return MeanEstimate {
            mean,
            stderr: f64::NAN,
            count: 1,
        };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    MeanEstimate {
        mean,
        stderr: libm::sqrt(var / n as f64),
        count: n,
    }
}

/// Ratio of two means over paired samples, with a delta-method standard error
/// that accounts for the correlation between numerator and denominator.
pub fn ratio_estimate(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len(), "paired samples must have equal length");
    let n = num.len() as f64;
    let a = mean_estimate(num);
    let b = mean_estimate(den);
    let ratio = a.mean / b.mean;
    let resid: Vec<f64> = num
        .iter()
        .zip(den)
        .map(|(x, y)| {
            let r = x - ratio * y;
            r * r
        })
        .collect();
    let var = pairwise_sum(&resid) / (n - 1.0);
    (ratio, libm::sqrt(var / n) / b.mean.abs())
}

/// Linear interpolation quantile of already sorted data (type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = libm::ceil(h) as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sort_floats(xs: &mut [f64]) {
    xs.sort_by(f64::total_cmp);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least-squares line through `(x, y)`; needs at least two distinct x.
pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Kolmogorov distance `sup |F_n - F|` between the empirical CDF of `samples`
/// and a continuous CDF. Sorts `samples` in place.
pub fn kolmogorov_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sort_floats(samples);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn mean_and_stderr() {
        let m = mean_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - libm::sqrt(5.0 / 3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let fit = line_fit(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept - 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(line_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&s, 0.5), 3.0);
        assert_eq!(quantile_sorted(&s, 0.25), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn ks_of_perfect_grid() {
        let mut xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let d = kolmogorov_distance(&mut xs, |x| x);
        assert!((d - 0.005).abs() < 1e-12);
        let mut one = vec![0.5];
        assert_eq!(kolmogorov_distance(&mut one, |x| x), 0.5);
    }

    #[test]
    fn ratio_of_proportional_samples_has_zero_error() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.0, 6.0, 8.0];
        let (r, se) = ratio_estimate(&a, &b);
        assert_eq!(r, 0.5);
        assert_eq!(se, 0.0);
    }
}
