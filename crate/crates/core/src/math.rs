//! Scalar special functions, evaluated through `libm` so results do not
//! depend on the platform's libc.

use libm::{exp, expm1, fabs, log, log1p};

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + log1p(exp(-x))
    } else {
        log1p(exp(x))
    }
}

/// Inverse softplus `ln(e^y - 1)` for `y > 0`.
///
/// Uses `ln(expm1(y))` so gaps down to the subnormal range survive a round
/// trip; for large `y` switches to `y + ln(1 - e^{-y})`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + log1p(-exp(-y))
    } else {
        log(expm1(y))
    }
}

pub fn sech(x: f64) -> f64 {
    let e = exp(-fabs(x));
    2.0 * e / (1.0 + e * e)
}

/// `1 - sech(x)`, accurate when `x` is tiny.
pub fn one_minus_sech(x: f64) -> f64 {
    let h = libm::sinh(0.5 * x);
    2.0 * h * h / libm::cosh(x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn logit(p: f64) -> f64 {
    log(p / (1.0 - p))
}

/// Position scale factor `t^{-alpha}` evaluated as `exp(-alpha ln t)`.
///
/// The endpoints are exact: `alpha = 0` gives 1 and `alpha = 1` gives `1/t`,
/// which keeps the untapered channel and the fully tapered channel free of
/// rounding drift.
pub fn position_scale(alpha: f64, t: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else if alpha == 1.0 {
        1.0 / t
    } else {
        exp(-alpha * log(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softplus_round_trip_small_and_large() {
        for &y in &[1e-300, 1e-12, 1e-9, 0.3, 1.0, 10.0, 29.9, 30.1, 500.0] {
            assert_relative_eq!(softplus(softplus_inv(y)), y, max_relative = 1e-14);
        }
        assert_relative_eq!(
            softplus(libm::log(core::f64::consts::E - 1.0)),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn sech_values() {
        assert_eq!(sech(0.0), 1.0);
        assert_relative_eq!(
            sech(1.0),
            2.0 / (core::f64::consts::E + 1.0 / core::f64::consts::E),
            max_relative = 1e-15
        );
        assert_eq!(sech(1e4), 0.0);
        assert_relative_eq!(one_minus_sech(1e-3), 1e-6 / 2.0, max_relative = 1e-6);
        assert_relative_eq!(one_minus_sech(1.0), 1.0 - sech(1.0), max_relative = 1e-14);
    }

    #[test]
    fn sigmoid_branches() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_relative_eq!(sigmoid(-30.0), libm::exp(-30.0), max_relative = 1e-12);
        assert_relative_eq!(log_sigmoid(0.5), libm::log(sigmoid(0.5)), max_relative = 1e-15);
        assert_relative_eq!(logit(sigmoid(-7.1)), -7.1, max_relative = 1e-12);
    }

    #[test]
    fn position_scale_endpoints() {
        assert_eq!(position_scale(0.0, 17.0), 1.0);
        assert_eq!(position_scale(1.0, 8.0), 0.125);
        assert_relative_eq!(position_scale(0.5, 16.0), 0.25, max_relative = 1e-15);
    }
}
