//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the closed forms it is used to check.
#![allow(dead_code)]

/// Normalized inner product of `e^{-r_i s}` and `e^{-r_j s}` on `[0, inf)`,
/// by the trapezoid rule on `[0, 200 / min(r)]`. The integrands are advanced
/// multiplicatively so each step costs three products.
pub fn coherence_quadrature(r_i: f64, r_j: f64) -> f64 {
    let r_min = r_i.min(r_j);
    let r_max = r_i.max(r_j);
    let h = 1e-3 / (2.0 * r_max);
    let steps = (200.0 / r_min / h).ceil() as usize;
    let (step_i, step_j) = ((-r_i * h).exp(), (-r_j * h).exp());
    let (mut ei, mut ej) = (1.0f64, 1.0f64);
    let (mut cross, mut sii, mut sjj) = (0.5, 0.5, 0.5);
    for _ in 1..steps {
        ei *= step_i;
        ej *= step_j;
        cross += ei * ej;
        sii += ei * ei;
        sjj += ej * ej;
    }
    // the endpoint terms are below 1e-80 and are dropped
    cross / (sii * sjj).sqrt()
}

/// Final state of a scalar-per-channel scan by direct expansion
/// `S_L[k][j] = sum_s (prod_{s < m <= L} w_m[k]) u_s[k][j]`, with each gate
/// product formed from scratch.
pub fn convolution_final_state(gates: &[f64], inputs: &[f64], len: usize, n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for k in 0..n {
        for j in 0..d {
            let mut acc = 0.0;
            for s in 0..len {
                let mut p = 1.0;
                for m in (s + 1)..len {
                    p *= gates[m * n + k];
                }
                acc += p * inputs[(s * n + k) * d + j];
            }
            out[k * d + j] = acc;
        }
    }
    out
}

/// Second moment of a white-noise-driven scalar recurrence at position `t`
/// with gates `w_j = exp(-ell j^{-alpha})`, by explicit products.
pub fn energy_by_products(alpha: f64, ell: f64, t: u64) -> f64 {
    let w2: Vec<f64> = (1..=t).map(|j| (-2.0 * ell * (j as f64).powf(-alpha)).exp()).collect();
    let mut e = 0.0;
    for s in 0..t as usize {
        e += w2[s + 1..].iter().product::<f64>();
    }
    e
}

/// Best single-exponential sup error for `s^{-beta}` on a log grid of
/// `[1, T]` with fixed rate `r`, by ternary search over the weight (the sup
/// error is convex in the weight).
pub fn single_node_minimax(beta: f64, horizon: f64, r: f64, points: usize) -> f64 {
    let grid: Vec<f64> = (0..points)
        .map(|i| (horizon.ln() * i as f64 / (points - 1) as f64).exp())
        .collect();
    let err = |w: f64| {
        grid.iter()
            .map(|&s| (s.powf(-beta) - w * (-r * s).exp()).abs())
            .fold(0.0, f64::max)
    };
    let (mut lo, mut hi) = (0.0, 4.0 * (r).exp());
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if err(a) < err(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    err(0.5 * (lo + hi))
}

/// True when consecutive differences of `xs` agree to `tol` (absolute).
pub fn is_arithmetic(xs: &[f64], tol: f64) -> bool {
    let d0 = xs[1] - xs[0];
    xs.windows(2).all(|w| ((w[1] - w[0]) - d0).abs() <= tol)
}
