//! Dense least squares via column-pivoted Householder QR with column
//! equilibration and rank truncation.

use alloc::vec;
use alloc::vec::Vec;
use libm::sqrt;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub x: Vec<f64>,
    /// Numerical rank; columns beyond it received zero coefficients.
    pub rank: usize,
    /// `|R_11| / |R_rr|` of the equilibrated, pivoted factor over the kept
    /// columns; a cheap lower estimate of the 2-norm condition number.
    pub condition: f64,
}

/// Solves `min ||A x - b||_2` for a row-major `m x n` matrix with `m >= n`.
///
/// Columns are scaled to unit norm, factored with greedy column pivoting, and
/// truncated where `|R_kk| <= rtol * |R_11|` (basic solution). Returns `None`
/// only when a column is zero or non-finite.
pub fn least_squares(a: &[f64], b: &[f64], m: usize, n: usize) -> Option<LeastSquares> {
    least_squares_with_tol(a, b, m, n, (m as f64) * f64::EPSILON)
}

pub fn least_squares_with_tol(a: &[f64], b: &[f64], m: usize, n: usize, rtol: f64) -> Option<LeastSquares> {
    assert_eq!(a.len(), m * n, "matrix has wrong length");
    assert_eq!(b.len(), m, "rhs has wrong length");
    assert!(m >= n && n > 0, "need a tall, non-empty system");

    // column-major copy, equilibrated
    let mut q = vec![0.0; m * n];
    let mut scale = vec![0.0f64; n];
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..m {
            let v = a[i * n + j];
            q[j * m + i] = v;
            s += v * v;
        }
        let s = sqrt(s);
        if !(s > 0.0) || !s.is_finite() {
            return None;
        }
        scale[j] = s;
        for i in 0..m {
            q[j * m + i] /= s;
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rhs = b.to_vec();
    let mut diag = vec![0.0f64; n];
    let mut rank = n;

    for j in 0..n {
        // pivot: largest remaining column norm
        let mut best = j;
        let mut best_norm = -1.0;
        for c in j..n {
            let nrm: f64 = q[c * m + j..(c + 1) * m].iter().map(|v| v * v).sum();
            if nrm > best_norm {
                best_norm = nrm;
                best = c;
            }
        }
        if best != j {
            for i in 0..m {
                q.swap(j * m + i, best * m + i);
            }
            perm.swap(j, best);
        }
        let norm = sqrt(best_norm.max(0.0));
        if j > 0 && norm <= rtol * diag[0].abs() || norm == 0.0 {
            rank = j;
            break;
        }
        let col = &mut q[j * m..(j + 1) * m];
        let alpha = if col[j] > 0.0 { -norm } else { norm };
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = q.split_at_mut((j + 1) * m);
        let v = &head[j * m + j..(j + 1) * m];
        for c in 0..(n - j - 1) {
            let other = &mut tail[c * m + j..(c + 1) * m];
            let dot: f64 = v.iter().zip(other.iter()).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in other.iter_mut().zip(v) {
                *o -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&rhs[j..]).map(|(x, y)| x * y).sum();
        let f = 2.0 * dot / vnorm2;
        for (r, vi) in rhs[j..].iter_mut().zip(v) {
            *r -= f * vi;
        }
    }
    if rank == 0 {
        return None;
    }

    // back substitution on the leading rank x rank block
    let mut y = vec![0.0; rank];
    for j in (0..rank).rev() {
        let mut s = rhs[j];
        for c in (j + 1)..rank {
            s -= q[c * m + j] * y[c];
        }
        y[j] = s / diag[j];
    }
    let mut x = vec![0.0; n];
    for (j, &col) in perm.iter().enumerate().take(rank) {
        x[col] = y[j] / scale[col];
    }
    Some(LeastSquares {
        x,
        rank,
        condition: diag[0].abs() / diag[rank - 1].abs(),
    })
}
