//! Small dense SVD and Moore-Penrose pseudo-inverse.
//!
//! The diagnostic path needs pseudo-inverses of tall factor matrices (mode
//! size x rank, rank <= ~12). A one-sided Jacobi SVD works directly on the
//! columns of A, so it never forms A^T A and keeps full accuracy for the
//! ill-conditioned factors overfactored fits produce.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Thin SVD `a = u * diag(sigma) * v^T` with `u` m x n, `sigma` length n,
/// `v` n x n, singular values descending. Requires m >= n.
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 64;

/// One-sided Jacobi (Hestenes) SVD. `a` must have at least as many rows as
/// columns; callers with wide matrices factorize the transpose.
pub fn svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::invalid(format!("svd needs rows >= cols, got {m}x{n}")));
    }
    if n == 0 {
        return Err(Error::invalid("svd of an empty matrix".to_string()));
    }
    // Work on columns: unit-stride per column, so transpose into column-major.
    let mut col = vec![vec![0.0; m]; n];
    for (c, col_c) in col.iter_mut().enumerate() {
        for (r, slot) in col_c.iter_mut().enumerate() {
            *slot = a.get(r, c);
        }
    }
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut app, mut aqq, mut apq) = (0.0, 0.0, 0.0);
                for r in 0..m {
                    let (x, y) = (col[p][r], col[q][r]);
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..m {
                    let (x, y) = (col[p][r], col[q][r]);
                    col[p][r] = cs * x - sn * y;
                    col[q][r] = sn * x + cs * y;
                }
                for r in 0..n {
                    let (x, y) = (v.get(r, p), v.get(r, q));
                    v.set(r, p, cs * x - sn * y);
                    v.set(r, q, sn * x + cs * y);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut sigma: Vec<f64> = col
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).expect("norms are finite"));

    let mut u = Matrix::zeros(m, n);
    let mut v_sorted = Matrix::zeros(n, n);
    let mut sigma_sorted = vec![0.0; n];
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        sigma_sorted[dst] = s;
        if s > 0.0 {
            for r in 0..m {
                u.set(r, dst, col[src][r] / s);
            }
        }
        for r in 0..n {
            v_sorted.set(r, dst, v.get(r, src));
        }
    }
    sigma = sigma_sorted;
    Ok(Svd { u, sigma, v: v_sorted })
}

/// Moore-Penrose pseudo-inverse with rank revealed. Singular values below
/// `rel_tol * sigma_max` are treated as zero. Returns `(a_pinv, rank)`.
pub fn pinv(a: &Matrix, rel_tol: f64) -> Result<(Matrix, usize)> {
    let wide = a.rows() < a.cols();
    let work = if wide { a.transpose() } else { a.clone() };
    let Svd { u, sigma, v } = svd(&work)?;
    let smax = sigma.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * smax;
    let rank = sigma.iter().filter(|&&s| s > cutoff && s > 0.0).count();

    // pinv(work) = v * diag(1/sigma) * u^T
    let n = work.cols();
    let mut vs = v;
    for c in 0..n {
        let inv = if sigma[c] > cutoff && sigma[c] > 0.0 { 1.0 / sigma[c] } else { 0.0 };
        vs.scale_col(c, inv);
    }
    let p = vs.matmul(&u.transpose())?;
    Ok(if wide { (p.transpose(), rank) } else { (p, rank) })
}
