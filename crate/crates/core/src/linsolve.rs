//! Solves `(diag(D) - c Δᴺ) y = b` on the torus, `D > 0`, `c ≥ 0`.
//!
//! The operator is symmetric positive definite and strictly diagonally
//! dominant. In one dimension it is cyclic tridiagonal and solved directly;
//! in two dimensions by Jacobi-preconditioned conjugate gradients.

use crate::lattice::{laplacian_into, TorusGrid};
use crate::{Error, Result};

/// Iteration report of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual `‖b - A y‖₂`.
    pub residual: f64,
}

/// `out = D∘y - c Δᴺ y`.
pub fn apply(grid: TorusGrid, diag: &[f64], c: f64, y: &[f64], out: &mut [f64]) {
    laplacian_into(grid, y, out);
    for ((o, &d), &yi) in out.iter_mut().zip(diag).zip(y) {
        *o = d * yi - c * *o;
    }
}

fn residual_norm(grid: TorusGrid, diag: &[f64], c: f64, y: &[f64], b: &[f64]) -> f64 {
    let mut ay = vec![0.0; y.len()];
    apply(grid, diag, c, y, &mut ay);
    ay.iter().zip(b).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

/// Solves into `y`; `y` on entry is the initial guess for the iterative
/// branch. `tol` is an absolute bound on the residual 2-norm.
pub fn solve(grid: TorusGrid, diag: &[f64], c: f64, b: &[f64], y: &mut [f64], tol: f64) -> Result<SolveStats> {
    let m = grid.sites();
    if diag.len() != m || b.len() != m || y.len() != m {
        return Err(Error::domain("linear system dimensions do not match the grid"));
    }
    if diag.iter().any(|&d| !(d > 0.0 && d.is_finite())) || !(c >= 0.0) {
        return Err(Error::Solver("shifted Laplacian must have positive diagonal and c >= 0".into()));
    }
    match grid.dim() {
        1 => {
            cyclic_tridiagonal(grid, diag, c, b, y);
            Ok(SolveStats { iterations: 1, residual: residual_norm(grid, diag, c, y, b) })
        }
        _ => conjugate_gradient(grid, diag, c, b, y, tol, 20 * m + 100),
    }
}

fn cyclic_tridiagonal(grid: TorusGrid, diag: &[f64], c: f64, b: &[f64], y: &mut [f64]) {
    let n = grid.side();
    let n2 = (n * n) as f64;
    let off = -c * n2;
    if n == 2 {
        // Both neighbours coincide: [[d0 + 2cN², -2cN²], [-2cN², d1 + 2cN²]].
        let (a00, a11, a01) = (diag[0] - 2.0 * off, diag[1] - 2.0 * off, 2.0 * off);
        let det = a00 * a11 - a01 * a01;
        y[0] = (a11 * b[0] - a01 * b[1]) / det;
        y[1] = (a00 * b[1] - a01 * b[0]) / det;
        return;
    }
    let main: Vec<f64> = diag.iter().map(|&d| d - 2.0 * off).collect();
    // Sherman–Morrison split of the two corner entries (both equal `off`).
    let gamma = -main[0];
    let mut bb = main.clone();
    bb[0] -= gamma;
    bb[n - 1] -= off * off / gamma;
    let x = thomas(&bb, off, b);
    let mut rhs_u = vec![0.0; n];
    rhs_u[0] = gamma;
    rhs_u[n - 1] = off;
    let z = thomas(&bb, off, &rhs_u);
    let fact = (x[0] + off * x[n - 1] / gamma) / (1.0 + z[0] + off * z[n - 1] / gamma);
    for i in 0..n {
        y[i] = x[i] - fact * z[i];
    }
}

/// Tridiagonal solve with constant off-diagonal `off`.
fn thomas(main: &[f64], off: f64, r: &[f64]) -> Vec<f64> {
    let n = main.len();
    let mut cp = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = main[0];
    x[0] = r[0] / beta;
    for i in 1..n {
        cp[i] = off / beta;
        beta = main[i] - off * cp[i];
        x[i] = (r[i] - off * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= cp[i + 1] * x[i + 1];
    }
    x
}

fn conjugate_gradient(
    grid: TorusGrid,
    diag: &[f64],
    c: f64,
    b: &[f64],
    y: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let m = y.len();
    let n2 = (grid.side() * grid.side()) as f64;
    let precond: Vec<f64> = diag.iter().map(|&d| 1.0 / (d + 2.0 * grid.dim() as f64 * c * n2)).collect();
    let mut r = vec![0.0; m];
    apply(grid, diag, c, y, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; m];
    let mut rnorm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut it = 0;
    while rnorm > tol {
        if it >= max_iter {
            return Err(Error::Solver(format!(
                "conjugate gradients stalled after {it} iterations (residual {rnorm:e}, target {tol:e})"
            )));
        }
        apply(grid, diag, c, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rz / pap;
        for i in 0..m {
            y[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..m {
            z[i] = r[i] * precond[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        it += 1;
    }
    Ok(SolveStats { iterations: it, residual: rnorm })
}
