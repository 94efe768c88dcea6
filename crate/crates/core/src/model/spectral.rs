//! Perron root of non-negative matrices.
//!
//! The matrix is split into strongly connected blocks; the spectral radius of
//! a non-negative matrix is the largest radius over those blocks. Each
//! irreducible block `B` is handled by power iteration on `B + I` (primitive,
//! so the iteration cannot oscillate) from the uniform start vector, and the
//! Collatz–Wielandt bounds `min (Ax)_i/x_i <= ρ <= max (Ax)_i/x_i` give a
//! certified stopping rule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100_000;
const GAP_TOL: f64 = 1e-13;

/// ρ(M). Uses the closed-form quadratic for 2×2 matrices, power iteration
/// otherwise.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 2 {
        return Ok(radius_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]));
    }
    power_iteration_radius(m)
}

/// Largest eigenvalue of `[[a, b], [c, d]]` with `b c >= 0`.
pub fn radius_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    0.5 * (a + d + ((a - d).powi(2) + 4.0 * b * c).sqrt())
}

/// ρ(M) by block decomposition and shifted power iteration, with no closed
/// form shortcut.
pub fn power_iteration_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "spectral radius of a non-square matrix");
    let mut rho: f64 = 0.0;
    for block in strongly_connected_components(m) {
        let r = if block.len() == 1 {
            m[(block[0], block[0])]
        } else {
            let sub = DMatrix::from_fn(block.len(), block.len(), |i, j| m[(block[i], block[j])]);
            irreducible_radius(&sub)?
        };
        rho = rho.max(r);
    }
    Ok(rho)
}

fn irreducible_radius(b: &DMatrix<f64>) -> Result<f64> {
    let n = b.nrows();
    let shifted = b + DMatrix::identity(n, n);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut gap = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let y = &shifted * &x;
        let (lo, hi) = collatz_wielandt(&x, &y);
        gap = hi - lo;
        if gap <= GAP_TOL * hi.max(1.0) {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        let s = y.sum();
        x = y / s;
    }
    Err(Error::IllConditioned {
        iterations: MAX_ITERATIONS,
        gap,
    })
}

fn collatz_wielandt(x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (xi, yi) in x.iter().zip(y.iter()) {
        let r = yi / xi;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

/// Reachability closure of the graph `i -> j` iff `m[i][j] > 0`.
pub fn reachability(m: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = m.nrows();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] > 0.0).collect())
        .collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Strongly connected components in order of their smallest member.
pub fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let reach = reachability(m);
    let mut assigned = vec![false; n];
    let mut blocks = Vec::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let block: Vec<usize> = (0..n)
            .filter(|&j| j == i || (reach[i][j] && reach[j][i]))
            .collect();
        for &j in &block {
            assigned[j] = true;
        }
        blocks.push(block);
    }
    blocks
}

pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    n == 1 || reachability(m).iter().all(|row| row.iter().all(|&r| r))
}

/// Non-negative left eigenvector `w` with `w M = ρ w`, normalised to sum one.
#[derive(Debug, Clone)]
pub struct PerronVector {
    pub vector: Vec<f64>,
    pub eigenvalue: f64,
    pub converged: bool,
}

/// Left Perron vector by power iteration on `Mᵀ + I`. For reducible matrices
/// the limit may have zero entries; `converged` reports whether the
/// eigen-equation residual fell below tolerance within the iteration cap.
pub fn left_perron_vector(m: &DMatrix<f64>) -> PerronVector {
    let n = m.nrows();
    let shifted = m.transpose() + DMatrix::identity(n, n);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut eigenvalue = 0.0;
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        let y = &shifted * &x;
        let s = y.sum();
        let next = y / s;
        eigenvalue = s - 1.0;
        let change = (&next - &x).amax();
        x = next;
        if change <= 1e-15 {
            converged = true;
            break;
        }
    }
    // eigenvalue from the Rayleigh-type ratio of the final iterate
    let mx = m.transpose() * &x;
    let denom = x.sum();
    if denom > 0.0 {
        eigenvalue = mx.sum() / denom;
    }
    let residual = (&mx - &x * eigenvalue).amax();
    converged = converged || residual <= 1e-10 * eigenvalue.abs().max(1.0);
    PerronVector {
        vector: x.iter().copied().collect(),
        eigenvalue,
        converged,
    }
}
