//! Busy-period Laplace–Stieltjes transforms.
//!
//! `g_i(θ) = E[e^{-θ B_i}]` solves `g_i = ψ_i(θ + λ̄ⁱ − Σ_j λ_ij g_j)`. The
//! solver iterates from `g_i⁽⁰⁾ = ψ_i(θ + λ̄ⁱ)`, the transform restricted to
//! trees of depth zero; the iterates increase to the minimal solution.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Model, ServiceDistribution, Verdict, DEFAULT_EPSILON, LST_QUADRATURE_TOL};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// `points` geometrically spaced values in `[min, max]`.
pub fn geometric_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    assert!(min > 0.0 && max >= min && points >= 1);
    if points == 1 {
        return vec![min];
    }
    let ratio = (max / min).ln() / (points - 1) as f64;
    (0..points)
        .map(|i| if i == points - 1 { max } else { min * (ratio * i as f64).exp() })
        .collect()
}

/// The default grid: 64 points in [1e-3, 1e2].
pub fn default_grid() -> Vec<f64> {
    geometric_grid(1e-3, 1e2, 64)
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSolution {
    pub theta: f64,
    pub g: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Every iterate was componentwise no smaller than its predecessor.
    pub monotone: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LstGrid {
    pub thetas: Vec<f64>,
    /// `g[i][p]` = g_i at `thetas[p]`.
    pub g: Vec<Vec<f64>>,
    pub iterations: Vec<usize>,
    pub residual: Vec<f64>,
    pub monotone: bool,
    pub tol: f64,
}

impl LstGrid {
    pub fn k(&self) -> usize {
        self.g.len()
    }

    /// g_1..g_K at grid index `p`.
    pub fn column(&self, p: usize) -> Vec<f64> {
        self.g.iter().map(|row| row[p]).collect()
    }

    /// Each g_i is non-increasing along the grid.
    pub fn non_increasing(&self) -> bool {
        self.g.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]))
    }
}

fn uses_quadrature(model: &Model) -> bool {
    model.spec().service.iter().any(|d| {
        matches!(
            d,
            ServiceDistribution::Pareto { .. }
                | ServiceDistribution::Lognormal { .. }
                | ServiceDistribution::Weibull { .. }
        )
    })
}

/// One application of the fixed-point map.
fn apply_map(model: &Model, theta: f64, g: &[f64], out: &mut [f64]) {
    let k = model.k();
    for i in 0..k {
        let inflow: f64 = (0..k).map(|j| model.lambda()[(i, j)] * g[j]).sum();
        let arg = theta + model.lambda_bar(i) - inflow;
        out[i] = model.service(i).lst(arg.max(0.0));
    }
}

fn require_not_unstable(model: &Model) -> Result<()> {
    if model.verdict(DEFAULT_EPSILON) == Verdict::Unstable {
        return Err(Error::StabilityViolation { rho: model.rho() });
    }
    Ok(())
}

/// Solves the fixed point at a single θ.
pub fn solve_at(model: &Model, theta: f64, tol: f64, max_iter: usize) -> Result<PointSolution> {
    require_not_unstable(model)?;
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be finite and >= 0, got {theta}")));
    }
    let k = model.k();
    if theta == 0.0 {
        // busy periods are finite almost surely when ρ <= 1
        return Ok(PointSolution { theta, g: vec![1.0; k], iterations: 0, residual: 0.0, monotone: true });
    }
    let slack = if uses_quadrature(model) { 4.0 * LST_QUADRATURE_TOL } else { 1e-14 };
    let mut g: Vec<f64> = (0..k).map(|i| model.service(i).lst(theta + model.lambda_bar(i))).collect();
    let mut next = vec![0.0; k];
    let mut monotone = true;
    let mut change = f64::INFINITY;
    for iteration in 1..=max_iter {
        apply_map(model, theta, &g, &mut next);
        change = 0.0;
        for i in 0..k {
            let d = next[i] - g[i];
            if d < -slack {
                monotone = false;
            }
            change = change.max(d.abs());
        }
        std::mem::swap(&mut g, &mut next);
        if change < tol {
            apply_map(model, theta, &g, &mut next);
            let residual = g.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            return Ok(PointSolution { theta, g, iterations: iteration, residual, monotone });
        }
    }
    Err(Error::NonConvergence { theta, iterations: max_iter, residual: change })
}

/// Solves the fixed point on every grid point (in parallel, assembled in
/// grid order).
pub fn solve_fixed_point(model: &Model, thetas: &[f64], tol: f64, max_iter: usize) -> Result<LstGrid> {
    require_not_unstable(model)?;
    let points: Vec<PointSolution> = thetas
        .par_iter()
        .map(|&t| solve_at(model, t, tol, max_iter))
        .collect::<Result<_>>()?;
    let k = model.k();
    Ok(LstGrid {
        thetas: thetas.to_vec(),
        g: (0..k).map(|i| points.iter().map(|p| p.g[i]).collect()).collect(),
        iterations: points.iter().map(|p| p.iterations).collect(),
        residual: points.iter().map(|p| p.residual).collect(),
        monotone: points.iter().all(|p| p.monotone),
        tol,
    })
}

/// Radical expressions for `K = 2`, `λ_11 = λ_22 = 0` and exponential
/// services.
pub fn closed_form_k2(mu1: f64, mu2: f64, lam12: f64, lam21: f64, theta: f64) -> Result<(f64, f64)> {
    if !(mu1 > 0.0 && mu2 > 0.0 && lam12 > 0.0 && lam21 > 0.0 && theta >= 0.0) {
        return Err(Error::Domain("closed form needs positive rates and theta >= 0".into()));
    }
    let a = mu1 + theta + lam12;
    let b = mu2 + theta + lam21;
    let delta = (mu1 * mu2 + lam12 * lam21 + theta * theta + theta * (mu1 + mu2 + lam12 + lam21)).powi(2)
        - 4.0 * mu1 * mu2 * lam12 * lam21;
    if delta < 0.0 {
        return Err(Error::Domain(format!("discriminant is negative ({delta})")));
    }
    let root = delta.sqrt();
    let g1 = (mu1 * lam21 - mu2 * lam12 + a * b - root) / (2.0 * lam21 * a);
    let g2 = (-mu1 * lam21 + mu2 * lam12 + a * b - root) / (2.0 * lam12 * b);
    Ok((g1, g2))
}

/// g_{i,s}(θ) = exp{−s(θ + λ̄ⁱ − Σ_j λ_ij g_j(θ))} on the grid.
pub fn conditional_lst(model: &Model, class: usize, s: f64, grid: &LstGrid) -> Vec<f64> {
    let k = model.k();
    (0..grid.thetas.len())
        .map(|p| {
            let inflow: f64 = (0..k).map(|j| model.lambda()[(class, j)] * grid.g[j][p]).sum();
            (-s * (grid.thetas[p] + model.lambda_bar(class) - inflow)).exp()
        })
        .collect()
}

/// g_x(θ) = Π_i g_i(θ)^{x_i} on the grid.
pub fn initial_state_lst(x: &[u32], grid: &LstGrid) -> Vec<f64> {
    (0..grid.thetas.len())
        .map(|p| x.iter().zip(&grid.g).map(|(&n, row)| row[p].powi(n as i32)).product())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentEstimate {
    /// E B_i = −g_i′(0⁺).
    pub mean: Vec<f64>,
    /// Difference of the last two Richardson levels.
    pub error: Vec<f64>,
}

const RICHARDSON_LEVELS: usize = 5;

/// Mean busy periods from the one-sided difference quotient (1 − g(h)) / h,
/// extrapolated in `h`.
pub fn moments_from_lst(model: &Model) -> Result<MomentEstimate> {
    model.require_stable(DEFAULT_EPSILON)?;
    let k = model.k();
    let rho = model.rho();
    let scale = model.means().iter().copied().fold(0.0, f64::max);
    let h0 = 0.05 * (1.0 - rho).powi(2) / scale;
    let steps: Vec<f64> = (0..RICHARDSON_LEVELS).map(|l| h0 / 2f64.powi(l as i32)).collect();
    let quotients: Vec<Vec<f64>> = steps
        .par_iter()
        .map(|&h| {
            solve_at(model, h, 1e-15, DEFAULT_MAX_ITER)
                .map(|p| p.g.iter().map(|&g| (1.0 - g) / h).collect())
        })
        .collect::<Result<_>>()?;
    let mut mean = Vec::with_capacity(k);
    let mut error = Vec::with_capacity(k);
    for i in 0..k {
        let mut table: Vec<f64> = quotients.iter().map(|q| q[i]).collect();
        let mut previous = table[table.len() - 1];
        for level in 1..RICHARDSON_LEVELS {
            let factor = 2f64.powi(level as i32);
            let rows = table.len() - 1;
            table = (0..rows).map(|r| (factor * table[r + 1] - table[r]) / (factor - 1.0)).collect();
            if level < RICHARDSON_LEVELS - 1 {
                previous = table[table.len() - 1];
            }
        }
        let best = table[0];
        mean.push(best);
        error.push((best - previous).abs());
    }
    Ok(MomentEstimate { mean, error })
}
