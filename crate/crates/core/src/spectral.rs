//! Spectral radius of the comparison operator
//! `u ↦ 2∫₀¹ |G(·,s)| η(s) u(s) ds`, by Nyström discretization + power
//! iteration, and independently by a Hill-discriminant shooting procedure
//! for the periodic x'' - x problem.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::greens::GreensKernel;
use crate::numerics::{solve_ivp2_homogeneous, split_row, CoefficientSet, Grid, ScalarFn};

/// Nonnegative Nyström matrix of the comparison operator:
/// `M[i][j] ≈ 2 w_j |G(t_i, s_j)| η(s_j)` with branch-split row weights.
#[derive(Debug, Clone)]
pub struct ComparisonMatrix {
    entries: DMatrix<f64>,
    grid: Grid,
}

impl ComparisonMatrix {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries.row(i).sum()
    }

    #[cfg(test)]
    pub(crate) fn from_entries(entries: DMatrix<f64>, grid: Grid) -> Self {
        Self { entries, grid }
    }
}

/// Discretize the comparison operator on the kernel's grid. The weight
/// function must be nonnegative on the nodes.
pub fn build_comparison(kernel: &GreensKernel, eta: &ScalarFn) -> Result<ComparisonMatrix> {
    let grid = kernel.grid().clone();
    let n = grid.subintervals();
    let eta_samples: Vec<f64> = grid.nodes().iter().map(|&t| eta(t)).collect();
    for (i, &value) in eta_samples.iter().enumerate() {
        if value < 0.0 {
            return Err(Error::NegativeWeight {
                t: grid.node(i),
                value,
            });
        }
    }
    let mut entries = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        let rule = split_row(&grid, i);
        for &(j, w) in &rule.lower {
            entries[(i, j)] += 2.0 * w * kernel.lower(i, j).abs() * eta_samples[j];
        }
        for &(j, w) in &rule.upper {
            entries[(i, j)] += 2.0 * w * kernel.upper(i, j).abs() * eta_samples[j];
        }
    }
    Ok(ComparisonMatrix { entries, grid })
}

/// Perron root of the nonnegative Nyström matrix by power iteration from the
/// all-ones vector, converged when successive Rayleigh quotients agree to
/// `tol`.
pub fn power_radius(matrix: &ComparisonMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    power_radius_detailed(matrix, tol, max_iter).map(|(radius, _)| radius)
}

/// [`power_radius`] together with the number of iterations spent.
pub fn power_radius_detailed(
    matrix: &ComparisonMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize)> {
    let m = &matrix.entries;
    let size = m.nrows();
    let mut v = DVector::<f64>::from_element(size, 1.0);
    let mut previous = f64::NAN;
    for iteration in 1..=max_iter {
        let mv = m * &v;
        let norm = mv.norm();
        if norm < 1e-300 {
            return Ok((0.0, iteration));
        }
        let rayleigh = v.dot(&mv) / v.dot(&v);
        v = mv / norm;
        if (rayleigh - previous).abs() <= tol {
            return Ok((rayleigh, iteration));
        }
        previous = rayleigh;
    }
    Err(Error::PowerIterationStall {
        max_iter,
        previous,
        current: v.dot(&(m * &v)) / v.dot(&v),
    })
}

/// Hill discriminant `D(λ) = u1(1) + u2'(1)` of the periodic equation
/// `u'' - u = -(2/λ) η u`, with the canonical initial conditions.
pub fn hill_discriminant(eta: &ScalarFn, lambda: f64, grid: &Grid) -> Result<f64> {
    if lambda <= 0.0 {
        return Err(Error::NonpositiveParameter(lambda));
    }
    let eta = eta.clone();
    // u'' = (1 - 2η(t)/λ) u, written as a0(t) = 2η(t)/λ - 1
    let coeffs = CoefficientSet::monic(
        crate::numerics::constant(0.0),
        crate::numerics::scalar_fn(move |t| 2.0 * eta(t) / lambda - 1.0),
    );
    let n = grid.subintervals();
    let (u1, _) = solve_ivp2_homogeneous(&coeffs, &[1.0], &[0.0], grid)?;
    let (_, du2) = solve_ivp2_homogeneous(&coeffs, &[0.0], &[1.0], grid)?;
    Ok(u1.scalar(n) + du2.scalar(n))
}

/// Result of the discriminant-based radius search.
#[derive(Debug, Clone, Copy)]
pub struct HillRadius {
    /// Largest root of D(λ) = 2 found in (0, lambda_max]; 0 when none.
    pub radius: f64,
    pub root_found: bool,
    /// Number of discriminant evaluations spent (scan plus refinement).
    pub evaluations: usize,
}

const SCAN_SUBDIVISIONS: usize = 200;
const BISECTION_TOL: f64 = 1e-8;
const TANGENCY_TOL: f64 = 1e-6;

/// Scan (0, lambda_max] for roots of D(λ) = 2 and return the largest.
///
/// Sign changes are refined by bisection; if the scan sees no sign change, a
/// near-tangency (minimum of |D−2| below 1e-6) is accepted as a root. The
/// discriminant route assumes the kernel of the periodic x'' - x problem,
/// where |G| = -G; it is cross-checked against [`power_radius`] in tests.
pub fn hill_radius(eta: &ScalarFn, lambda_max: f64, grid: &Grid) -> Result<HillRadius> {
    if lambda_max <= 0.0 {
        return Err(Error::NonpositiveParameter(lambda_max));
    }
    let mut evaluations = 0usize;
    let mut f = |lambda: f64| -> Result<f64> {
        evaluations += 1;
        Ok(hill_discriminant(eta, lambda, grid)? - 2.0)
    };
    let step = lambda_max / SCAN_SUBDIVISIONS as f64;
    let mut best_root: Option<f64> = None;
    let mut previous = f(step)?;
    let mut previous_lambda = step;
    if previous.abs() < 1e-12 {
        best_root = Some(step);
    }
    for k in 2..=SCAN_SUBDIVISIONS {
        let lambda = step * k as f64;
        let current = f(lambda)?;
        if current.abs() < 1e-12 {
            best_root = Some(lambda);
        } else if previous * current < 0.0 {
            let mut lo = previous_lambda;
            let mut hi = lambda;
            let mut flo = previous;
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            best_root = Some(0.5 * (lo + hi));
        }
        previous = current;
        previous_lambda = lambda;
    }
    if let Some(radius) = best_root {
        return Ok(HillRadius {
            radius,
            root_found: true,
            evaluations,
        });
    }
    // tangency fallback: golden-section minimization of |D - 2| around the
    // smallest scanned magnitude
    let mut best_lambda = step;
    let mut best_value = f64::INFINITY;
    for k in 1..=SCAN_SUBDIVISIONS {
        let lambda = step * k as f64;
        let value = f(lambda)?.abs();
        if value < best_value {
            best_value = value;
            best_lambda = lambda;
        }
    }
    if best_value < TANGENCY_TOL {
        let mut lo = (best_lambda - step).max(step * 0.5);
        let mut hi = (best_lambda + step).min(lambda_max);
        let phi = 0.5 * (3.0 - 5f64.sqrt());
        while hi - lo > BISECTION_TOL {
            let a = lo + phi * (hi - lo);
            let b = hi - phi * (hi - lo);
            if f(a)?.abs() < f(b)?.abs() {
                hi = b;
            } else {
                lo = a;
            }
        }
        return Ok(HillRadius {
            radius: 0.5 * (lo + hi),
            root_found: true,
            evaluations,
        });
    }
    Ok(HillRadius {
        radius: 0.0,
        root_found: false,
        evaluations,
    })
}
