//! Grids, quadrature, norms, and a fixed-step integrator for second-order
//! initial value problems.
//!
//! Everything downstream shares the same uniform grid on [0, 1] and the same
//! composite-Simpson weights, so norms and operator discretizations are
//! mutually consistent and runs are reproducible.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Leading/companion coefficients are stored as callables so the integrator
/// can evaluate them at half-steps without interpolation.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Wrap a constant as a [`ScalarFn`].
pub fn constant(value: f64) -> ScalarFn {
    Arc::new(move |_| value)
}

/// Wrap a plain closure as a [`ScalarFn`].
pub fn scalar_fn<F>(f: F) -> ScalarFn
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

const LEADING_COEFFICIENT_FLOOR: f64 = 1e-12;

/// Coefficients a2, a1, a0 of the scalar differential operator
/// `a2(t) x'' + a1(t) x' + a0(t) x`.
#[derive(Clone)]
pub struct CoefficientSet {
    a2: ScalarFn,
    a1: ScalarFn,
    a0: ScalarFn,
    monic: bool,
}

impl CoefficientSet {
    pub fn new(a2: ScalarFn, a1: ScalarFn, a0: ScalarFn) -> Self {
        Self {
            a2,
            a1,
            a0,
            monic: false,
        }
    }

    /// Operator with a2 ≡ 1.
    pub fn monic(a1: ScalarFn, a0: ScalarFn) -> Self {
        Self {
            a2: constant(1.0),
            a1,
            a0,
            monic: true,
        }
    }

    /// Monic operator with constant companion coefficients.
    pub fn monic_const(a1: f64, a0: f64) -> Self {
        Self::monic(constant(a1), constant(a0))
    }

    pub fn a2(&self, t: f64) -> f64 {
        (self.a2)(t)
    }

    pub fn a1(&self, t: f64) -> f64 {
        (self.a1)(t)
    }

    pub fn a0(&self, t: f64) -> f64 {
        (self.a0)(t)
    }

    pub fn is_monic(&self) -> bool {
        self.monic
    }

    /// Leading coefficient with the singularity guard applied.
    pub fn checked_leading(&self, t: f64) -> Result<f64> {
        let value = self.a2(t);
        if value.abs() < LEADING_COEFFICIENT_FLOOR {
            return Err(Error::CoefficientSingularity {
                t,
                value: value.abs(),
            });
        }
        Ok(value)
    }

    /// Node-wise sanity checks: a2 must not vanish, and the monic flag must
    /// be consistent with the stored a2.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        for &t in grid.nodes() {
            self.checked_leading(t)?;
            if self.monic && (self.a2(t) - 1.0).abs() > 1e-14 {
                return Err(Error::Precondition(format!(
                    "monic coefficient set has a2({t}) = {}",
                    self.a2(t)
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("monic", &self.monic)
            .field("a2(0)", &self.a2(0.0))
            .field("a1(0)", &self.a1(0.0))
            .field("a0(0)", &self.a0(0.0))
            .finish()
    }
}

/// Uniform partition of [0, 1] with composite-Simpson quadrature weights.
///
/// The subinterval count must be even (Simpson requirement); the weights sum
/// to one up to rounding.
#[derive(Debug, Clone)]
pub struct Grid {
    n: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(n));
        }
        let nodes = (0..=n).map(|i| i as f64 / n as f64).collect();
        let weights = segment_weights(0, n, 1.0 / n as f64);
        Ok(Self { n, nodes, weights })
    }

    /// Number of subintervals.
    pub fn subintervals(&self) -> usize {
        self.n
    }

    /// Number of nodes, `n + 1`.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∫₀¹ of a scalar function given by its node samples.
    pub fn integrate_samples(&self, samples: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(samples)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Nearest node index for a point of [0, 1]; exact on the nodes.
    pub fn nearest_node(&self, t: f64) -> usize {
        ((t * self.n as f64).round() as usize).min(self.n)
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Quadrature weights for the nodes `i0..=i1` of a uniform grid with spacing
/// `h`, integrating over `[i0*h, i1*h]`.
///
/// Composite Simpson for even interval counts. Odd counts close with a
/// Simpson 3/8 block on the last three intervals; a single interval falls
/// back to the trapezoid rule.
pub fn segment_weights(i0: usize, i1: usize, h: f64) -> Vec<f64> {
    let m = i1 - i0;
    let mut w = vec![0.0; m + 1];
    match m {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if m.is_multiple_of(2) { m } else { m - 3 };
            if simpson_end > 0 {
                w[0] += h / 3.0;
                w[simpson_end] += h / 3.0;
                for (k, wk) in w.iter_mut().enumerate().take(simpson_end).skip(1) {
                    *wk += if k.is_multiple_of(2) { 2.0 * h / 3.0 } else { 4.0 * h / 3.0 };
                }
            }
            if !m.is_multiple_of(2) {
                let c = 3.0 * h / 8.0;
                w[m - 3] += c;
                w[m - 2] += 3.0 * c;
                w[m - 1] += 3.0 * c;
                w[m] += c;
            }
        }
    }
    w
}

/// Fourth-order rule for one cell `[jh, (j+1)h]`: the integral of the cubic
/// through the four nodes around the cell, one-sided at the boundary cells.
/// Each cell's stencil depends only on the cell itself, so composite rules
/// assembled from cells are translation-uniform: two integration ranges that
/// share a cell weight its nodes identically.
fn cell_rule(j: usize, n: usize, h: f64) -> [(usize, f64); 4] {
    let c = h / 24.0;
    if j == 0 {
        [(0, 9.0 * c), (1, 19.0 * c), (2, -5.0 * c), (3, c)]
    } else if j == n - 1 {
        [(n - 3, c), (n - 2, -5.0 * c), (n - 1, 19.0 * c), (n, 9.0 * c)]
    } else {
        [(j - 1, -c), (j, 13.0 * c), (j + 1, 13.0 * c), (j + 2, -c)]
    }
}

/// Quadrature rule for one row split at node `i`: weighted node samples for
/// `[0, t_i]` (to be fed lower-branch values) and `[t_i, 1]` (upper-branch
/// values). Splitting at the diagonal keeps full accuracy for kernels with
/// a kink there.
///
/// Both sides are sums of fixed [`cell_rule`] stencils. A segment-dependent
/// rule (composite Simpson with odd-count closures) would re-weight nodes
/// far from the diagonal differently in adjacent rows, and second
/// differences of H(u) amplify that jitter by 1/h² — ruinous for node-wise
/// rough forcings. Cell stencils may reach one node past the split, which
/// is sound because each branch extends analytically across the diagonal.
#[derive(Debug, Clone)]
pub(crate) struct SplitRow {
    pub lower: Vec<(usize, f64)>,
    pub upper: Vec<(usize, f64)>,
}

pub(crate) fn split_row(grid: &Grid, i: usize) -> SplitRow {
    let n = grid.subintervals();
    let h = grid.spacing();
    let accumulate = |cells: std::ops::Range<usize>| -> Vec<(usize, f64)> {
        let mut weights = vec![0.0; n + 1];
        let mut touched_min = n + 1;
        let mut touched_max = 0;
        for j in cells {
            for (k, w) in cell_rule(j, n, h) {
                weights[k] += w;
                touched_min = touched_min.min(k);
                touched_max = touched_max.max(k);
            }
        }
        if touched_min > touched_max {
            return Vec::new();
        }
        (touched_min..=touched_max)
            .filter(|&k| weights[k] != 0.0)
            .map(|k| (k, weights[k]))
            .collect()
    };
    SplitRow {
        lower: accumulate(0..i),
        upper: accumulate(i..n),
    }
}

/// L1, L2 and sup norms of a sampled function (Euclidean norm pointwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub sup: f64,
}

/// Vector-valued function sampled on the grid nodes.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    grid: Grid,
    dim: usize,
    values: Vec<Vec<f64>>,
}

impl SampledFunction {
    pub fn new(grid: Grid, dim: usize, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
                context: "sampled function node count",
            });
        }
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
                context: "sampled function component count",
            });
        }
        Ok(Self { grid, dim, values })
    }

    pub fn from_fn<F>(grid: Grid, dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self { grid, dim, values }
    }

    pub fn scalar_from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn(f64) -> f64,
    {
        let values = grid.nodes().iter().map(|&t| vec![f(t)]).collect();
        Self {
            grid,
            dim: 1,
            values,
        }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        let values = vec![vec![0.0; dim]; grid.len()];
        Self { grid, dim, values }
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let values = vec![value.to_vec(); grid.len()];
        Self {
            grid,
            dim: value.len(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn value_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i]
    }

    /// Scalar sample at node `i`; only valid for dim 1.
    pub fn scalar(&self, i: usize) -> f64 {
        debug_assert_eq!(self.dim, 1);
        self.values[i][0]
    }

    pub fn scalar_samples(&self) -> Result<Vec<f64>> {
        if self.dim != 1 {
            return Err(Error::NotScalar(self.dim));
        }
        Ok(self.values.iter().map(|v| v[0]).collect())
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> Vec<f64>,
    {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&t, v)| f(t, v))
            .collect();
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        let values = self
            .values
            .iter()
            .map(|v| v.iter().map(|x| factor * x).collect())
            .collect();
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        }
    }

    /// `a * self + b * other`, node by node.
    pub fn linear_comb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| u.iter().zip(v).map(|(x, y)| a * x + b * y).collect())
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.linear_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.linear_comb(1.0, other, -1.0)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                self.grid.subintervals(),
                other.grid.subintervals(),
            ));
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
                context: "sampled function dimensions",
            });
        }
        Ok(())
    }

    fn pointwise_norm(&self, i: usize) -> f64 {
        self.values[i].iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// (L1, L2, sup) norms: the integral norms by grid quadrature of |f| and
    /// |f|², the sup norm as the node maximum of |f|.
    pub fn lp_norms(&self) -> Norms {
        let mut l1 = 0.0;
        let mut l2_sq = 0.0;
        let mut sup: f64 = 0.0;
        for (i, w) in self.grid.weights().iter().enumerate() {
            let p = self.pointwise_norm(i);
            l1 += w * p;
            l2_sq += w * p * p;
            sup = sup.max(p);
        }
        Norms {
            l1,
            l2: l2_sq.max(0.0).sqrt(),
            sup,
        }
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.lp_norms().sup)
    }

    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.lp_norms().l1)
    }
}

/// Composite-Simpson approximation of ∫₀¹ f for a scalar sampled function.
///
/// Exact for polynomials of degree ≤ 3 up to rounding. Odd grids cannot be
/// constructed, so the Simpson parity requirement is enforced at the
/// [`Grid`] level.
pub fn quadrature(f: &SampledFunction) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::NotScalar(f.dim()));
    }
    Ok(f.grid.integrate_samples(&f.scalar_samples()?))
}

/// (‖f‖₁, ‖f‖₂, ‖f‖_sup) of a sampled function.
pub fn lp_norms(f: &SampledFunction) -> Norms {
    f.lp_norms()
}

/// Classical fixed-step RK4 for `a2 y'' + a1 y' + a0 y = forcing`, stepping
/// at the grid resolution so the samples align with kernel nodes.
///
/// Returns the node samples of `y` and `y'`. The forcing is a callable so
/// half-step evaluations stay exact and the integrator keeps its order.
pub fn solve_ivp2<F>(
    coeffs: &CoefficientSet,
    forcing: F,
    y0: &[f64],
    dy0: &[f64],
    grid: &Grid,
) -> Result<(SampledFunction, SampledFunction)>
where
    F: Fn(f64) -> Vec<f64>,
{
    let dim = y0.len();
    if dy0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: dy0.len(),
            context: "initial derivative",
        });
    }
    let n = grid.subintervals();
    let h = grid.spacing();

    let accel = |t: f64, y: &[f64], v: &[f64]| -> Result<Vec<f64>> {
        let a2 = coeffs.checked_leading(t)?;
        let a1 = coeffs.a1(t);
        let a0 = coeffs.a0(t);
        let f = forcing(t);
        debug_assert_eq!(f.len(), dim);
        Ok((0..dim)
            .map(|k| (f[k] - a1 * v[k] - a0 * y[k]) / a2)
            .collect())
    };

    let mut y = y0.to_vec();
    let mut v = dy0.to_vec();
    let mut ys = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    ys.push(y.clone());
    vs.push(v.clone());

    let advanced = |base: &[f64], slope: &[f64], step: f64| -> Vec<f64> {
        base.iter().zip(slope).map(|(b, s)| b + step * s).collect()
    };

    for i in 0..n {
        let t = grid.node(i);
        let k1y = v.clone();
        let k1v = accel(t, &y, &v)?;

        let y2 = advanced(&y, &k1y, 0.5 * h);
        let v2 = advanced(&v, &k1v, 0.5 * h);
        let k2y = v2.clone();
        let k2v = accel(t + 0.5 * h, &y2, &v2)?;

        let y3 = advanced(&y, &k2y, 0.5 * h);
        let v3 = advanced(&v, &k2v, 0.5 * h);
        let k3y = v3.clone();
        let k3v = accel(t + 0.5 * h, &y3, &v3)?;

        let y4 = advanced(&y, &k3y, h);
        let v4 = advanced(&v, &k3v, h);
        let k4y = v4.clone();
        let k4v = accel(t + h, &y4, &v4)?;

        for k in 0..dim {
            y[k] += h / 6.0 * (k1y[k] + 2.0 * k2y[k] + 2.0 * k3y[k] + k4y[k]);
            v[k] += h / 6.0 * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k]);
        }
        ys.push(y.clone());
        vs.push(v.clone());
    }

    Ok((
        SampledFunction::new(grid.clone(), dim, ys)?,
        SampledFunction::new(grid.clone(), dim, vs)?,
    ))
}

/// Homogeneous convenience wrapper around [`solve_ivp2`].
pub fn solve_ivp2_homogeneous(
    coeffs: &CoefficientSet,
    y0: &[f64],
    dy0: &[f64],
    grid: &Grid,
) -> Result<(SampledFunction, SampledFunction)> {
    let dim = y0.len();
    solve_ivp2(coeffs, |_| vec![0.0; dim], y0, dy0, grid)
}

/// L2 norm over [0, 1] of a scalar callable, with the grid quadrature.
pub fn l2_norm_of(f: &ScalarFn, grid: &Grid) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&t, w)| {
            let v = f(t);
            w * v * v
        })
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// L1 norm over [0, 1] of a scalar callable, with the grid quadrature.
pub fn l1_norm_of(f: &ScalarFn, grid: &Grid) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&t, w)| w * f(t).abs())
        .sum()
}

/// First derivative by finite differences: central in the interior,
/// second-order one-sided stencils at the endpoints.
#[allow(clippy::needless_range_loop)] // stencil indexing reads clearer than zipped windows
pub fn derivative_fd(f: &SampledFunction) -> SampledFunction {
    let grid = f.grid().clone();
    let n = grid.subintervals();
    let h = grid.spacing();
    let dim = f.dim();
    let mut values = vec![vec![0.0; dim]; n + 1];
    for k in 0..dim {
        values[0][k] = (-3.0 * f.value(0)[k] + 4.0 * f.value(1)[k] - f.value(2)[k]) / (2.0 * h);
        values[n][k] =
            (3.0 * f.value(n)[k] - 4.0 * f.value(n - 1)[k] + f.value(n - 2)[k]) / (2.0 * h);
        for i in 1..n {
            values[i][k] = (f.value(i + 1)[k] - f.value(i - 1)[k]) / (2.0 * h);
        }
    }
    SampledFunction { grid, dim, values }
}

/// Second derivative by finite differences: central in the interior,
/// third-order one-sided five-point stencils at the endpoints.
#[allow(clippy::needless_range_loop)]
pub fn second_derivative_fd(f: &SampledFunction) -> SampledFunction {
    let grid = f.grid().clone();
    let n = grid.subintervals();
    let h2 = grid.spacing() * grid.spacing();
    let dim = f.dim();
    let mut values = vec![vec![0.0; dim]; n + 1];
    for k in 0..dim {
        values[0][k] = (35.0 * f.value(0)[k] - 104.0 * f.value(1)[k] + 114.0 * f.value(2)[k]
            - 56.0 * f.value(3)[k]
            + 11.0 * f.value(4)[k])
            / (12.0 * h2);
        values[n][k] = (35.0 * f.value(n)[k] - 104.0 * f.value(n - 1)[k]
            + 114.0 * f.value(n - 2)[k]
            - 56.0 * f.value(n - 3)[k]
            + 11.0 * f.value(n - 4)[k])
            / (12.0 * h2);
        for i in 1..n {
            values[i][k] = (f.value(i + 1)[k] - 2.0 * f.value(i)[k] + f.value(i - 1)[k]) / h2;
        }
    }
    SampledFunction { grid, dim, values }
}
