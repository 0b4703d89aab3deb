//! The Hammerstein operator layer: right-hand sides with growth/Lipschitz
//! metadata, node-wise selections, solvability checks, a-priori bounds, the
//! Picard fixed-point solver, and an independent finite-difference oracle
//! that never touches the kernel route.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{DivergenceReport, Error, Result};
use crate::greens::{BoundaryConditions, GreensKernel, KernelNorms, Lift};
use crate::numerics::{
    derivative_fd, l1_norm_of, l2_norm_of, second_derivative_fd, split_row, CoefficientSet, Grid,
    SampledFunction, ScalarFn,
};

/// Vector-valued field (t, x) ↦ ℝᴺ.
pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar field (t, x) ↦ ℝ, used for the box radius.
pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

pub fn vector_field<F>(f: F) -> VectorField
where
    F: Fn(f64, &[f64]) -> Vec<f64> + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn scalar_field<F>(f: F) -> ScalarField
where
    F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhsKind {
    /// Single-valued map f(t, x).
    Single,
    /// Box-valued map f0(t, x) + rho(t, x)·[-1, 1]ᴺ.
    Box,
}

/// Right-hand side of the inclusion with its declared metadata.
///
/// The selection set at (t, x) is `f0(t,x) + rho(t,x)·[-1,1]ᴺ`, a closed
/// bounded convex box that degenerates to a point for the single-valued
/// kind. Declared bounds are spot-checked on random probes rather than
/// proved; see [`RightHandSide::probe_metadata`]. Everything is evaluated
/// at grid nodes, so time regularity below the grid resolution is not
/// modeled.
#[derive(Clone)]
pub struct RightHandSide {
    kind: RhsKind,
    dim: usize,
    f0: VectorField,
    rho: ScalarField,
    growth_c: ScalarFn,
    growth_m: f64,
    lipschitz: Option<ScalarFn>,
    alpha: Option<ScalarFn>,
    eta: Option<ScalarFn>,
    accretive: bool,
}

impl RightHandSide {
    pub fn single(dim: usize, f0: VectorField, growth_c: ScalarFn, growth_m: f64) -> Self {
        Self {
            kind: RhsKind::Single,
            dim,
            f0,
            rho: scalar_field(|_, _| 0.0),
            growth_c,
            growth_m,
            lipschitz: None,
            alpha: None,
            eta: None,
            accretive: false,
        }
    }

    pub fn boxed(
        dim: usize,
        f0: VectorField,
        rho: ScalarField,
        growth_c: ScalarFn,
        growth_m: f64,
    ) -> Self {
        Self {
            kind: RhsKind::Box,
            dim,
            f0,
            rho,
            growth_c,
            growth_m,
            lipschitz: None,
            alpha: None,
            eta: None,
            accretive: false,
        }
    }

    pub fn with_lipschitz(mut self, mu: ScalarFn) -> Self {
        self.lipschitz = Some(mu);
        self
    }

    pub fn with_alpha(mut self, alpha: ScalarFn) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_eta(mut self, eta: ScalarFn) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_accretive(mut self, flag: bool) -> Self {
        self.accretive = flag;
        self
    }

    pub fn kind(&self) -> RhsKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_m(&self) -> f64 {
        self.growth_m
    }

    pub fn growth_c(&self) -> &ScalarFn {
        &self.growth_c
    }

    pub fn lipschitz(&self) -> Option<&ScalarFn> {
        self.lipschitz.as_ref()
    }

    pub fn alpha(&self) -> Option<&ScalarFn> {
        self.alpha.as_ref()
    }

    pub fn eta(&self) -> Option<&ScalarFn> {
        self.eta.as_ref()
    }

    pub fn is_accretive(&self) -> bool {
        self.accretive
    }

    /// Center of the selection set, f0(t, x).
    pub fn center(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.f0)(t, x)
    }

    pub fn radius(&self, t: f64, x: &[f64]) -> f64 {
        match self.kind {
            RhsKind::Single => 0.0,
            RhsKind::Box => (self.rho)(t, x),
        }
    }

    /// Box point f0 + rho·coeffs for coefficients in [-1, 1]ᴺ.
    pub fn selection_point(&self, t: f64, x: &[f64], coeffs: &[f64]) -> Vec<f64> {
        let r = self.radius(t, x);
        self.center(t, x)
            .iter()
            .zip(coeffs)
            .map(|(c, k)| c + r * k)
            .collect()
    }

    /// Nearest point of the selection set to `v` (componentwise clamp).
    pub fn clamp_to_set(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let center = self.center(t, x);
        let r = self.radius(t, x);
        center
            .iter()
            .zip(v)
            .map(|(c, vk)| vk.clamp(c - r, c + r))
            .collect()
    }

    /// Euclidean distance of `v` to the selection set.
    pub fn distance_to_set(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        let p = self.clamp_to_set(t, x, v);
        p.iter()
            .zip(v)
            .map(|(pk, vk)| (pk - vk) * (pk - vk))
            .sum::<f64>()
            .sqrt()
    }

    /// |f0(t,x)| + √N·rho(t,x), the quantity the growth bound must majorize.
    pub fn envelope(&self, t: f64, x: &[f64]) -> f64 {
        let f = self.center(t, x);
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        norm + (self.dim as f64).sqrt() * self.radius(t, x)
    }

    /// Spot-check the declared growth and Lipschitz bounds on random probe
    /// points `(t, x)` with `|x|_∞ ≤ amplitude`.
    pub fn probe_metadata(&self, cfg: &ProbeConfig) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..self.dim)
                .map(|_| rng.gen_range(-cfg.amplitude..=cfg.amplitude))
                .collect()
        };
        const SLACK: f64 = 1e-9;
        for _ in 0..cfg.samples {
            let t: f64 = rng.gen_range(0.0..=1.0);
            let x = draw(&mut rng);
            let r = self.radius(t, &x);
            if r < 0.0 {
                return Err(Error::MetadataViolation(format!(
                    "box radius is negative at t = {t}: {r}"
                )));
            }
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = (self.growth_c)(t) + self.growth_m * x_norm;
            if self.envelope(t, &x) > bound + SLACK {
                return Err(Error::MetadataViolation(format!(
                    "growth bound fails at t = {t}: {} > {}",
                    self.envelope(t, &x),
                    bound
                )));
            }
            if let Some(mu) = &self.lipschitz {
                let y = draw(&mut rng);
                let fx = self.center(t, &x);
                let fy = self.center(t, &y);
                let df = fx
                    .iter()
                    .zip(&fy)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let dr = (self.radius(t, &x) - self.radius(t, &y)).abs();
                let dxy = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if df + (self.dim as f64).sqrt() * dr > mu(t) * dxy + SLACK {
                    return Err(Error::MetadataViolation(format!(
                        "Lipschitz bound fails at t = {t}: {} > {}",
                        df + (self.dim as f64).sqrt() * dr,
                        mu(t) * dxy
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for RightHandSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RightHandSide")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("growth_m", &self.growth_m)
            .field("accretive", &self.accretive)
            .finish()
    }
}

/// Probe settings for metadata spot checks; the amplitude is the desk-scale
/// surrogate of the truncation ball the declared bounds must cover.
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub samples: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            samples: 256,
            amplitude: 2.0,
            seed: 0x9e37_79b9,
        }
    }
}

/// How to pick a point of the selection set at each node.
#[derive(Debug, Clone)]
pub enum SelectionSpec<'a> {
    /// The box center f0(t, x(t)).
    Center,
    /// Uniform coefficients in [-1, 1]ᴺ per node, drawn from the seed.
    Random { seed: u64 },
    /// Nearest box point to a reference forcing (componentwise clamp).
    NearestTo(&'a SampledFunction),
}

/// Node-wise selection of the superposition operator: returns a forcing `w`
/// with `w(t_i)` in the selection set at `(t_i, x(t_i))`.
pub fn nemytskii(
    rhs: &RightHandSide,
    x: &SampledFunction,
    selection: &SelectionSpec,
) -> Result<SampledFunction> {
    if x.dim() != rhs.dim() {
        return Err(Error::DimensionMismatch {
            expected: rhs.dim(),
            got: x.dim(),
            context: "trajectory dimension",
        });
    }
    let grid = x.grid().clone();
    let mut rng = match selection {
        SelectionSpec::Random { seed } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let t = grid.node(i);
        let xi = x.value(i);
        let w = match selection {
            SelectionSpec::Center => rhs.center(t, xi),
            SelectionSpec::Random { .. } => {
                let rng = rng.as_mut().expect("rng present for random selection");
                let coeffs: Vec<f64> =
                    (0..rhs.dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                rhs.selection_point(t, xi, &coeffs)
            }
            SelectionSpec::NearestTo(v) => {
                if v.dim() != rhs.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: rhs.dim(),
                        got: v.dim(),
                        context: "selection reference dimension",
                    });
                }
                rhs.clamp_to_set(t, xi, v.value(i))
            }
        };
        values.push(w);
    }
    SampledFunction::new(grid, rhs.dim(), values)
}

fn check_grids(kernel: &GreensKernel, u: &SampledFunction) -> Result<()> {
    if kernel.grid() != u.grid() {
        return Err(Error::GridMismatch(
            kernel.grid().subintervals(),
            u.grid().subintervals(),
        ));
    }
    Ok(())
}

fn h_rows(
    kernel: &GreensKernel,
    u: &SampledFunction,
    with_derivative: bool,
) -> (SampledFunction, Option<SampledFunction>) {
    let grid = kernel.grid();
    let n = grid.subintervals();
    let dim = u.dim();
    let mut values = Vec::with_capacity(n + 1);
    let mut dvalues = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let rule = split_row(grid, i);
        let mut acc = vec![0.0; dim];
        let mut dacc = vec![0.0; dim];
        for &(j, w) in &rule.lower {
            let g = kernel.lower(i, j);
            let gt = if with_derivative {
                kernel.lower_dt(i, j)
            } else {
                0.0
            };
            for (k, uj) in u.value(j).iter().enumerate() {
                acc[k] += w * g * uj;
                dacc[k] += w * gt * uj;
            }
        }
        for &(j, w) in &rule.upper {
            let g = kernel.upper(i, j);
            let gt = if with_derivative {
                kernel.upper_dt(i, j)
            } else {
                0.0
            };
            for (k, uj) in u.value(j).iter().enumerate() {
                acc[k] += w * g * uj;
                dacc[k] += w * gt * uj;
            }
        }
        values.push(acc);
        dvalues.push(dacc);
    }
    let value = SampledFunction::new(grid.clone(), dim, values).expect("node count matches");
    let derivative = with_derivative
        .then(|| SampledFunction::new(grid.clone(), dim, dvalues).expect("node count matches"));
    (value, derivative)
}

/// Hammerstein operator: `H(u)(t) = ∫₀¹ G(t,s) u(s) ds` and its derivative,
/// by branch-split quadrature on each row. Linear in `u`.
pub fn apply_h(
    kernel: &GreensKernel,
    u: &SampledFunction,
) -> Result<(SampledFunction, SampledFunction)> {
    check_grids(kernel, u)?;
    let (value, derivative) = h_rows(kernel, u, true);
    Ok((value, derivative.expect("derivative requested")))
}

/// Value-only variant of [`apply_h`] for inner solver loops.
pub fn apply_h_value(kernel: &GreensKernel, u: &SampledFunction) -> Result<SampledFunction> {
    check_grids(kernel, u)?;
    Ok(h_rows(kernel, u, false).0)
}

/// One solvability condition in the product form `lhs < 1`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub condition_id: String,
    pub lhs: Option<f64>,
    pub rhs: f64,
    pub margin: Option<f64>,
    pub pass: Option<bool>,
}

impl ConditionCheck {
    fn evaluated(id: &str, lhs: f64) -> Self {
        Self {
            condition_id: id.to_string(),
            lhs: Some(lhs),
            rhs: 1.0,
            margin: Some(1.0 - lhs),
            pass: Some(lhs < 1.0),
        }
    }

    fn not_evaluable(id: &str) -> Self {
        Self {
            condition_id: id.to_string(),
            lhs: None,
            rhs: 1.0,
            margin: None,
            pass: None,
        }
    }
}

/// Derived admissible bounds on the metadata, the reciprocal form of the
/// conditions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Largest admissible growth constant m.
    pub growth_m: f64,
    /// Largest admissible ‖η‖₂.
    pub eta_l2: f64,
    /// Largest admissible ‖μ‖₁.
    pub lipschitz_mu_l1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    /// Contraction constant q = ‖μ‖₁ · sup|G| of the fixed-point map, when
    /// the Lipschitz bound is declared.
    pub contraction_q: Option<f64>,
    pub thresholds: Thresholds,
}

impl ConditionReport {
    pub fn check(&self, id: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.condition_id == id)
    }

    /// True when every evaluable condition passes.
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }
}

/// Evaluate the solvability conditions for the given kernel norms:
///
/// - `growth`:          m · sup_t ‖G(t,·)‖₂ < 1
/// - `eta`:             2 · sup_t ‖G(t,·)‖₂ · ‖η‖₂ < 1
/// - `growth_plus_one`: (m+1) · sup_t ‖G(t,·)‖₂ < 1
/// - `lipschitz`:       ‖μ‖₁ · sup |G| < 1
///
/// Conditions whose metadata is missing are reported as not evaluable, which
/// is not a failure.
pub fn check_conditions(
    norms: &KernelNorms,
    rhs: &RightHandSide,
    grid: &Grid,
) -> ConditionReport {
    let sup_l2 = norms.sup_l2_rows;
    let mut checks = Vec::with_capacity(4);
    checks.push(ConditionCheck::evaluated("growth", rhs.growth_m() * sup_l2));
    match rhs.eta() {
        Some(eta) => checks.push(ConditionCheck::evaluated(
            "eta",
            2.0 * sup_l2 * l2_norm_of(eta, grid),
        )),
        None => checks.push(ConditionCheck::not_evaluable("eta")),
    }
    checks.push(ConditionCheck::evaluated(
        "growth_plus_one",
        (rhs.growth_m() + 1.0) * sup_l2,
    ));
    let contraction_q = rhs
        .lipschitz()
        .map(|mu| l1_norm_of(mu, grid) * norms.sup_abs);
    match contraction_q {
        Some(q) => checks.push(ConditionCheck::evaluated("lipschitz", q)),
        None => checks.push(ConditionCheck::not_evaluable("lipschitz")),
    }
    ConditionReport {
        checks,
        contraction_q,
        thresholds: Thresholds {
            growth_m: 1.0 / sup_l2,
            eta_l2: 1.0 / (2.0 * sup_l2),
            lipschitz_mu_l1: 1.0 / norms.sup_abs,
        },
    }
}

/// A-priori solution bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AprioriBounds {
    /// Bound on ‖x‖_sup:  sup‖G(t,·)‖₂ ‖c‖₂ / (1 − m sup‖G(t,·)‖₂).
    pub sup_norm: f64,
    /// Bound on ‖x‖ + ‖x'‖:  ‖ĉ‖₂ (sup‖G(t,·)‖₂ + sup‖∂G/∂t(t,·)‖₂) with
    /// ĉ = c + m·(sup-norm bound).
    pub c1: f64,
}

pub fn apriori_bounds(
    norms: &KernelNorms,
    rhs: &RightHandSide,
    grid: &Grid,
) -> Result<AprioriBounds> {
    let s = norms.sup_l2_rows;
    let m = rhs.growth_m();
    if m * s >= 1.0 {
        return Err(Error::ConditionViolated {
            condition: "growth",
            lhs: m * s,
            rhs: 1.0,
        });
    }
    let c_l2 = l2_norm_of(rhs.growth_c(), grid);
    let sup_norm = s * c_l2 / (1.0 - m * s);
    let c = rhs.growth_c().clone();
    let chat: ScalarFn = Arc::new(move |t| c(t) + m * sup_norm);
    let c1 = l2_norm_of(&chat, grid) * (s + norms.sup_l2_rows_dt);
    Ok(AprioriBounds { sup_norm, c1 })
}

/// Converged trajectory with the selection that generated it.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: SampledFunction,
    pub dx: SampledFunction,
    /// Selection with Lx = w; reprojected onto the selection set at the
    /// final trajectory, so its node distance to the set is zero.
    pub w: SampledFunction,
    /// ‖a₂x'' + a₁x' + a₀x − w‖₁ with derivatives by central differences.
    pub residual_ode: f64,
    /// |B₁x − d₁| + |B₂x − d₂| with the exact derivative samples.
    pub residual_bc: f64,
    pub iterations: usize,
    /// ‖w_{k+1} − w_k‖₁ after each iteration.
    pub increments: Vec<f64>,
    /// Contraction constant when the Lipschitz bound is declared.
    pub q: Option<f64>,
    /// True when q < 1 certifies convergence and the plain iteration ran.
    pub guaranteed: bool,
}

impl Solution {
    /// Largest ratio of successive increments, ignoring pairs whose base
    /// increment is at or below `floor` (tail rounding noise).
    pub fn observed_ratio(&self, floor: f64) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for pair in self.increments.windows(2) {
            if pair[0] > floor {
                let r = pair[1] / pair[0];
                worst = Some(worst.map_or(r, |w: f64| w.max(r)));
            }
        }
        worst
    }
}

fn lattice_sup_abs(kernel: &GreensKernel) -> f64 {
    let n = kernel.grid().len();
    let mut sup: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            sup = sup.max(kernel.value(i, j).abs());
        }
    }
    sup
}

/// Apply the differential operator to node samples by finite differences.
fn apply_operator_fd(coeffs: &CoefficientSet, x: &SampledFunction) -> SampledFunction {
    let dx = derivative_fd(x);
    let ddx = second_derivative_fd(x);
    let grid = x.grid().clone();
    let dim = x.dim();
    let values = (0..grid.len())
        .map(|i| {
            let t = grid.node(i);
            (0..dim)
                .map(|k| {
                    coeffs.a2(t) * ddx.value(i)[k]
                        + coeffs.a1(t) * dx.value(i)[k]
                        + coeffs.a0(t) * x.value(i)[k]
                })
                .collect()
        })
        .collect();
    SampledFunction::new(grid, dim, values).expect("operator keeps the node count")
}

#[allow(clippy::too_many_arguments)]
fn finalize_solution(
    kernel: &GreensKernel,
    lift: Option<&Lift>,
    rhs: &RightHandSide,
    w: &SampledFunction,
    iterations: usize,
    increments: Vec<f64>,
    q: Option<f64>,
    guaranteed: bool,
) -> Result<Solution> {
    let (hw, dhw) = apply_h(kernel, w)?;
    let (x, dx) = match lift {
        Some(l) => (l.value.add(&hw)?, l.derivative.add(&dhw)?),
        None => (hw, dhw),
    };
    let grid = x.grid().clone();
    let w_final = SampledFunction::new(
        grid.clone(),
        rhs.dim(),
        (0..grid.len())
            .map(|i| rhs.clamp_to_set(grid.node(i), x.value(i), w.value(i)))
            .collect(),
    )?;
    let lx = apply_operator_fd(kernel.coefficients(), &x);
    let residual_ode = lx.sub(&w_final)?.lp_norms().l1;
    // the boundary content of x = h + H(w) is whatever the lift carries
    let bc = kernel.boundary_conditions();
    let residual_bc = (0..2)
        .map(|i| {
            let applied = bc.apply(i, &x, &dx);
            let target = match lift {
                Some(l) => bc.apply(i, &l.value, &l.derivative),
                None => vec![0.0; rhs.dim()],
            };
            applied
                .iter()
                .zip(&target)
                .map(|(a, d)| (a - d) * (a - d))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(Solution {
        x,
        dx,
        w: w_final,
        residual_ode,
        residual_bc,
        iterations,
        increments,
        q,
        guaranteed,
    })
}

fn picard_driver(
    kernel: &GreensKernel,
    lift: Option<&Lift>,
    rhs: &RightHandSide,
    w0: SampledFunction,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    check_grids(kernel, &w0)?;
    let grid = kernel.grid();
    let q = rhs
        .lipschitz()
        .map(|mu| l1_norm_of(mu, grid) * lattice_sup_abs(kernel));
    let guaranteed = q.is_some_and(|q| q < 1.0);
    // Without a contraction certificate the plain iteration can settle into
    // a two-cycle (the kernel has spectral radius one on constants for the
    // periodic reference problems), so the no-guarantee path averages the
    // update, which damps the oscillating mode without moving fixed points.
    let relaxation = if guaranteed { 1.0 } else { 0.5 };

    let mut w = w0;
    let mut increments = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let hw = apply_h_value(kernel, &w)?;
        let x = match lift {
            Some(l) => l.value.add(&hw)?,
            None => hw,
        };
        let proposed = nemytskii(rhs, &x, &SelectionSpec::NearestTo(&w))?;
        let next = if relaxation == 1.0 {
            proposed
        } else {
            w.linear_comb(1.0 - relaxation, &proposed, relaxation)?
        };
        let increment = next.l1_distance(&w)?;
        increments.push(increment);
        w = next;
        iterations += 1;
        if increment <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        let last_increment = increments.last().copied().unwrap_or(f64::INFINITY);
        return Err(Error::Divergence(Box::new(DivergenceReport {
            iterations,
            increments,
            last_increment,
        })));
    }
    finalize_solution(kernel, lift, rhs, &w, iterations, increments, q, guaranteed)
}

/// Picard iteration for the fixed-point form `x = h + H(w)`,
/// `w ∈ F(·, x)`: iterate `w ← N_F(h + H(w))` with the nearest-point
/// selection, stopping when the L1 increment drops to `tol`.
///
/// When the declared Lipschitz data certify a contraction (q < 1) the plain
/// iteration runs and increments decay at rate ≤ q; otherwise the solver
/// still runs, averaged and flagged as carrying no guarantee.
pub fn picard_solve(
    kernel: &GreensKernel,
    lift: Option<&Lift>,
    rhs: &RightHandSide,
    selection: &SelectionSpec,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    let grid = kernel.grid().clone();
    let x0 = match lift {
        Some(l) => l.value.clone(),
        None => SampledFunction::zeros(grid, rhs.dim()),
    };
    let w0 = nemytskii(rhs, &x0, selection)?;
    picard_driver(kernel, lift, rhs, w0, tol, max_iter)
}

/// [`picard_solve`] from an explicit starting forcing.
pub fn picard_solve_from(
    kernel: &GreensKernel,
    lift: Option<&Lift>,
    rhs: &RightHandSide,
    w0: SampledFunction,
    tol: f64,
    max_iter: usize,
) -> Result<Solution> {
    picard_driver(kernel, lift, rhs, w0, tol, max_iter)
}

/// Finite-difference oracle for linear right-hand sides f(t,x) = λx + g(t):
/// solves the central-difference discretization of
/// `a₂x'' + a₁x' + (a₀−λ)x = g` plus the two boundary rows, one dense solve
/// per component. No Green's function is involved anywhere on this path.
pub fn fd_oracle(
    coeffs: &CoefficientSet,
    bc: &BoundaryConditions,
    lambda: f64,
    g: &SampledFunction,
    grid: &Grid,
) -> Result<SampledFunction> {
    coeffs.validate(grid)?;
    if g.dim() != bc.dim() {
        return Err(Error::DimensionMismatch {
            expected: bc.dim(),
            got: g.dim(),
            context: "oracle forcing dimension",
        });
    }
    if g.grid() != grid {
        return Err(Error::GridMismatch(
            grid.subintervals(),
            g.grid().subintervals(),
        ));
    }
    let n = grid.subintervals();
    let h = grid.spacing();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 1..n {
        let t = grid.node(i);
        let a2 = coeffs.a2(t);
        let a1 = coeffs.a1(t);
        let a0 = coeffs.a0(t) - lambda;
        a[(i, i - 1)] = a2 / (h * h) - a1 / (2.0 * h);
        a[(i, i)] = -2.0 * a2 / (h * h) + a0;
        a[(i, i + 1)] = a2 / (h * h) + a1 / (2.0 * h);
    }
    // boundary rows with one-sided second-order derivative stencils
    let rows = bc.rows();
    for (row, r) in [(0usize, rows[0]), (n, rows[1])] {
        a[(row, 0)] += r[0];
        a[(row, 0)] -= r[1] * 3.0 / (2.0 * h);
        a[(row, 1)] += r[1] * 4.0 / (2.0 * h);
        a[(row, 2)] -= r[1] / (2.0 * h);
        a[(row, n)] += r[2];
        a[(row, n)] += r[3] * 3.0 / (2.0 * h);
        a[(row, n - 1)] -= r[3] * 4.0 / (2.0 * h);
        a[(row, n - 2)] += r[3] / (2.0 * h);
    }
    let lu = a.lu();
    let dim = g.dim();
    let mut values = vec![vec![0.0; dim]; n + 1];
    #[allow(clippy::needless_range_loop)]
    for k in 0..dim {
        let mut b = DVector::<f64>::zeros(n + 1);
        b[0] = bc.target(0)[k];
        b[n] = bc.target(1)[k];
        for i in 1..n {
            b[i] = g.value(i)[k];
        }
        let x = lu.solve(&b).ok_or(Error::SingularSystem)?;
        for i in 0..=n {
            values[i][k] = x[i];
        }
    }
    SampledFunction::new(grid.clone(), dim, values)
}

/// Self-contained residuals of a candidate trajectory, all derivatives by
/// finite differences so the check does not trust any solver output.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualReport {
    /// ‖Lx − nearest selection‖₁.
    pub ode_res: f64,
    /// |B₁x − d₁| + |B₂x − d₂|.
    pub bc_res: f64,
    /// Max node distance of Lx(t_i) to the selection set.
    pub selection_gap: f64,
}

pub fn residual_check(
    coeffs: &CoefficientSet,
    bc: &BoundaryConditions,
    rhs: &RightHandSide,
    x: &SampledFunction,
) -> ResidualReport {
    let grid = x.grid();
    let lx = apply_operator_fd(coeffs, x);
    let mut gap: f64 = 0.0;
    let projected = SampledFunction::new(
        grid.clone(),
        x.dim(),
        (0..grid.len())
            .map(|i| {
                let t = grid.node(i);
                let p = rhs.clamp_to_set(t, x.value(i), lx.value(i));
                let d = p
                    .iter()
                    .zip(lx.value(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                gap = gap.max(d);
                p
            })
            .collect(),
    )
    .expect("projection keeps the node count");
    let ode_res = lx
        .sub(&projected)
        .expect("same grid")
        .lp_norms()
        .l1;
    let dx = derivative_fd(x);
    ResidualReport {
        ode_res,
        bc_res: bc.residual(x, &dx),
        selection_gap: gap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::build_greens;
    use crate::numerics::constant;
    use approx::assert_relative_eq;

    fn periodic_kernel(n: usize) -> GreensKernel {
        let grid = Grid::new(n).unwrap();
        build_greens(
            &CoefficientSet::monic_const(0.0, -1.0),
            &BoundaryConditions::periodic(1),
            &grid,
        )
        .unwrap()
    }

    fn linear_rhs(lambda: f64, forcing: impl Fn(f64) -> f64 + Send + Sync + 'static) -> RightHandSide {
        RightHandSide::single(
            1,
            vector_field(move |t, x| vec![lambda * x[0] + forcing(t)]),
            constant(2.0),
            lambda.abs(),
        )
        .with_lipschitz(constant(lambda.abs()))
    }

    #[test]
    fn h_of_zero_is_zero() {
        let kernel = periodic_kernel(64);
        let zero = SampledFunction::zeros(kernel.grid().clone(), 1);
        let (hu, dhu) = apply_h(&kernel, &zero).unwrap();
        assert_eq!(hu.lp_norms().sup, 0.0);
        assert_eq!(dhu.lp_norms().sup, 0.0);
    }

    #[test]
    fn h_of_one_is_minus_one() {
        // x ≡ -1 solves x'' - x = 1 with periodic conditions
        let kernel = periodic_kernel(256);
        let one = SampledFunction::constant(kernel.grid().clone(), &[1.0]);
        let (hu, _) = apply_h(&kernel, &one).unwrap();
        for i in (0..kernel.grid().len()).step_by(16) {
            assert!((hu.scalar(i) + 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn h_is_linear() {
        let kernel = periodic_kernel(64);
        let grid = kernel.grid().clone();
        let u = SampledFunction::scalar_from_fn(grid.clone(), |t| (6.0 * t).sin());
        let v = SampledFunction::scalar_from_fn(grid, |t| t * t - 0.25);
        let combo = u.linear_comb(2.0, &v, 1.0).unwrap();
        let (h_combo, _) = apply_h(&kernel, &combo).unwrap();
        let (hu, _) = apply_h(&kernel, &u).unwrap();
        let (hv, _) = apply_h(&kernel, &v).unwrap();
        let recombined = hu.linear_comb(2.0, &hv, 1.0).unwrap();
        assert!(h_combo.sup_distance(&recombined).unwrap() < 1e-12);
    }

    #[test]
    fn nemytskii_single_ignores_selection() {
        let grid = Grid::new(32).unwrap();
        let rhs = RightHandSide::single(
            1,
            vector_field(|t, x| vec![x[0] + t]),
            constant(1.0),
            1.0,
        );
        let x = SampledFunction::scalar_from_fn(grid.clone(), |t| t);
        let center = nemytskii(&rhs, &x, &SelectionSpec::Center).unwrap();
        let random = nemytskii(&rhs, &x, &SelectionSpec::Random { seed: 7 }).unwrap();
        let reference = SampledFunction::zeros(grid, 1);
        let nearest = nemytskii(&rhs, &x, &SelectionSpec::NearestTo(&reference)).unwrap();
        assert!(center.sup_distance(&random).unwrap() == 0.0);
        assert!(center.sup_distance(&nearest).unwrap() == 0.0);
    }

    #[test]
    fn nemytskii_clamps_onto_the_box() {
        let grid = Grid::new(16).unwrap();
        let rhs = RightHandSide::boxed(
            2,
            vector_field(|_, _| vec![0.0, 0.0]),
            scalar_field(|_, _| 1.0),
            constant(2.0),
            0.0,
        );
        let x = SampledFunction::zeros(grid.clone(), 2);
        let far = SampledFunction::constant(grid.clone(), &[5.0, 5.0]);
        let w = nemytskii(&rhs, &x, &SelectionSpec::NearestTo(&far)).unwrap();
        for i in 0..grid.len() {
            assert_eq!(w.value(i), &[1.0, 1.0]);
        }
        // random selections live inside the box
        let random = nemytskii(&rhs, &x, &SelectionSpec::Random { seed: 3 }).unwrap();
        for i in 0..grid.len() {
            assert_eq!(rhs.distance_to_set(grid.node(i), x.value(i), random.value(i)), 0.0);
        }
    }

    #[test]
    fn probe_accepts_consistent_and_rejects_broken_metadata() {
        let honest = RightHandSide::boxed(
            1,
            vector_field(|_, x| vec![0.5 * x[0]]),
            scalar_field(|_, _| 0.25),
            constant(0.25),
            0.5,
        )
        .with_lipschitz(constant(0.5));
        assert!(honest.probe_metadata(&ProbeConfig::default()).is_ok());

        let lying = RightHandSide::single(
            1,
            vector_field(|_, x| vec![3.0 * x[0]]),
            constant(0.0),
            1.0,
        );
        assert!(matches!(
            lying.probe_metadata(&ProbeConfig::default()),
            Err(Error::MetadataViolation(_))
        ));
    }

    #[test]
    fn condition_report_for_lipschitz_reference() {
        let kernel = periodic_kernel(256);
        let norms = crate::greens::kernel_norms(&kernel);
        let rhs = RightHandSide::single(
            1,
            vector_field(|_, x| vec![0.9 * x[0]]),
            constant(1.0),
            0.9,
        )
        .with_lipschitz(constant(0.9));
        let report = check_conditions(&norms, &rhs, kernel.grid());
        let q = report.contraction_q.unwrap();
        assert_relative_eq!(q, 0.97378, max_relative = 1e-3);
        assert_eq!(report.check("lipschitz").unwrap().pass, Some(true));
        // admissible ‖μ‖₁ is 2(e-1)/(e+1) ≈ 0.9242
        let e = 1f64.exp();
        assert_relative_eq!(
            report.thresholds.lipschitz_mu_l1,
            2.0 * (e - 1.0) / (e + 1.0),
            max_relative = 1e-4
        );
        assert!((report.thresholds.lipschitz_mu_l1 - 0.924).abs() < 5e-4);
    }

    #[test]
    fn condition_report_growth_threshold_other_kernel() {
        let grid = Grid::new(256).unwrap();
        let kernel = build_greens(
            &CoefficientSet::monic_const(-1.0, -1.0),
            &BoundaryConditions::periodic(1),
            &grid,
        )
        .unwrap();
        let norms = crate::greens::kernel_norms(&kernel);
        let rhs = RightHandSide::single(
            1,
            vector_field(|_, x| vec![0.5 * x[0]]),
            constant(1.0),
            0.5,
        );
        let report = check_conditions(&norms, &rhs, &grid);
        let growth = report.check("growth").unwrap();
        assert_eq!(growth.pass, Some(true));
        assert_relative_eq!(growth.lhs.unwrap(), 0.5 * 1.00065, max_relative = 1e-3);
        assert!((report.thresholds.growth_m - 0.999).abs() < 1e-3);
        // missing metadata is reported as not evaluable, not a failure
        assert_eq!(report.check("eta").unwrap().pass, None);
        // the shifted-growth condition can never hold here: sup‖G(t,·)‖₂ > 1
        assert_eq!(report.check("growth_plus_one").unwrap().pass, Some(false));
        assert!(!report.all_pass());
    }

    #[test]
    fn growth_condition_with_zero_m_has_unit_margin() {
        let kernel = periodic_kernel(64);
        let norms = crate::greens::kernel_norms(&kernel);
        let rhs = RightHandSide::single(1, vector_field(|_, _| vec![1.0]), constant(1.0), 0.0);
        let report = check_conditions(&norms, &rhs, kernel.grid());
        assert_relative_eq!(
            report.check("growth").unwrap().margin.unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn apriori_bounds_examples() {
        let kernel = periodic_kernel(256);
        let norms = crate::greens::kernel_norms(&kernel);
        let grid = kernel.grid();

        let silent = RightHandSide::single(1, vector_field(|_, _| vec![0.0]), constant(0.0), 0.3);
        let b = apriori_bounds(&norms, &silent, grid).unwrap();
        assert_eq!(b.sup_norm, 0.0);

        let rhs = RightHandSide::single(1, vector_field(|_, _| vec![1.0]), constant(1.0), 0.4);
        let b = apriori_bounds(&norms, &rhs, grid).unwrap();
        let s = norms.sup_l2_rows;
        assert_relative_eq!(b.sup_norm, s / (1.0 - 0.4 * s), max_relative = 1e-12);

        // the bound grows with m below the admissible ceiling
        let mut previous = 0.0;
        for m in [0.0, 0.2, 0.4, 0.6, 0.8] {
            let rhs = RightHandSide::single(1, vector_field(|_, _| vec![1.0]), constant(1.0), m);
            let b = apriori_bounds(&norms, &rhs, grid).unwrap();
            assert!(b.sup_norm > previous);
            previous = b.sup_norm;
        }

        // and is undefined past it
        let wild = RightHandSide::single(1, vector_field(|_, _| vec![1.0]), constant(1.0), 1.2);
        assert!(matches!(
            apriori_bounds(&norms, &wild, grid),
            Err(Error::ConditionViolated { .. })
        ));
    }

    #[test]
    fn picard_converges_immediately_for_state_free_rhs() {
        let kernel = periodic_kernel(128);
        let rhs = RightHandSide::single(
            1,
            vector_field(|t, _| vec![(2.0 * std::f64::consts::PI * t).sin()]),
            constant(1.0),
            0.0,
        )
        .with_lipschitz(constant(0.0));
        let sol = picard_solve(&kernel, None, &rhs, &SelectionSpec::Center, 1e-12, 50).unwrap();
        assert!(sol.iterations <= 2);
        assert!(sol.guaranteed);
        let g = SampledFunction::scalar_from_fn(kernel.grid().clone(), |t| {
            (2.0 * std::f64::consts::PI * t).sin()
        });
        let (hg, _) = apply_h(&kernel, &g).unwrap();
        assert!(sol.x.sup_distance(&hg).unwrap() < 1e-10);
    }

    #[test]
    fn picard_contracts_to_zero_for_half_x() {
        let kernel = periodic_kernel(128);
        let rhs = linear_rhs(0.5, |_| 0.0);
        let w0 = SampledFunction::constant(kernel.grid().clone(), &[1.0]);
        let sol = picard_solve_from(&kernel, None, &rhs, w0, 1e-11, 200).unwrap();
        assert!(sol.x.lp_norms().sup < 1e-9);
        let q = sol.q.unwrap();
        let ratio = sol.observed_ratio(1e-9).unwrap();
        assert!(ratio <= q + 0.05, "ratio {ratio:.4} vs q {q:.4}");
    }

    #[test]
    fn picard_box_solution_returns_an_admissible_selection() {
        let kernel = periodic_kernel(128);
        let tau = 2.0 * std::f64::consts::PI;
        let rhs = RightHandSide::boxed(
            1,
            vector_field(move |t, x| vec![0.2 * x[0] + (tau * t).sin()]),
            scalar_field(|_, _| 0.1),
            constant(1.1),
            0.2,
        )
        .with_lipschitz(constant(0.2));
        let sol = picard_solve(
            &kernel,
            None,
            &rhs,
            &SelectionSpec::Random { seed: 21 },
            1e-11,
            200,
        )
        .unwrap();
        assert!(sol.guaranteed);
        let grid = sol.x.grid();
        for i in 0..grid.len() {
            let gap = rhs.distance_to_set(grid.node(i), sol.x.value(i), sol.w.value(i));
            assert!(gap <= 1e-9, "node {i}: selection gap {gap:.3e}");
        }
        assert!(sol.residual_bc < 1e-9);
        // the random start leaves a rough admissible component inside the
        // box, so the difference operator sees it locally averaged; the
        // residual scales with the box diameter, not the solver tolerance
        assert!(
            sol.residual_ode < 0.4 * 0.1,
            "residual {:.3e}",
            sol.residual_ode
        );
    }

    #[test]
    fn picard_runs_out_of_budget_reports_history() {
        let kernel = periodic_kernel(64);
        let rhs = linear_rhs(0.5, |t| (2.0 * std::f64::consts::PI * t).cos());
        let err = picard_solve(&kernel, None, &rhs, &SelectionSpec::Center, 1e-14, 2).unwrap_err();
        match err {
            Error::Divergence(report) => {
                assert_eq!(report.iterations, 2);
                assert_eq!(report.increments.len(), 2);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn oracle_trivial_and_constant_cases() {
        let grid = Grid::new(256).unwrap();
        let coeffs = CoefficientSet::monic_const(0.0, -1.0);
        let bc = BoundaryConditions::periodic(1);

        let zero = SampledFunction::zeros(grid.clone(), 1);
        let x = fd_oracle(&coeffs, &bc, 0.0, &zero, &grid).unwrap();
        assert!(x.lp_norms().sup < 1e-12);

        let one = SampledFunction::constant(grid.clone(), &[1.0]);
        let x = fd_oracle(&coeffs, &bc, 0.0, &one, &grid).unwrap();
        for i in (0..grid.len()).step_by(32) {
            assert!((x.scalar(i) + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn oracle_agrees_with_kernel_route() {
        let grid = Grid::new(256).unwrap();
        let coeffs = CoefficientSet::monic_const(0.0, -1.0);
        let bc = BoundaryConditions::periodic(1);
        let kernel = build_greens(&coeffs, &bc, &grid).unwrap();
        let g = SampledFunction::scalar_from_fn(grid.clone(), |t| {
            (2.0 * std::f64::consts::PI * t).sin()
        });
        let oracle = fd_oracle(&coeffs, &bc, 0.0, &g, &grid).unwrap();
        let (hg, _) = apply_h(&kernel, &g).unwrap();
        let gap = oracle.sup_distance(&hg).unwrap();
        let tol = f64::max(1e-4, 20.0 / (256.0 * 256.0));
        assert!(gap < tol, "oracle vs kernel gap {gap:.3e}");
    }

    #[test]
    fn residuals_of_oracle_output_are_small() {
        let grid = Grid::new(256).unwrap();
        let coeffs = CoefficientSet::monic_const(0.0, -1.0);
        let bc = BoundaryConditions::periodic(1);
        let g = SampledFunction::scalar_from_fn(grid.clone(), |t| {
            (2.0 * std::f64::consts::PI * t).sin()
        });
        let rhs = RightHandSide::single(
            1,
            vector_field(|t, _| vec![(2.0 * std::f64::consts::PI * t).sin()]),
            constant(1.0),
            0.0,
        );
        let x = fd_oracle(&coeffs, &bc, 0.0, &g, &grid).unwrap();
        let report = residual_check(&coeffs, &bc, &rhs, &x);
        assert!(report.ode_res < 1e-4, "ode residual {:.3e}", report.ode_res);
        assert!(report.bc_res < 1e-8, "bc residual {:.3e}", report.bc_res);
    }

    #[test]
    fn residuals_vanish_for_the_zero_solution() {
        let grid = Grid::new(64).unwrap();
        let coeffs = CoefficientSet::monic_const(0.0, -1.0);
        let bc = BoundaryConditions::periodic(1);
        let rhs = RightHandSide::single(1, vector_field(|_, x| vec![x[0]]), constant(0.0), 1.0);
        let report = residual_check(&coeffs, &bc, &rhs, &SampledFunction::zeros(grid, 1));
        assert_eq!(report.ode_res, 0.0);
        assert_eq!(report.bc_res, 0.0);
        assert_eq!(report.selection_gap, 0.0);
    }

    #[test]
    fn residual_grows_linearly_with_perturbation() {
        let grid = Grid::new(256).unwrap();
        let coeffs = CoefficientSet::monic_const(0.0, -1.0);
        let bc = BoundaryConditions::periodic(1);
        let rhs = RightHandSide::single(1, vector_field(|_, _| vec![0.0]), constant(0.0), 0.0);
        let residual_at = |delta: f64| {
            let x = SampledFunction::scalar_from_fn(grid.clone(), |t| {
                delta * (std::f64::consts::PI * t).sin()
            });
            residual_check(&coeffs, &bc, &rhs, &x).ode_res
        };
        let r1 = residual_at(0.1);
        let r2 = residual_at(0.2);
        assert!((r2 / r1 - 2.0).abs() < 0.05, "ratio {}", r2 / r1);
    }

    #[test]
    fn value_only_application_matches_the_pair() {
        let kernel = periodic_kernel(64);
        let u = SampledFunction::scalar_from_fn(kernel.grid().clone(), |t| t);
        let direct = apply_h_value(&kernel, &u).unwrap();
        let (paired, _) = apply_h(&kernel, &u).unwrap();
        assert!(direct.sup_distance(&paired).unwrap() == 0.0);
    }
}
