//! Green's functions for the reduced two-point problem.
//!
//! The kernel is assembled by variation of parameters from the canonical
//! fundamental system plus a 2×2 boundary correction, so the only heavy
//! ingredient is a pair of initial value solves. Closed-form kernels for two
//! constant-coefficient periodic problems are kept alongside as references.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    solve_ivp2_homogeneous, split_row, CoefficientSet, Grid, SampledFunction,
};

/// Determinant magnitude below which the reduced system is treated as
/// compatible (the completely homogeneous problem has nontrivial solutions).
/// Entries are O(1) for the kernels of interest, so this separates genuine
/// incompatibility from rounding noise.
pub const DETERMINANT_THRESHOLD: f64 = 1e-8;

const WRONSKIAN_FLOOR: f64 = 1e-10;

/// The 2×4 coefficient block and targets of the two boundary functionals
///
/// ```text
/// B_i x = b_i1 x(0) + b_i2 x'(0) + c_i1 x(1) + c_i2 x'(1) = d_i .
/// ```
#[derive(Debug, Clone)]
pub struct BoundaryConditions {
    rows: [[f64; 4]; 2],
    targets: [Vec<f64>; 2],
}

impl BoundaryConditions {
    pub fn new(rows: [[f64; 4]; 2], d1: Vec<f64>, d2: Vec<f64>) -> Result<Self> {
        if d1.len() != d2.len() || d1.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: d1.len().max(1),
                got: d2.len(),
                context: "boundary targets",
            });
        }
        // the coefficient block must have rank 2: some 2×2 minor is nonzero
        let mut max_minor: f64 = 0.0;
        for a in 0..4 {
            for b in (a + 1)..4 {
                let minor = rows[0][a] * rows[1][b] - rows[0][b] * rows[1][a];
                max_minor = max_minor.max(minor.abs());
            }
        }
        let scale = rows
            .iter()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(1.0, f64::max);
        if max_minor <= 1e-12 * scale * scale {
            return Err(Error::DegenerateBoundaryRows);
        }
        Ok(Self {
            rows,
            targets: [d1, d2],
        })
    }

    /// Periodic conditions x(0) = x(1), x'(0) = x'(1).
    pub fn periodic(dim: usize) -> Self {
        Self {
            rows: [[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]],
            targets: [vec![0.0; dim], vec![0.0; dim]],
        }
    }

    /// Dirichlet conditions x(0) = d1, x(1) = d2.
    pub fn dirichlet(d1: Vec<f64>, d2: Vec<f64>) -> Result<Self> {
        Self::new([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]], d1, d2)
    }

    pub fn rows(&self) -> &[[f64; 4]; 2] {
        &self.rows
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i]
    }

    pub fn dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.targets.iter().flatten().all(|&x| x == 0.0)
    }

    pub fn is_periodic(&self) -> bool {
        self.rows == [[1.0, 0.0, -1.0, 0.0], [0.0, 1.0, 0.0, -1.0]]
    }

    /// Apply row `i` to scalar endpoint data.
    pub fn apply_scalar(&self, i: usize, y0: f64, dy0: f64, y1: f64, dy1: f64) -> f64 {
        let r = &self.rows[i];
        r[0] * y0 + r[1] * dy0 + r[2] * y1 + r[3] * dy1
    }

    /// B_i applied componentwise to a sampled function with its derivative.
    pub fn apply(&self, i: usize, f: &SampledFunction, df: &SampledFunction) -> Vec<f64> {
        let n = f.grid().subintervals();
        (0..f.dim())
            .map(|k| {
                self.apply_scalar(
                    i,
                    f.value(0)[k],
                    df.value(0)[k],
                    f.value(n)[k],
                    df.value(n)[k],
                )
            })
            .collect()
    }

    /// |B₁f − d₁| + |B₂f − d₂| with Euclidean norms on the targets.
    pub fn residual(&self, f: &SampledFunction, df: &SampledFunction) -> f64 {
        (0..2)
            .map(|i| {
                let applied = self.apply(i, f, df);
                applied
                    .iter()
                    .zip(&self.targets[i])
                    .map(|(a, d)| (a - d) * (a - d))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum()
    }
}

/// Canonical fundamental system of the homogeneous equation:
/// u1(0) = 1, u1'(0) = 0 and u2(0) = 0, u2'(0) = 1.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    pub u1: SampledFunction,
    pub du1: SampledFunction,
    pub u2: SampledFunction,
    pub du2: SampledFunction,
    wronskian: Vec<f64>,
}

impl FundamentalSystem {
    pub fn wronskian(&self) -> &[f64] {
        &self.wronskian
    }
}

/// Solve the two canonical initial value problems and check the Wronskian
/// stays away from zero at every node.
pub fn fundamental_system(coeffs: &CoefficientSet, grid: &Grid) -> Result<FundamentalSystem> {
    coeffs.validate(grid)?;
    let (u1, du1) = solve_ivp2_homogeneous(coeffs, &[1.0], &[0.0], grid)?;
    let (u2, du2) = solve_ivp2_homogeneous(coeffs, &[0.0], &[1.0], grid)?;
    let mut wronskian = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let w = u1.scalar(i) * du2.scalar(i) - u2.scalar(i) * du1.scalar(i);
        if w.abs() < WRONSKIAN_FLOOR {
            return Err(Error::DegenerateWronskian {
                t: grid.node(i),
                value: w.abs(),
            });
        }
        wronskian.push(w);
    }
    Ok(FundamentalSystem {
        u1,
        du1,
        u2,
        du2,
        wronskian,
    })
}

fn boundary_matrix(bc: &BoundaryConditions, fs: &FundamentalSystem, n: usize) -> [[f64; 2]; 2] {
    let apply = |i: usize, u: &SampledFunction, du: &SampledFunction| {
        bc.apply_scalar(i, u.scalar(0), du.scalar(0), u.scalar(n), du.scalar(n))
    };
    [
        [apply(0, &fs.u1, &fs.du1), apply(0, &fs.u2, &fs.du2)],
        [apply(1, &fs.u1, &fs.du1), apply(1, &fs.u2, &fs.du2)],
    ]
}

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Determinant of the 2×2 matrix [B_i u_j] built from the canonical
/// fundamental system. A magnitude below [`DETERMINANT_THRESHOLD`] means the
/// completely homogeneous problem has nontrivial solutions, so no kernel
/// exists.
pub fn compatibility_determinant(
    coeffs: &CoefficientSet,
    bc: &BoundaryConditions,
    grid: &Grid,
) -> Result<f64> {
    let fs = fundamental_system(coeffs, grid)?;
    Ok(det2(&boundary_matrix(bc, &fs, grid.subintervals())))
}

/// Identifiers for the closed-form reference kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedFormId {
    /// Periodic problem for x'' - x.
    PeriodicXppMinusX,
    /// Periodic problem for x'' - x' - x.
    PeriodicXppXpX,
}

/// Both closed forms are exponential-pair kernels: with λ1, λ2 the roots of
/// the characteristic polynomial,
///
/// ```text
/// G(t,s) = 1/(λ2-λ1) · Σ_k  c_k(branch) · exp(λ_k (t-s)) ,
/// c_k(upper) = ∓ e^{λ_k}/(1-e^{λ_k}),   c_k(lower) = ∓ 1/(1-e^{λ_k}) ,
/// ```
///
/// with the upper branch valid for t ≤ s and the lower for s ≤ t.
#[derive(Debug, Clone)]
struct ClosedExpKernel {
    id: ClosedFormId,
    lambda: [f64; 2],
    scale: f64,
    upper_coef: [f64; 2],
    lower_coef: [f64; 2],
}

impl ClosedExpKernel {
    fn new(id: ClosedFormId) -> Self {
        let lambda = match id {
            ClosedFormId::PeriodicXppMinusX => [1.0, -1.0],
            ClosedFormId::PeriodicXppXpX => {
                let s5 = 5f64.sqrt();
                [0.5 * (s5 + 1.0), -0.5 * (s5 - 1.0)]
            }
        };
        let scale = 1.0 / (lambda[1] - lambda[0]);
        let upper_coef = [
            -lambda[0].exp() / (1.0 - lambda[0].exp()),
            lambda[1].exp() / (1.0 - lambda[1].exp()),
        ];
        let lower_coef = [
            -1.0 / (1.0 - lambda[0].exp()),
            1.0 / (1.0 - lambda[1].exp()),
        ];
        Self {
            id,
            lambda,
            scale,
            upper_coef,
            lower_coef,
        }
    }

    fn coefficients(&self) -> CoefficientSet {
        match self.id {
            ClosedFormId::PeriodicXppMinusX => CoefficientSet::monic_const(0.0, -1.0),
            ClosedFormId::PeriodicXppXpX => CoefficientSet::monic_const(-1.0, -1.0),
        }
    }

    fn eval(&self, t: f64, s: f64, lower: bool, t_order: u32) -> f64 {
        let coef = if lower {
            &self.lower_coef
        } else {
            &self.upper_coef
        };
        self.scale
            * (0..2)
                .map(|k| {
                    coef[k] * self.lambda[k].powi(t_order as i32) * (self.lambda[k] * (t - s)).exp()
                })
                .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
struct NumericKernel {
    u1: Vec<f64>,
    du1: Vec<f64>,
    u2: Vec<f64>,
    du2: Vec<f64>,
    /// Boundary-correction coefficients c1(s_j), c2(s_j).
    corr: [Vec<f64>; 2],
    /// 1 / (a2(s_j) W(s_j)).
    inv_a2w: Vec<f64>,
}

impl NumericKernel {
    fn upper(&self, i: usize, j: usize) -> f64 {
        self.corr[0][j] * self.u1[i] + self.corr[1][j] * self.u2[i]
    }

    fn cauchy(&self, i: usize, j: usize) -> f64 {
        (self.u1[j] * self.u2[i] - self.u1[i] * self.u2[j]) * self.inv_a2w[j]
    }

    fn upper_dt(&self, i: usize, j: usize) -> f64 {
        self.corr[0][j] * self.du1[i] + self.corr[1][j] * self.du2[i]
    }

    fn cauchy_dt(&self, i: usize, j: usize) -> f64 {
        (self.u1[j] * self.du2[i] - self.du1[i] * self.u2[j]) * self.inv_a2w[j]
    }
}

#[derive(Debug, Clone)]
enum KernelRepr {
    Numeric(NumericKernel),
    Closed(ClosedExpKernel),
}

/// Branch-aware scalar kernel with its t-partial derivative, sampled on the
/// node lattice. On vector-valued problems the kernel acts componentwise.
///
/// Evaluation is lazy: the numeric representation keeps only the fundamental
/// system and the per-column correction coefficients.
#[derive(Debug, Clone)]
pub struct GreensKernel {
    grid: Grid,
    coeffs: CoefficientSet,
    bc: BoundaryConditions,
    repr: KernelRepr,
}

impl GreensKernel {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bc
    }

    pub fn representation(&self) -> &'static str {
        match &self.repr {
            KernelRepr::Numeric(_) => "numeric",
            KernelRepr::Closed(c) => match c.id {
                ClosedFormId::PeriodicXppMinusX => "closed_form_periodic_xpp_minus_x",
                ClosedFormId::PeriodicXppXpX => "closed_form_xpp_xp_x",
            },
        }
    }

    /// Lower branch G(t_i, s_j), the formula valid for s ≤ t.
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(k) => k.upper(i, j) + k.cauchy(i, j),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), true, 0),
        }
    }

    /// Upper branch G(t_i, s_j), the formula valid for t ≤ s.
    pub fn upper(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(k) => k.upper(i, j),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), false, 0),
        }
    }

    /// Lower-branch ∂G/∂t, the one-sided limit from t > s on the diagonal.
    pub fn lower_dt(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(k) => k.upper_dt(i, j) + k.cauchy_dt(i, j),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), true, 1),
        }
    }

    /// Upper-branch ∂G/∂t, the one-sided limit from t < s on the diagonal.
    pub fn upper_dt(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(k) => k.upper_dt(i, j),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), false, 1),
        }
    }

    /// Branch value of ∂²G/∂t². For the numeric representation this uses the
    /// homogeneous equation satisfied by each branch in t, so it is only
    /// meaningful off the diagonal.
    pub fn lower_dtt(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(_) => self.dtt_from_ode(i, self.lower(i, j), self.lower_dt(i, j)),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), true, 2),
        }
    }

    pub fn upper_dtt(&self, i: usize, j: usize) -> f64 {
        match &self.repr {
            KernelRepr::Numeric(_) => self.dtt_from_ode(i, self.upper(i, j), self.upper_dt(i, j)),
            KernelRepr::Closed(c) => c.eval(self.grid.node(i), self.grid.node(j), false, 2),
        }
    }

    fn dtt_from_ode(&self, i: usize, value: f64, dt: f64) -> f64 {
        let t = self.grid.node(i);
        -(self.coeffs.a1(t) * dt + self.coeffs.a0(t) * value) / self.coeffs.a2(t)
    }

    /// G(t_i, s_j) with the branch picked by the index order; the diagonal
    /// carries the common value of the two branches.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        if j <= i {
            self.lower(i, j)
        } else {
            self.upper(i, j)
        }
    }

    /// One-sided derivative jump [∂G/∂t](s⁺, s) − [∂G/∂t](s⁻, s).
    pub fn derivative_jump(&self, j: usize) -> f64 {
        self.lower_dt(j, j) - self.upper_dt(j, j)
    }

    /// Dense node snapshot G(t_i, s_j), row-major in t.
    pub fn dense_snapshot(&self) -> Vec<Vec<f64>> {
        let n = self.grid.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.value(i, j)).collect())
            .collect()
    }

    /// True when the kernel is nonpositive on the whole node lattice.
    pub fn is_nonpositive(&self) -> bool {
        let n = self.grid.len();
        (0..n).all(|i| (0..n).all(|j| self.value(i, j) <= 1e-12))
    }
}

/// Assemble the kernel for the reduced problem: with K the Cauchy kernel of
/// variation of parameters,
///
/// ```text
/// G(t,s) = K(t,s)·[s ≤ t] + c1(s) u1(t) + c2(s) u2(t) ,
/// K(t,s) = (u1(s) u2(t) − u1(t) u2(s)) / (a2(s) W(s)) ,
/// ```
///
/// where c(s) solves the 2×2 system [B_i u_j]·c(s) = −B_i(K(·,s)·[s ≤ ·])
/// so that both boundary functionals annihilate G(·,s).
pub fn build_greens(
    coeffs: &CoefficientSet,
    bc: &BoundaryConditions,
    grid: &Grid,
) -> Result<GreensKernel> {
    let fs = fundamental_system(coeffs, grid)?;
    let n = grid.subintervals();
    let m = boundary_matrix(bc, &fs, n);
    let det = det2(&m);
    if det.abs() < DETERMINANT_THRESHOLD {
        return Err(Error::IncompatibleSystem {
            det,
            threshold: DETERMINANT_THRESHOLD,
        });
    }

    let u1: Vec<f64> = (0..=n).map(|i| fs.u1.scalar(i)).collect();
    let du1: Vec<f64> = (0..=n).map(|i| fs.du1.scalar(i)).collect();
    let u2: Vec<f64> = (0..=n).map(|i| fs.u2.scalar(i)).collect();
    let du2: Vec<f64> = (0..=n).map(|i| fs.du2.scalar(i)).collect();

    let mut inv_a2w = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let a2 = coeffs.checked_leading(grid.node(j))?;
        inv_a2w.push(1.0 / (a2 * fs.wronskian()[j]));
    }

    // The masked Cauchy kernel contributes only at t = 1: for s > 0 the
    // mask kills the t = 0 terms, and the corner s = 0 reads the mask as
    // strict so that c(s) stays continuous down to the edge.
    let mut corr = [Vec::with_capacity(n + 1), Vec::with_capacity(n + 1)];
    let rows = bc.rows();
    for j in 0..=n {
        let k_end = (u1[j] * u2[n] - u1[n] * u2[j]) * inv_a2w[j];
        let kt_end = (u1[j] * du2[n] - du1[n] * u2[j]) * inv_a2w[j];
        let rhs = [
            -(rows[0][2] * k_end + rows[0][3] * kt_end),
            -(rows[1][2] * k_end + rows[1][3] * kt_end),
        ];
        corr[0].push((rhs[0] * m[1][1] - rhs[1] * m[0][1]) / det);
        corr[1].push((m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det);
    }

    Ok(GreensKernel {
        grid: grid.clone(),
        coeffs: coeffs.clone(),
        bc: bc.clone(),
        repr: KernelRepr::Numeric(NumericKernel {
            u1,
            du1,
            u2,
            du2,
            corr,
            inv_a2w,
        }),
    })
}

/// Exact closed-form kernel for one of the two constant-coefficient periodic
/// reference problems, with analytic branch derivatives.
pub fn closed_form_kernel(id: ClosedFormId, grid: &Grid) -> GreensKernel {
    let closed = ClosedExpKernel::new(id);
    GreensKernel {
        grid: grid.clone(),
        coeffs: closed.coefficients(),
        bc: BoundaryConditions::periodic(1),
        repr: KernelRepr::Closed(closed),
    }
}

/// The unique combination of the fundamental system meeting inhomogeneous
/// boundary targets, together with its derivative.
#[derive(Debug, Clone)]
pub struct Lift {
    pub value: SampledFunction,
    pub derivative: SampledFunction,
}

impl Lift {
    /// Zero lift (homogeneous targets).
    pub fn zero(grid: Grid, dim: usize) -> Self {
        Self {
            value: SampledFunction::zeros(grid.clone(), dim),
            derivative: SampledFunction::zeros(grid, dim),
        }
    }

    /// Lift from explicit callables; the derivative must match analytically.
    pub fn from_fns<F, D>(grid: Grid, dim: usize, f: F, df: D) -> Self
    where
        F: Fn(f64) -> Vec<f64>,
        D: Fn(f64) -> Vec<f64>,
    {
        Self {
            value: SampledFunction::from_fn(grid.clone(), dim, f),
            derivative: SampledFunction::from_fn(grid, dim, df),
        }
    }

    /// ‖h‖ + ‖h'‖ in the sup norm.
    pub fn c1_norm(&self) -> f64 {
        self.value.lp_norms().sup + self.derivative.lp_norms().sup
    }
}

/// Solve the homogeneous equation with the inhomogeneous boundary targets:
/// h = α1 u1 + α2 u2 componentwise, with [B_i u_j] α = d.
pub fn homogeneous_lift(
    coeffs: &CoefficientSet,
    bc: &BoundaryConditions,
    grid: &Grid,
) -> Result<Lift> {
    let fs = fundamental_system(coeffs, grid)?;
    let n = grid.subintervals();
    let m = boundary_matrix(bc, &fs, n);
    let det = det2(&m);
    if det.abs() < DETERMINANT_THRESHOLD {
        return Err(Error::IncompatibleSystem {
            det,
            threshold: DETERMINANT_THRESHOLD,
        });
    }
    let dim = bc.dim();
    let mut value = Vec::with_capacity(n + 1);
    let mut derivative = Vec::with_capacity(n + 1);
    let alphas: Vec<(f64, f64)> = (0..dim)
        .map(|k| {
            let d = [bc.target(0)[k], bc.target(1)[k]];
            (
                (d[0] * m[1][1] - d[1] * m[0][1]) / det,
                (m[0][0] * d[1] - m[1][0] * d[0]) / det,
            )
        })
        .collect();
    for i in 0..=n {
        let mut v = Vec::with_capacity(dim);
        let mut dv = Vec::with_capacity(dim);
        for &(a1, a2) in &alphas {
            v.push(a1 * fs.u1.scalar(i) + a2 * fs.u2.scalar(i));
            dv.push(a1 * fs.du1.scalar(i) + a2 * fs.du2.scalar(i));
        }
        value.push(v);
        derivative.push(dv);
    }
    Ok(Lift {
        value: SampledFunction::new(grid.clone(), dim, value)?,
        derivative: SampledFunction::new(grid.clone(), dim, derivative)?,
    })
}

/// Kernel norms feeding the existence conditions and a-priori bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelNorms {
    /// sup over node t of ‖G(t,·)‖₂.
    pub sup_l2_rows: f64,
    /// sup over node t of ‖∂G/∂t(t,·)‖₂.
    pub sup_l2_rows_dt: f64,
    /// sup of |G| over the node lattice (the diagonal is part of it).
    pub sup_abs: f64,
    /// ‖ t ↦ ‖∂²G/∂t²(t,·)‖₂ ‖₂, when the second branch derivative is
    /// available.
    pub l2_of_l2_dt2: Option<f64>,
}

/// Row norms by branch-split quadrature: each row integrates [0, t] and
/// [t, 1] separately so the diagonal kink does not degrade the Simpson rule.
pub fn kernel_norms(kernel: &GreensKernel) -> KernelNorms {
    let grid = kernel.grid();
    let n = grid.subintervals();
    let mut sup_l2_rows: f64 = 0.0;
    let mut sup_l2_rows_dt: f64 = 0.0;
    let mut sup_abs: f64 = 0.0;
    let mut dt2_row_sq = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let rule = split_row(grid, i);
        let mut row_sq = 0.0;
        let mut row_dt_sq = 0.0;
        let mut row_dtt_sq = 0.0;
        for &(j, w) in &rule.lower {
            let g = kernel.lower(i, j);
            row_sq += w * g * g;
            let gt = kernel.lower_dt(i, j);
            row_dt_sq += w * gt * gt;
            let gtt = kernel.lower_dtt(i, j);
            row_dtt_sq += w * gtt * gtt;
        }
        for &(j, w) in &rule.upper {
            let g = kernel.upper(i, j);
            row_sq += w * g * g;
            let gt = kernel.upper_dt(i, j);
            row_dt_sq += w * gt * gt;
            let gtt = kernel.upper_dtt(i, j);
            row_dtt_sq += w * gtt * gtt;
        }
        sup_l2_rows = sup_l2_rows.max(row_sq.max(0.0).sqrt());
        sup_l2_rows_dt = sup_l2_rows_dt.max(row_dt_sq.max(0.0).sqrt());
        for j in 0..=n {
            sup_abs = sup_abs.max(kernel.value(i, j).abs());
        }
        dt2_row_sq.push(row_dtt_sq);
    }
    let l2_of_l2_dt2 = Some(
        grid.weights()
            .iter()
            .zip(&dt2_row_sq)
            .map(|(w, sq)| w * sq)
            .sum::<f64>()
            .max(0.0)
            .sqrt(),
    );
    KernelNorms {
        sup_l2_rows,
        sup_l2_rows_dt,
        sup_abs,
        l2_of_l2_dt2,
    }
}
