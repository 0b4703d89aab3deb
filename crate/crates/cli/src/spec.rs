//! Problem files: one problem per file, `key = value` lines, `#` comments.
//!
//! ```text
//! dim   = 1
//! grid  = 512
//! a2    = 1
//! a1    = 0
//! a0    = -1
//! bc    = periodic          # or dirichlet / custom (+ bc_row1/bc_row2)
//! rhs   = single            # or box (+ rho)
//! f0    = 0.3*x1 + sin(2*pi*t)
//! c     = 1
//! m     = 0.3
//! mu    = 0.3
//! accretive = true
//! ```
//!
//! Coefficients and metadata (a2, a1, a0, c, mu, alpha, eta) must depend on
//! t only; f0 components (`;`-separated, one per dimension) and rho may use
//! t and x1..xN.

use std::collections::BTreeMap;
use std::sync::Arc;

use greenbvp::greens::BoundaryConditions;
use greenbvp::hammerstein::{RightHandSide, ScalarField, VectorField};
use greenbvp::numerics::{CoefficientSet, Grid, ScalarFn};

use crate::expr::Expression;

#[derive(Debug)]
pub struct SpecError(pub String);

impl std::fmt::Display for SpecError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for SpecError {}

fn fail<T>(message: impl Into<String>) -> Result<T, SpecError> {
    Err(SpecError(message.into()))
}

#[derive(Debug, Clone)]
pub enum BcSpec {
    Periodic,
    Dirichlet,
    Custom { rows: [[f64; 4]; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsKindSpec {
    Single,
    Box,
}

/// Parsed problem description; conversion to core objects is on demand so
/// commands can use only the parts they need.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub grid_n: usize,
    pub a2: Expression,
    pub a1: Expression,
    pub a0: Expression,
    pub bc: BcSpec,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub rhs_kind: Option<RhsKindSpec>,
    pub f0: Vec<Expression>,
    pub rho: Option<Expression>,
    pub growth_c: Option<Expression>,
    pub growth_m: Option<f64>,
    pub mu: Option<Expression>,
    pub alpha: Option<Expression>,
    pub eta: Option<Expression>,
    pub accretive: bool,
}

fn parse_floats(value: &str, context: &str) -> Result<Vec<f64>, SpecError> {
    value
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| SpecError(format!("{context}: bad number `{tok}`")))
        })
        .collect()
}

impl ProblemSpec {
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return fail(format!("line {}: expected `key = value`", line_no + 1));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if entries.insert(key.clone(), value).is_some() {
                return fail(format!("line {}: duplicate key `{key}`", line_no + 1));
            }
        }

        let dim: usize = match entries.get("dim") {
            Some(v) => v
                .parse()
                .map_err(|_| SpecError(format!("dim: bad value `{v}`")))?,
            None => 1,
        };
        if dim == 0 {
            return fail("dim must be positive");
        }
        let grid_n: usize = match entries.get("grid") {
            Some(v) => v
                .parse()
                .map_err(|_| SpecError(format!("grid: bad value `{v}`")))?,
            None => 512,
        };

        let time_expr = |key: &str, default: Option<&str>| -> Result<Option<Expression>, SpecError> {
            let source = entries.get(key).map(String::as_str).or(default);
            match source {
                None => Ok(None),
                Some(src) => {
                    let expr = Expression::parse(src, dim)
                        .map_err(|e| SpecError(format!("{key}: {e}")))?;
                    if !expr.is_time_only() {
                        return fail(format!("{key}: must depend on t only"));
                    }
                    Ok(Some(expr))
                }
            }
        };

        let a2 = time_expr("a2", Some("1"))?.expect("default");
        let a1 = time_expr("a1", Some("0"))?.expect("default");
        let a0 = match time_expr("a0", None)? {
            Some(e) => e,
            None => return fail("missing key `a0`"),
        };

        let bc = match entries.get("bc").map(String::as_str) {
            None | Some("periodic") => BcSpec::Periodic,
            Some("dirichlet") => BcSpec::Dirichlet,
            Some("custom") => {
                let mut rows = [[0.0; 4]; 2];
                for (slot, key) in [(0, "bc_row1"), (1, "bc_row2")] {
                    let Some(value) = entries.get(key) else {
                        return fail(format!("bc = custom needs `{key}`"));
                    };
                    let nums = parse_floats(value, key)?;
                    if nums.len() != 4 {
                        return fail(format!("{key}: expected 4 numbers"));
                    }
                    rows[slot].copy_from_slice(&nums);
                }
                BcSpec::Custom { rows }
            }
            Some(other) => return fail(format!("bc: unknown preset `{other}`")),
        };
        let target = |key: &str| -> Result<Vec<f64>, SpecError> {
            match entries.get(key) {
                None => Ok(vec![0.0; dim]),
                Some(value) => {
                    let nums = parse_floats(value, key)?;
                    if nums.len() != dim {
                        return fail(format!("{key}: expected {dim} numbers"));
                    }
                    Ok(nums)
                }
            }
        };
        let d1 = target("bc_d1")?;
        let d2 = target("bc_d2")?;

        let rhs_kind = match entries.get("rhs").map(String::as_str) {
            None => None,
            Some("single") => Some(RhsKindSpec::Single),
            Some("box") => Some(RhsKindSpec::Box),
            Some(other) => return fail(format!("rhs: unknown kind `{other}`")),
        };
        let f0 = match entries.get("f0") {
            None => Vec::new(),
            Some(value) => {
                let components: Vec<&str> = value.split(';').map(str::trim).collect();
                if components.len() != dim {
                    return fail(format!(
                        "f0: expected {dim} `;`-separated components, got {}",
                        components.len()
                    ));
                }
                components
                    .iter()
                    .map(|src| {
                        Expression::parse(src, dim).map_err(|e| SpecError(format!("f0: {e}")))
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let rho = match entries.get("rho") {
            None => None,
            Some(src) => {
                Some(Expression::parse(src, dim).map_err(|e| SpecError(format!("rho: {e}")))?)
            }
        };
        let growth_m = match entries.get("m") {
            None => None,
            Some(v) => Some(
                v.parse::<f64>()
                    .map_err(|_| SpecError(format!("m: bad value `{v}`")))?,
            ),
        };
        let accretive = match entries.get("accretive").map(String::as_str) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => return fail(format!("accretive: expected true/false, got `{other}`")),
        };

        let known = [
            "dim", "grid", "a2", "a1", "a0", "bc", "bc_row1", "bc_row2", "bc_d1", "bc_d2",
            "rhs", "f0", "rho", "c", "m", "mu", "alpha", "eta", "accretive",
        ];
        for key in entries.keys() {
            if !known.contains(&key.as_str()) {
                return fail(format!("unknown key `{key}`"));
            }
        }

        Ok(Self {
            dim,
            grid_n,
            a2,
            a1,
            a0,
            bc,
            d1,
            d2,
            rhs_kind,
            f0,
            rho,
            growth_c: time_expr("c", None)?,
            growth_m,
            mu: time_expr("mu", None)?,
            alpha: time_expr("alpha", None)?,
            eta: time_expr("eta", None)?,
            accretive,
        })
    }

    pub fn grid(&self) -> Result<Grid, greenbvp::Error> {
        Grid::new(self.grid_n)
    }

    pub fn coefficients(&self) -> CoefficientSet {
        let a1 = time_fn(&self.a1);
        let a0 = time_fn(&self.a0);
        if self.a2.is_literal(1.0) {
            CoefficientSet::monic(a1, a0)
        } else {
            CoefficientSet::new(time_fn(&self.a2), a1, a0)
        }
    }

    pub fn boundary_conditions(&self) -> Result<BoundaryConditions, greenbvp::Error> {
        match &self.bc {
            BcSpec::Periodic => Ok(BoundaryConditions::periodic(self.dim)),
            BcSpec::Dirichlet => BoundaryConditions::dirichlet(self.d1.clone(), self.d2.clone()),
            BcSpec::Custom { rows } => {
                BoundaryConditions::new(*rows, self.d1.clone(), self.d2.clone())
            }
        }
    }

    /// The problem is posed with homogeneous targets.
    pub fn homogeneous_targets(&self) -> bool {
        self.d1.iter().chain(&self.d2).all(|&v| v == 0.0)
    }

    pub fn eta_fn(&self) -> Option<ScalarFn> {
        self.eta.as_ref().map(time_fn)
    }

    /// Assemble the right-hand side; errors if the rhs section is missing
    /// pieces.
    pub fn right_hand_side(&self) -> Result<RightHandSide, SpecError> {
        let Some(kind) = self.rhs_kind else {
            return fail("this command needs an `rhs = single|box` section");
        };
        if self.f0.is_empty() {
            return fail("missing key `f0`");
        }
        let Some(growth_c) = &self.growth_c else {
            return fail("missing growth bound `c`");
        };
        let Some(growth_m) = self.growth_m else {
            return fail("missing growth constant `m`");
        };
        let f0 = state_fn(&self.f0);
        let mut rhs = match kind {
            RhsKindSpec::Single => {
                RightHandSide::single(self.dim, f0, time_fn(growth_c), growth_m)
            }
            RhsKindSpec::Box => {
                let Some(rho) = &self.rho else {
                    return fail("rhs = box needs a `rho` radius expression");
                };
                RightHandSide::boxed(
                    self.dim,
                    f0,
                    radius_fn(rho),
                    time_fn(growth_c),
                    growth_m,
                )
            }
        };
        if let Some(mu) = &self.mu {
            rhs = rhs.with_lipschitz(time_fn(mu));
        }
        if let Some(alpha) = &self.alpha {
            rhs = rhs.with_alpha(time_fn(alpha));
        }
        if let Some(eta) = &self.eta {
            rhs = rhs.with_eta(time_fn(eta));
        }
        Ok(rhs.with_accretive(self.accretive))
    }
}

fn time_fn(expr: &Expression) -> ScalarFn {
    let expr = expr.clone();
    Arc::new(move |t| expr.eval_time(t))
}

fn radius_fn(expr: &Expression) -> ScalarField {
    let expr = expr.clone();
    Arc::new(move |t, x: &[f64]| expr.eval(t, x))
}

fn state_fn(components: &[Expression]) -> VectorField {
    let components = components.to_vec();
    Arc::new(move |t, x: &[f64]| components.iter().map(|e| e.eval(t, x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
        # sample problem
        dim = 2
        grid = 64
        a2 = 1
        a1 = 0
        a0 = -1
        bc = periodic
        rhs = box
        f0 = 0.1*x1 ; 0.1*x2
        rho = 0.2
        c = 0.5
        m = 0.1
        mu = 0.1
        eta = 0.3
    ";

    #[test]
    fn parses_a_full_problem() {
        let spec = ProblemSpec::parse(SAMPLE).unwrap();
        assert_eq!(spec.dim, 2);
        assert_eq!(spec.grid_n, 64);
        let rhs = spec.right_hand_side().unwrap();
        assert_eq!(rhs.dim(), 2);
        assert_eq!(rhs.center(0.0, &[1.0, 2.0]), vec![0.1, 0.2]);
        assert_eq!(rhs.radius(0.0, &[0.0, 0.0]), 0.2);
        let coeffs = spec.coefficients();
        assert!(coeffs.is_monic());
        assert_eq!(coeffs.a0(0.3), -1.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(ProblemSpec::parse("a0").is_err());
        assert!(ProblemSpec::parse("a0 = -1\nbogus = 3").is_err());
        assert!(ProblemSpec::parse("a0 = -1\na0 = -2").is_err());
        assert!(ProblemSpec::parse("a0 = tan(t)").is_err());
        // coefficients must not depend on the state
        assert!(ProblemSpec::parse("a0 = -1 - x1^2").is_err());
        // f0 component count must match dim
        assert!(ProblemSpec::parse("dim = 2\na0 = -1\nrhs = single\nf0 = x1").is_err());
    }

    #[test]
    fn missing_rhs_pieces_are_reported_lazily() {
        let spec = ProblemSpec::parse("a0 = -1").unwrap();
        assert!(spec.grid().is_ok());
        assert!(spec.right_hand_side().is_err());
        let spec = ProblemSpec::parse("a0 = -1\nrhs = box\nf0 = 0\nc = 1\nm = 0").unwrap();
        assert!(spec.right_hand_side().is_err()); // no rho
    }

    #[test]
    fn custom_rows_and_targets() {
        let text = "
            a0 = -1
            bc = custom
            bc_row1 = 1 0 0 0
            bc_row2 = 0 0 1 0
            bc_d1 = 1
            bc_d2 = 0
        ";
        let spec = ProblemSpec::parse(text).unwrap();
        let bc = spec.boundary_conditions().unwrap();
        assert_eq!(bc.target(0), &[1.0]);
        assert!(!spec.homogeneous_targets());
        assert!(!bc.is_periodic());
    }
}
