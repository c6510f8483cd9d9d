//! Centralized ground truth for the load-control problem
//!
//! `minimize sum_i f_i(x_i)  s.t.  a_i <= x_i <= b_i,  sum_i x_i = C`
//!
//! solved by bisection on the single multiplier of the balance constraint.

use serde::{Deserialize, Serialize};

use crate::disutility::{argmin_on_box, Disutility, LoadBounds};
use crate::error::{Error, Result};

/// Disutilities, bounds and balance constant of one load-control problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub functions: Vec<Disutility>,
    pub bounds: Vec<LoadBounds>,
    /// Balance constant C in MW: the generation shortfall the loads must absorb.
    pub c_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x_star: Vec<f64>,
    pub y_star: f64,
    pub p_star: f64,
    /// `sum_i x_star_i - C` at termination.
    pub residual: f64,
}

impl ProblemInstance {
    pub fn new(functions: Vec<Disutility>, bounds: Vec<LoadBounds>, c_mw: f64) -> Result<Self> {
        let p = ProblemInstance { functions, bounds, c_mw };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.functions.is_empty() {
            return Err(Error::InvalidParameter("instance needs at least one load".into()));
        }
        if self.functions.len() != self.bounds.len() {
            return Err(Error::InvalidParameter(format!(
                "{} disutilities but {} bounds",
                self.functions.len(),
                self.bounds.len()
            )));
        }
        if !self.c_mw.is_finite() {
            return Err(Error::InvalidParameter(format!("C = {}", self.c_mw)));
        }
        for f in &self.functions {
            f.validate()?;
        }
        for b in &self.bounds {
            b.validate()?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.functions.len()
    }

    /// `(sum a_i, sum b_i)`.
    pub fn capacity(&self) -> (f64, f64) {
        self.bounds.iter().fold((0.0, 0.0), |(lo, hi), b| (lo + b.lower, hi + b.upper))
    }

    pub fn check_feasible(&self) -> Result<()> {
        let (lower, upper) = self.capacity();
        if self.c_mw < lower || self.c_mw > upper {
            return Err(Error::Infeasible { c: self.c_mw, lower, upper });
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.functions.iter().zip(x).map(|(f, &xi)| f.evaluate(xi)).sum()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        x.iter().sum::<f64>() - self.c_mw
    }

    pub fn with_c(&self, c_mw: f64) -> Self {
        ProblemInstance { c_mw, ..self.clone() }
    }
}

/// `argmin_{x in bounds} f(x) + y x`; non-increasing in `y`.
pub fn best_response(f: &Disutility, bounds: &LoadBounds, y: f64) -> Result<f64> {
    argmin_on_box(f, bounds, y, 0.0, 0.0)
}

/// Balance mismatch `phi(y) = sum_i best_response_i(y) - C`, non-increasing in `y`.
pub fn balance_mismatch(p: &ProblemInstance, y: f64) -> Result<f64> {
    let mut total = 0.0;
    for (f, b) in p.functions.iter().zip(&p.bounds) {
        total += best_response(f, b, y)?;
    }
    Ok(total - p.c_mw)
}

fn responses(p: &ProblemInstance, y: f64) -> Result<Vec<f64>> {
    p.functions.iter().zip(&p.bounds).map(|(f, b)| best_response(f, b, y)).collect()
}

const MAX_BRACKET_DOUBLINGS: usize = 64;
const MAX_BISECTIONS: usize = 2000;

/// Dual bisection. Returns once `|phi(y)| <= tol`.
pub fn solve(p: &ProblemInstance, tol: f64) -> Result<OracleSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("oracle tolerance {tol} must be positive")));
    }
    for (i, f) in p.functions.iter().enumerate() {
        if !(f.strong_convexity_modulus() > 0.0) {
            return Err(Error::NotStronglyConvex { agent: i });
        }
    }
    p.check_feasible()?;

    // |subgradient| at the box ends bounds the multiplier range where any
    // best response can be interior.
    let mut g = 1.0
        + p.functions
            .iter()
            .zip(&p.bounds)
            .flat_map(|(f, b)| {
                let (l0, l1) = f.subgradient_interval(b.lower);
                let (u0, u1) = f.subgradient_interval(b.upper);
                [l0.abs(), l1.abs(), u0.abs(), u1.abs()]
            })
            .fold(0.0, f64::max);

    let mut doublings = 0;
    let (mut lo, mut hi) = loop {
        let at_lo = balance_mismatch(p, -g)?;
        let at_hi = balance_mismatch(p, g)?;
        if at_lo >= 0.0 && at_hi <= 0.0 {
            break (-g, g);
        }
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS {
            return Err(Error::SolverFailure(format!("no sign change of the balance mismatch in [-{g}, {g}]")));
        }
        g *= 2.0;
    };

    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let x = responses(p, mid)?;
        let phi = p.residual(&x);
        if phi.abs() <= tol {
            return Ok(finish(p, x, mid));
        }
        if mid <= lo || mid >= hi {
            return Err(Error::SolverFailure(format!(
                "bracket collapsed at y = {mid} with |phi| = {} > {tol}",
                phi.abs()
            )));
        }
        if phi > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::SolverFailure(format!("no convergence after {MAX_BISECTIONS} bisections")))
}

fn finish(p: &ProblemInstance, x_star: Vec<f64>, y_star: f64) -> OracleSolution {
    let p_star = p.objective(&x_star);
    let residual = p.residual(&x_star);
    OracleSolution { x_star, y_star, p_star, residual }
}
