//! Scalar convex disutility models and the box-constrained proximal step.
//!
//! Every built-in model is piecewise quadratic with derivative `h * x` on each
//! piece, so the augmented subproblems solved by the agents have closed-form
//! minimizers per piece. The minimizer is selected by checking the optimality
//! inclusion at each candidate rather than by comparing objective values,
//! which keeps the returned point accurate to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Consumer cost of changing consumption by `x` MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disutility {
    /// `q x^2 / 2`.
    Quadratic { q: f64 },
    /// `q x^2` for `|x| <= eta`, `3 q x^2 - 2 q eta^2` beyond. Continuous and
    /// convex with kinks at `+-eta`.
    KinkedQuadratic { q: f64, eta: f64 },
    /// The kinked model with the outer offset `q * eta` in place of
    /// `2 q eta^2`. Discontinuous (hence nonconvex) unless `eta = 1/2`; kept
    /// only so the two forms can be compared side by side.
    KinkedQuadraticAsPrinted { q: f64, eta: f64 },
    /// `q_minus x^2 / 2` for `x < 0`, `q_plus x^2 / 2` for `x >= 0`.
    AsymmetricQuadratic { q_minus: f64, q_plus: f64 },
}

/// Closed interval `[lower, upper]` of admissible consumption changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadBounds {
    pub lower: f64,
    pub upper: f64,
}

impl LoadBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let bounds = LoadBounds { lower, upper };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite()) || self.lower > self.upper {
            return Err(Error::InvalidParameter(format!(
                "load bounds [{}, {}] must be finite with lower <= upper",
                self.lower, self.upper
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// One piece of a model whose derivative is `h x` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    h: f64,
}

impl Disutility {
    pub fn name(&self) -> &'static str {
        match self {
            Disutility::Quadratic { .. } => "quadratic",
            Disutility::KinkedQuadratic { .. } => "kinked_quadratic",
            Disutility::KinkedQuadraticAsPrinted { .. } => "kinked_quadratic_as_printed",
            Disutility::AsymmetricQuadratic { .. } => "asymmetric_quadratic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Disutility::Quadratic { q } => q > 0.0 && q.is_finite(),
            Disutility::KinkedQuadratic { q, eta } | Disutility::KinkedQuadraticAsPrinted { q, eta } => {
                q > 0.0 && q.is_finite() && eta >= 0.0 && eta.is_finite()
            }
            Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
                q_minus > 0.0 && q_plus > 0.0 && q_minus.is_finite() && q_plus.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid disutility {self:?}")))
        }
    }

    /// True for models that are twice continuously differentiable.
    pub fn is_smooth(&self) -> bool {
        matches!(self, Disutility::Quadratic { .. })
    }

    pub fn is_convex(&self) -> bool {
        match *self {
            Disutility::KinkedQuadraticAsPrinted { eta, .. } => as_printed_gap(eta) == 0.0,
            _ => true,
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match *self {
            Disutility::Quadratic { q } => 0.5 * q * x * x,
            Disutility::KinkedQuadratic { q, eta } => {
                if x.abs() <= eta {
                    q * x * x
                } else {
                    3.0 * q * x * x - 2.0 * q * eta * eta
                }
            }
            Disutility::KinkedQuadraticAsPrinted { q, eta } => {
                if x.abs() <= eta {
                    q * x * x
                } else {
                    3.0 * q * x * x - q * eta
                }
            }
            Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
                if x < 0.0 {
                    0.5 * q_minus * x * x
                } else {
                    0.5 * q_plus * x * x
                }
            }
        }
    }

    /// Subdifferential `[g_lo, g_hi]` at `x`. For the as-printed kinked model
    /// this is the pair of one-sided piece derivatives, not a true
    /// subdifferential.
    pub fn subgradient_interval(&self, x: f64) -> (f64, f64) {
        match *self {
            Disutility::Quadratic { q } => (q * x, q * x),
            Disutility::KinkedQuadratic { q, eta } | Disutility::KinkedQuadraticAsPrinted { q, eta } => {
                let inner = 2.0 * q * x;
                let outer = 6.0 * q * x;
                if x.abs() < eta {
                    (inner, inner)
                } else if x.abs() > eta {
                    (outer, outer)
                } else if x > 0.0 {
                    (inner, outer)
                } else if x < 0.0 {
                    (outer, inner)
                } else {
                    (0.0, 0.0)
                }
            }
            Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
                if x < 0.0 {
                    (q_minus * x, q_minus * x)
                } else if x > 0.0 {
                    (q_plus * x, q_plus * x)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    /// Largest `m` such that `f(x) - m x^2 / 2` is convex.
    pub fn strong_convexity_modulus(&self) -> f64 {
        match *self {
            Disutility::Quadratic { q } => q,
            Disutility::KinkedQuadratic { q, .. } => 2.0 * q,
            Disutility::KinkedQuadraticAsPrinted { q, eta } => {
                if as_printed_gap(eta) == 0.0 {
                    2.0 * q
                } else {
                    0.0
                }
            }
            Disutility::AsymmetricQuadratic { q_minus, q_plus } => q_minus.min(q_plus),
        }
    }

    /// Pieces in increasing order; unused trailing slots are `None`.
    fn pieces(&self) -> [Option<Piece>; 3] {
        const INF: f64 = f64::INFINITY;
        match *self {
            Disutility::Quadratic { q } => [Some(Piece { lo: -INF, hi: INF, h: q }), None, None],
            Disutility::KinkedQuadratic { q, eta } | Disutility::KinkedQuadraticAsPrinted { q, eta } => [
                Some(Piece { lo: -INF, hi: -eta, h: 6.0 * q }),
                Some(Piece { lo: -eta, hi: eta, h: 2.0 * q }),
                Some(Piece { lo: eta, hi: INF, h: 6.0 * q }),
            ],
            Disutility::AsymmetricQuadratic { q_minus, q_plus } => {
                [Some(Piece { lo: -INF, hi: 0.0, h: q_minus }), Some(Piece { lo: 0.0, hi: INF, h: q_plus }), None]
            }
        }
    }
}

fn as_printed_gap(eta: f64) -> f64 {
    2.0 * eta * eta - eta
}

/// Minimizes `f(x) + linear * x + weight/2 * (x - center)^2` over `bounds`.
///
/// Requires `weight >= 0`; with `weight == 0` the disutility itself must be
/// strongly convex for the minimizer to be unique.
pub fn argmin_on_box(f: &Disutility, bounds: &LoadBounds, linear: f64, weight: f64, center: f64) -> Result<f64> {
    if !(weight >= 0.0 && weight.is_finite() && linear.is_finite() && center.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "argmin_on_box: weight {weight}, linear {linear}, center {center}"
        )));
    }
    let (a, b) = (bounds.lower, bounds.upper);
    if a == b {
        return Ok(a);
    }

    let mut best: Option<(f64, f64)> = None;
    let convex = f.is_convex();
    for piece in f.pieces().into_iter().flatten() {
        let lo = piece.lo.max(a);
        let hi = piece.hi.min(b);
        if lo > hi {
            continue;
        }
        let curvature = piece.h + weight;
        let candidates: [f64; 2] = if curvature > 0.0 {
            let stationary = (weight * center - linear) / curvature;
            let x = stationary.clamp(lo, hi);
            [x, x]
        } else {
            [lo, hi]
        };
        for x in candidates {
            let score = if convex {
                optimality_violation(f, bounds, linear, weight, center, x)
            } else {
                f.evaluate(x) + linear * x + 0.5 * weight * (x - center) * (x - center)
            };
            if best.is_none_or(|(_, s)| score < s) {
                best = Some((x, score));
            }
        }
    }

    let (x, score) = best.ok_or_else(|| Error::SolverFailure("no candidate in box".into()))?;
    if convex {
        let (g_lo, g_hi) = f.subgradient_interval(x);
        let scale = 1.0 + g_lo.abs().max(g_hi.abs()) + linear.abs() + weight * (x.abs() + center.abs());
        if score > 1e-9 * scale {
            // closed form disagreed with the optimality check; use the slow path
            return argmin_by_bisection(f, bounds, linear, weight, center);
        }
    }
    Ok(x)
}

/// Size by which `0 in df(x) + linear + weight (x - center) + N(x)` fails.
fn optimality_violation(f: &Disutility, bounds: &LoadBounds, linear: f64, weight: f64, center: f64, x: f64) -> f64 {
    let (g_lo, g_hi) = f.subgradient_interval(x);
    let smooth = linear + weight * (x - center);
    let lo = g_lo + smooth;
    let hi = g_hi + smooth;
    let mut v = 0.0;
    if x > bounds.lower {
        v += lo.max(0.0);
    }
    if x < bounds.upper {
        v += (-hi).max(0.0);
    }
    v
}

/// Bisection on the monotone subdifferential of the subproblem. Works for any
/// convex model that reports a correct `subgradient_interval`.
pub fn argmin_by_bisection(f: &Disutility, bounds: &LoadBounds, linear: f64, weight: f64, center: f64) -> Result<f64> {
    const MAX_ITER: usize = 400;
    let derivs = |x: f64| {
        let (g_lo, g_hi) = f.subgradient_interval(x);
        let s = linear + weight * (x - center);
        (g_lo + s, g_hi + s)
    };
    let (mut lo, mut hi) = (bounds.lower, bounds.upper);
    if derivs(lo).1 >= 0.0 {
        return Ok(lo);
    }
    if derivs(hi).0 <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let (d_lo, d_hi) = derivs(mid);
        if d_lo > 0.0 {
            hi = mid;
        } else if d_hi < 0.0 {
            lo = mid;
        } else {
            return Ok(mid);
        }
    }
    Err(Error::SolverFailure(format!(
        "subgradient bisection did not converge in {MAX_ITER} iterations on [{lo}, {hi}]"
    )))
}

/// Solves `argmin_{x in bounds} f(x) + y x + rho/2 (x - c)^2`.
pub fn prox_step(f: &Disutility, bounds: &LoadBounds, y: f64, rho: f64, c: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("prox_step: rho = {rho} must be positive")));
    }
    argmin_on_box(f, bounds, y, rho, c)
}
