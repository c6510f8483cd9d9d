//! Per-agent update rules and the convergence certificate quantities.
//!
//! All three rules share one step structure: the agent receives a residual
//! value `r_hat` (its local view of `sum_j x_j - C`), optionally updates its
//! dual price, then solves a scalar subproblem over its own bounds.

use serde::{Deserialize, Serialize};

use crate::disutility::{argmin_on_box, prox_step, Disutility, LoadBounds};
use crate::error::{Error, Result};
use crate::oracle::{best_response, OracleSolution, ProblemInstance};

/// Dual values of different agents are treated as equal within this bound.
pub const DUAL_CONSENSUS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    /// Consumption change in MW.
    pub x: f64,
    /// Dual price.
    pub y: f64,
    pub bounds: LoadBounds,
    pub f: Disutility,
}

impl AgentState {
    pub fn new(id: usize, f: Disutility, bounds: LoadBounds) -> Self {
        AgentState { id, x: 0.0, y: 0.0, bounds, f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmAdmmParams {
    pub rho: f64,
}

impl DmAdmmParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho > 0.0 && self.rho.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("DM-ADMM rho = {}", self.rho)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PjAdmmParams {
    pub rho: f64,
    /// Proximal weight on `(x - x_prev)^2 / 2`.
    pub tau: f64,
    /// Dual damping factor in `(0, 2)`.
    pub gamma: f64,
}

impl PjAdmmParams {
    /// `tau = rho (n - 1)`, `gamma = 1/2`.
    pub fn with_defaults(rho: f64, n: usize) -> Self {
        PjAdmmParams { rho, tau: rho * (n.saturating_sub(1)) as f64, gamma: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.rho.is_finite()
            && self.tau >= 0.0
            && self.tau.is_finite()
            && self.gamma > 0.0
            && self.gamma < 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("PJ-ADMM parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualAscentParams {
    pub gamma: f64,
}

impl DualAscentParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("dual-ascent gamma = {}", self.gamma)))
        }
    }
}

/// DM-ADMM agent update:
///
/// ```text
/// y' = y + rho r_hat
/// x' = argmin_{a <= x <= b} f(x) + y' (x + r_hat - x_prev) + rho/2 (x + r_hat - x_prev)^2
/// ```
pub fn dm_admm_step(agent: &AgentState, r_hat: f64, params: &DmAdmmParams) -> Result<AgentState> {
    let y = agent.y + params.rho * r_hat;
    let x = prox_step(&agent.f, &agent.bounds, y, params.rho, agent.x - r_hat)?;
    Ok(AgentState { x, y, ..*agent })
}

/// PJ-ADMM primal update. The dual is left untouched; see [`pj_dual_update`].
///
/// ```text
/// x' = argmin f(x) + y (x - x_prev + r_hat) + rho/2 (x - x_prev + r_hat)^2 + tau/2 (x - x_prev)^2
/// ```
pub fn pj_admm_step(agent: &AgentState, r_hat: f64, params: &PjAdmmParams) -> Result<AgentState> {
    let weight = params.rho + params.tau;
    // the two quadratic terms merge into one centred at a weighted mean
    let center = (params.rho * (agent.x - r_hat) + params.tau * agent.x) / weight;
    let x = argmin_on_box(&agent.f, &agent.bounds, agent.y, weight, center)?;
    Ok(AgentState { x, ..*agent })
}

/// PJ-ADMM damped dual update `y' = y + gamma rho r_hat`, applied with the
/// residual observed after every agent finished its primal update.
pub fn pj_dual_update(agent: &AgentState, r_hat: f64, params: &PjAdmmParams) -> AgentState {
    AgentState { y: agent.y + params.gamma * params.rho * r_hat, ..*agent }
}

/// Dual-ascent comparator: `y' = y + gamma r_hat`, `x' = best_response(y')`.
/// Only defined for smooth disutilities.
pub fn dual_ascent_step(agent: &AgentState, r_hat: f64, params: &DualAscentParams) -> Result<AgentState> {
    ensure_dual_supported(agent.id, &agent.f)?;
    let y = agent.y + params.gamma * r_hat;
    let x = best_response(&agent.f, &agent.bounds, y)?;
    Ok(AgentState { x, y, ..*agent })
}

pub fn ensure_dual_supported(agent: usize, f: &Disutility) -> Result<()> {
    if f.is_smooth() {
        Ok(())
    } else {
        Err(Error::UnsupportedDisutility { agent, kind: f.name() })
    }
}

/// Largest penalty for which the Lyapunov decrease is guaranteed:
/// `xi / (2 (n - 1))`, or `+inf` for a single load.
pub fn step_size_bound(xi: f64, n: usize) -> f64 {
    if n <= 1 {
        f64::INFINITY
    } else {
        xi / (2.0 * (n - 1) as f64)
    }
}

/// Constant `xi` with `L0(x*, y*) <= L0(x, y*) - xi |x - x*|^2`: half the
/// smallest strong-convexity modulus over the loads.
pub fn strong_convexity_xi(p: &ProblemInstance) -> Result<f64> {
    let mut m = f64::INFINITY;
    for (i, f) in p.functions.iter().enumerate() {
        let mi = f.strong_convexity_modulus();
        if !(mi > 0.0) {
            return Err(Error::NotStronglyConvex { agent: i });
        }
        m = m.min(mi);
    }
    Ok(0.5 * m)
}

/// Common dual value, or an error if the agents disagree.
pub fn common_dual(agents: &[AgentState]) -> Result<f64> {
    let first = agents.first().ok_or_else(|| Error::InvalidParameter("no agents".into()))?.y;
    for a in agents {
        if (a.y - first).abs() > DUAL_CONSENSUS_TOL {
            return Err(Error::AssumptionViolation(format!(
                "dual values differ: agent {} has {} vs {first}",
                a.id, a.y
            )));
        }
    }
    Ok(first)
}

/// Lyapunov value `(1/rho)(y - y*)^2 + (rho + xi) |x - x*|^2`.
///
/// `agents` must carry the dual one update ahead of the primal, i.e. the pair
/// `(x^k, y^{k+1})`.
pub fn lyapunov_value(agents: &[AgentState], sol: &OracleSolution, rho: f64, xi: f64) -> Result<f64> {
    let y = common_dual(agents)?;
    let x: Vec<f64> = agents.iter().map(|a| a.x).collect();
    Ok(lyapunov_from_parts(&x, y, sol, rho, xi))
}

pub fn lyapunov_from_parts(x: &[f64], y_ahead: f64, sol: &OracleSolution, rho: f64, xi: f64) -> f64 {
    let dy = y_ahead - sol.y_star;
    dy * dy / rho + (rho + xi) * squared_distance(x, &sol.x_star)
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Right-hand side minus left-hand side of the objective-gap bound
///
/// ```text
/// p^{k+1} - p* <= -y^{k+2} r^{k+1} - rho (r^k - r^{k+1}) r^{k+1}
///                 - rho sum_i (x_i^k - x_i^{k+1}) (x_i* - x_i^{k+1})
/// ```
///
/// Non-negative whenever the bound holds.
pub fn objective_gap_slack(
    p: &ProblemInstance,
    sol: &OracleSolution,
    x_prev: &[f64],
    x_next: &[f64],
    y_after_next: f64,
    rho: f64,
) -> f64 {
    let r_prev = p.residual(x_prev);
    let r_next = p.residual(x_next);
    let lhs = p.objective(x_next) - sol.p_star;
    let cross: f64 = x_prev.iter().zip(x_next).zip(&sol.x_star).map(|((xp, xn), xs)| (xp - xn) * (xs - xn)).sum();
    let rhs = -y_after_next * r_next - rho * (r_prev - r_next) * r_next - rho * cross;
    rhs - lhs
}
