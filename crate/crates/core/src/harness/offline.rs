//! Offline DM-ADMM driver: exact residuals, no grid in the loop, and every
//! inequality of the convergence certificate checked along the trajectory.

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    common_dual, dm_admm_step, lyapunov_from_parts, objective_gap_slack, squared_distance, step_size_bound,
    strong_convexity_xi, AgentState, DmAdmmParams,
};
use crate::error::{Error, Result};
use crate::oracle::{self, OracleSolution, ProblemInstance};

use super::config::{build_instance, OfflineConfig, ScenarioConfig};

/// Numerical slack allowed on each certificate inequality.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

/// Balance tolerance of the reference point the certificate is checked
/// against. The inequalities are exact only at the true optimum, and an
/// error of `tol` in `x*` shifts them by roughly `|y*| tol`.
pub const CERTIFICATE_ORACLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineOptions {
    pub rho: f64,
    pub initial_dual: f64,
    pub max_iterations: usize,
    pub residual_tol: f64,
    pub iterate_tol: f64,
    pub objective_tol: f64,
    pub oracle_tol: f64,
    /// Stop as soon as all three tolerances hold.
    pub stop_on_convergence: bool,
    /// Keep per-iteration histories in the report.
    pub keep_history: bool,
    /// Band of `|x - x*|` used for the linear-rate fit.
    pub rate_band: (f64, f64),
}

impl OfflineOptions {
    pub fn new(rho: f64, cfg: &OfflineConfig) -> Self {
        OfflineOptions {
            rho,
            initial_dual: 0.0,
            max_iterations: cfg.max_iterations,
            residual_tol: cfg.residual_tol_mw,
            iterate_tol: cfg.iterate_tol_mw,
            objective_tol: cfg.objective_tol,
            oracle_tol: cfg.oracle_tol_mw,
            stop_on_convergence: true,
            keep_history: false,
            rate_band: (1e-9, 1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub residual: Vec<f64>,
    pub iterate_error: Vec<f64>,
    pub objective_gap: Vec<f64>,
    pub lyapunov: Vec<f64>,
    /// Per-agent consumption at each iterate.
    pub x: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n: usize,
    pub rho: f64,
    pub xi: f64,
    pub rho_max: f64,
    /// Whether `rho <= rho_max`, i.e. the Lyapunov decrease is guaranteed.
    pub step_condition_satisfied: bool,
    pub iterations: usize,
    pub iterations_to_residual_tol: Option<usize>,
    /// First iteration where residual, iterate and objective tolerances all hold.
    pub converged_at: Option<usize>,
    pub final_residual: f64,
    pub final_iterate_error: f64,
    pub final_objective_gap: f64,
    /// `min_k (V^k - V^{k+1} - rho (r^k)^2)`.
    pub min_lyapunov_margin: f64,
    pub lyapunov_ok: bool,
    /// Smallest slack of the objective-gap bound over all iterations.
    pub min_objective_bound_slack: f64,
    pub objective_bound_ok: bool,
    pub max_dual_disagreement: f64,
    pub dual_consensus_ok: bool,
    pub rate: Option<RateFit>,
    pub oracle: OracleSolution,
    pub history: Option<History>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    /// Errors when an invariant that the configuration guarantees failed.
    pub fn check(&self) -> Result<()> {
        if !self.dual_consensus_ok {
            return Err(Error::InvariantViolation(format!("dual values diverged by {}", self.max_dual_disagreement)));
        }
        if !self.objective_bound_ok {
            return Err(Error::InvariantViolation(format!(
                "objective-gap bound violated with slack {}",
                self.min_objective_bound_slack
            )));
        }
        if self.step_condition_satisfied && !self.lyapunov_ok {
            return Err(Error::InvariantViolation(format!(
                "Lyapunov decrease violated with margin {} at rho = {} <= {}",
                self.min_lyapunov_margin, self.rho, self.rho_max
            )));
        }
        Ok(())
    }
}

/// Builds the instance from `cfg` and runs [`run_offline_instance`] with the
/// configured penalty and residual tolerance `tol`.
pub fn run_offline(cfg: &ScenarioConfig, tol: f64) -> Result<ConvergenceReport> {
    let built = build_instance(cfg)?;
    let mut opts = OfflineOptions::new(cfg.algorithm.rho, &cfg.offline);
    opts.residual_tol = tol;
    opts.initial_dual = cfg.algorithm.initial_dual;
    let report = run_offline_instance(&built.problem, &opts)?;
    report.check()?;
    Ok(report)
}

/// Iterates the DM-ADMM update with exact residuals from `x = 0` and a common
/// initial dual, comparing against the dual-bisection solution.
pub fn run_offline_instance(problem: &ProblemInstance, opts: &OfflineOptions) -> Result<ConvergenceReport> {
    let params = DmAdmmParams { rho: opts.rho };
    params.validate()?;
    let sol = oracle::solve(problem, opts.oracle_tol)?;
    let reference = if opts.oracle_tol > CERTIFICATE_ORACLE_TOL {
        oracle::solve(problem, CERTIFICATE_ORACLE_TOL)?
    } else {
        sol.clone()
    };
    let xi = strong_convexity_xi(problem)?;
    let n = problem.n();
    let rho = opts.rho;
    let rho_max = step_size_bound(xi, n);
    let step_ok = rho <= rho_max;

    let mut agents: Vec<AgentState> = problem
        .functions
        .iter()
        .zip(&problem.bounds)
        .enumerate()
        .map(|(i, (f, b))| AgentState { y: opts.initial_dual, ..AgentState::new(i, *f, *b) })
        .collect();

    let mut x: Vec<f64> = agents.iter().map(|a| a.x).collect();
    let mut r = problem.residual(&x);
    // dual one update ahead of x, as paired in the Lyapunov function
    let y_ahead = opts.initial_dual + rho * r;
    let mut v = lyapunov_from_parts(&x, y_ahead, &reference, rho, xi);

    let mut history = opts.keep_history.then(History::default);
    let record = |h: &mut Option<History>, x: &[f64], r: f64, v: f64| {
        if let Some(h) = h {
            h.residual.push(r);
            h.iterate_error.push(squared_distance(x, &sol.x_star).sqrt());
            h.objective_gap.push(problem.objective(x) - sol.p_star);
            h.lyapunov.push(v);
            h.x.push(x.to_vec());
        }
    };
    record(&mut history, &x, r, v);

    let mut errors: Vec<f64> = vec![squared_distance(&x, &sol.x_star).sqrt()];
    let mut min_margin = f64::INFINITY;
    let mut min_slack = f64::INFINITY;
    let mut max_disagreement: f64 = 0.0;
    let mut to_residual_tol = (r.abs() <= opts.residual_tol).then_some(0);
    let mut converged_at = None;
    let mut iterations = 0;

    for k in 0..opts.max_iterations {
        for agent in agents.iter_mut() {
            *agent = dm_admm_step(agent, r, &params)?;
        }
        iterations = k + 1;
        let y_now = match common_dual(&agents) {
            Ok(y) => y,
            Err(_) => agents[0].y,
        };
        let spread = agents.iter().map(|a| (a.y - y_now).abs()).fold(0.0, f64::max);
        max_disagreement = max_disagreement.max(spread);

        let x_next: Vec<f64> = agents.iter().map(|a| a.x).collect();
        let r_next = problem.residual(&x_next);
        let y_after = y_now + rho * r_next;

        min_slack = min_slack.min(objective_gap_slack(problem, &reference, &x, &x_next, y_after, rho));
        let v_next = lyapunov_from_parts(&x_next, y_after, &reference, rho, xi);
        min_margin = min_margin.min(v - v_next - rho * r * r);

        x = x_next;
        r = r_next;
        v = v_next;
        record(&mut history, &x, r, v);

        let err = squared_distance(&x, &sol.x_star).sqrt();
        errors.push(err);
        let gap = (problem.objective(&x) - sol.p_star).abs();
        if to_residual_tol.is_none() && r.abs() <= opts.residual_tol {
            to_residual_tol = Some(iterations);
        }
        if converged_at.is_none()
            && r.abs() <= opts.residual_tol
            && err <= opts.iterate_tol
            && gap <= opts.objective_tol
        {
            converged_at = Some(iterations);
            if opts.stop_on_convergence {
                break;
            }
        }
        if !r.is_finite() {
            break;
        }
    }

    Ok(ConvergenceReport {
        n,
        rho,
        xi,
        rho_max,
        step_condition_satisfied: step_ok,
        iterations,
        iterations_to_residual_tol: to_residual_tol,
        converged_at,
        final_residual: r,
        final_iterate_error: *errors.last().expect("initial error recorded"),
        final_objective_gap: problem.objective(&x) - sol.p_star,
        min_lyapunov_margin: min_margin,
        lyapunov_ok: min_margin >= -CERTIFICATE_SLACK,
        min_objective_bound_slack: min_slack,
        objective_bound_ok: min_slack >= -CERTIFICATE_SLACK,
        max_dual_disagreement: max_disagreement,
        dual_consensus_ok: max_disagreement == 0.0,
        rate: fit_linear_rate(&errors, opts.rate_band),
        oracle: sol,
        history,
    })
}

/// Least-squares fit of `ln e_k` against `k` over the iterations after the
/// error first drops below `band.1`, up to the last one still above `band.0`.
pub fn fit_linear_rate(errors: &[f64], band: (f64, f64)) -> Option<RateFit> {
    let (floor, ceiling) = band;
    let start = errors.iter().position(|&e| e <= ceiling)?;
    let end = errors.iter().rposition(|&e| e >= floor)?;
    if end <= start + 2 {
        return None;
    }
    let points: Vec<(f64, f64)> =
        (start..=end).filter(|&k| errors[k] > 0.0).map(|k| (k as f64, errors[k].ln())).collect();
    let m = points.len() as f64;
    if m < 3.0 {
        return None;
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(RateFit { slope, r_squared, samples: points.len() })
}
