use rayon::prelude::*;

use crate::algorithms::{
    dm_admm_step, dual_ascent_step, ensure_dual_supported, lyapunov_from_parts, pj_admm_step, pj_dual_update,
    strong_convexity_xi, AgentState,
};
use crate::comm::CommGraph;
use crate::error::Result;
use crate::estimator::EstimatorState;
use crate::grid::{grid_step, measure_frequency, scheduled_generation, GridModel, GridState, NoiseSource};
use crate::oracle::{self, OracleSolution};

use super::config::{build_instance, Algorithm, ScenarioConfig};
use super::trace::{Trace, TraceRecord};

/// Oracle tolerance used for the per-segment Lyapunov reference points.
const DIAGNOSTIC_ORACLE_TOL: f64 = 1e-12;

/// Runs one Jacobi round: every agent steps from the same snapshot.
///
/// `duals` and `residuals` are the (possibly neighbour-averaged) values each
/// agent uses in place of its own dual and residual estimate.
pub fn jacobi_round(
    agents: &mut [AgentState],
    algorithm: &Algorithm,
    duals: &[f64],
    residuals: &[f64],
    parallel: bool,
) -> Result<()> {
    let update = |(agent, (&y, &r)): (&mut AgentState, (&f64, &f64))| -> Result<()> {
        let current = AgentState { y, ..*agent };
        *agent = match algorithm {
            Algorithm::DmAdmm(p) => dm_admm_step(&current, r, p)?,
            Algorithm::PjAdmm(p) => pj_admm_step(&pj_dual_update(&current, r, p), r, p)?,
            Algorithm::DualAscent(p) => dual_ascent_step(&current, r, p)?,
            Algorithm::None => current,
        };
        Ok(())
    };
    let inputs = duals.iter().zip(residuals);
    if parallel {
        agents.par_iter_mut().zip(inputs.collect::<Vec<_>>()).try_for_each(update)
    } else {
        agents.iter_mut().zip(inputs).try_for_each(update)
    }
}

/// Oracle solutions per schedule segment, available when the run matches the
/// setting of the Lyapunov certificate: noiseless DM-ADMM without averaging.
struct Diagnostics {
    rho: f64,
    xi: f64,
    per_segment: Vec<OracleSolution>,
}

fn diagnostics(cfg: &ScenarioConfig, algorithm: &Algorithm, problem: &oracle::ProblemInstance) -> Option<Diagnostics> {
    let Algorithm::DmAdmm(p) = algorithm else { return None };
    if cfg.noise || cfg.comm != CommGraph::None {
        return None;
    }
    let xi = strong_convexity_xi(problem).ok()?;
    let per_segment = cfg
        .schedule
        .balance_constants()
        .into_iter()
        .map(|c| oracle::solve(&problem.with_c(c), DIAGNOSTIC_ORACLE_TOL).ok())
        .collect::<Option<Vec<_>>>()?;
    Some(Diagnostics { rho: p.rho, xi, per_segment })
}

/// Closed-loop simulation of grid, estimators, optional communication and
/// agents over `cfg.horizon_s`.
///
/// Configuration and compatibility errors are returned before any step is
/// taken. A failure during the run stops the simulation and is reported in
/// [`Trace::failure`] alongside the records produced so far.
pub fn run_closed_loop(cfg: &ScenarioConfig) -> Result<Trace> {
    let built = build_instance(cfg)?;
    let n = cfg.n_loads;
    let algorithm = cfg.algorithm.resolve(n)?;
    if let Algorithm::DualAscent(_) = algorithm {
        for a in &built.agents {
            ensure_dual_supported(a.id, &a.f)?;
        }
    }
    let model = GridModel::new(cfg.grid)?;
    let mut estimators = (0..n).map(|i| EstimatorState::new(i, model, cfg.estimator)).collect::<Result<Vec<_>>>()?;
    let mut noise = NoiseSource::new(cfg.seed, n, &cfg.grid, cfg.noise)?;
    let diag = diagnostics(cfg, &algorithm, &built.problem);

    let problem = built.problem;
    let mut agents = built.agents;
    let steps = cfg.steps();
    let dt = cfg.grid.dt_s;
    let g0 = cfg.schedule.nominal();
    let mut trace = Trace {
        algorithm: cfg.algorithm.kind.name().to_string(),
        dt_s: dt,
        nominal_frequency_hz: cfg.grid.nominal_frequency_hz,
        schedule: cfg.schedule.clone(),
        records: Vec::with_capacity(steps + 1),
        failure: None,
    };

    let mut state = GridState::default();
    let mut deltas = vec![0.0; n];
    noise.measurement(&mut deltas);
    for (est, &d) in estimators.iter_mut().zip(&deltas) {
        est.estimate_residual(measure_frequency(&state, &cfg.grid, d));
    }

    for k in 0..=steps {
        let t = k as f64 * dt;
        let segment = cfg.schedule.segment(t);
        let g = scheduled_generation(&cfg.schedule, t);
        let c = g0 - g;
        let x: Vec<f64> = agents.iter().map(|a| a.x).collect();
        let sum_x: f64 = x.iter().sum();
        let r = sum_x - c;
        let v_lyap = match &diag {
            Some(d) => match agents.first() {
                // all duals coincide in this setting; y^{k+1} = y^k + rho r^k
                Some(a0) => lyapunov_from_parts(&x, a0.y + d.rho * r, &d.per_segment[segment], d.rho, d.xi),
                None => f64::NAN,
            },
            None => f64::NAN,
        };
        trace.records.push(TraceRecord {
            k: k as u64,
            t_s: t,
            omega_hz: cfg.grid.nominal_frequency_hz + state.delta_omega,
            delta_omega_hz: state.delta_omega,
            g_mw: g,
            sum_x_mw: sum_x,
            r_mw: r,
            p_obj: problem.objective(&x),
            v_lyap,
            r_hat_mean: f64::NAN,
            r_hat_min: f64::NAN,
            r_hat_max: f64::NAN,
            r_hat_max_abs_error: f64::NAN,
            x: cfg.record_agents.then(|| x.clone()),
            r_hat: None,
        });
        if k == steps {
            break;
        }

        let zeta = noise.process();
        state = grid_step(&state, &model, sum_x, g, g0, zeta);
        noise.measurement(&mut deltas);
        let measure = |(est, d): (&mut EstimatorState, &f64)| {
            est.estimate_residual(measure_frequency(&state, &cfg.grid, *d)).value
        };
        let r_hats: Vec<f64> = if cfg.parallel {
            estimators.par_iter_mut().zip(deltas.par_iter()).map(measure).collect()
        } else {
            estimators.iter_mut().zip(deltas.iter()).map(measure).collect()
        };

        let record = trace.records.last_mut().expect("pushed above");
        record.r_hat_mean = r_hats.iter().sum::<f64>() / n as f64;
        record.r_hat_min = r_hats.iter().copied().fold(f64::INFINITY, f64::min);
        record.r_hat_max = r_hats.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        record.r_hat_max_abs_error = r_hats.iter().map(|v| (v - r).abs()).fold(0.0, f64::max);
        if cfg.record_agents {
            record.r_hat = Some(r_hats.clone());
        }

        let own_duals: Vec<f64> = agents.iter().map(|a| a.y).collect();
        let (duals, residuals) = match algorithm {
            // the comparator only shares residual estimates
            Algorithm::DualAscent(_) => (own_duals, cfg.comm.average_all(&r_hats)),
            _ => (cfg.comm.average_all(&own_duals), cfg.comm.average_all(&r_hats)),
        };
        if let Err(e) = jacobi_round(&mut agents, &algorithm, &duals, &residuals, cfg.parallel) {
            trace.failure = Some(format!("step {k}: {e}"));
            return Ok(trace);
        }
    }
    Ok(trace)
}
