//! Local estimation of the primal residual from frequency readings.
//!
//! Each load knows the grid model and its own measurement history. One step
//! of the frequency equation is inverted for the external mismatch
//!
//! ```text
//! w^{k-1} = (dw^k - phi00 dw^{k-1} - phi01 p_gov^{k-1}) / gamma0
//! ```
//!
//! where the governor output is reconstructed by running the (publicly known)
//! governor model on the same readings. With `w = sum_i x_i - C + zeta`, the
//! result is the residual of the previous step plus the process disturbance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualEstimate {
    /// Estimated `sum_i x_i - C` in MW.
    pub value: f64,
    /// Time index the estimate refers to.
    pub k_ref: u64,
    pub agent: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorOptions {
    /// Weight of the newest reading in exponential pre-smoothing; 1 disables it.
    pub smoothing: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions { smoothing: 1.0 }
    }
}

/// Per-load estimator memory. Holds nothing about other loads.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    agent: usize,
    model: GridModel,
    options: EstimatorOptions,
    prev_deviation: Option<f64>,
    p_gov_hat: f64,
    k: u64,
}

impl EstimatorState {
    pub fn new(agent: usize, model: GridModel, options: EstimatorOptions) -> Result<Self> {
        if !(model.gamma[0] != 0.0 && model.gamma[0].is_finite()) {
            return Err(Error::Config("grid model is not invertible for the mismatch input".into()));
        }
        if !(options.smoothing > 0.0 && options.smoothing <= 1.0) {
            return Err(Error::Config(format!("estimator smoothing {} must lie in (0, 1]", options.smoothing)));
        }
        Ok(EstimatorState { agent, model, options, prev_deviation: None, p_gov_hat: 0.0, k: 0 })
    }

    /// Governor output the estimator attributes to the step being inverted.
    pub fn governor_contribution(&self) -> f64 {
        self.p_gov_hat
    }

    /// Consumes the reading taken at the current index and returns the
    /// residual of the previous index. The first reading only primes the
    /// buffer and yields zero.
    pub fn estimate_residual(&mut self, omega_hat: f64) -> ResidualEstimate {
        let raw = omega_hat - self.model.params.nominal_frequency_hz;
        let k = self.k;
        self.k += 1;
        let Some(prev) = self.prev_deviation else {
            self.prev_deviation = Some(raw);
            return ResidualEstimate { value: 0.0, k_ref: k.saturating_sub(1), agent: self.agent };
        };
        let alpha = self.options.smoothing;
        let now = if alpha < 1.0 { alpha * raw + (1.0 - alpha) * prev } else { raw };

        let (phi, gamma) = (&self.model.phi, &self.model.gamma);
        let w = (now - phi[0][0] * prev - phi[0][1] * self.p_gov_hat) / gamma[0];
        self.p_gov_hat = phi[1][0] * prev + phi[1][1] * self.p_gov_hat + gamma[1] * w;
        self.prev_deviation = Some(now);
        ResidualEstimate { value: w, k_ref: k - 1, agent: self.agent }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{grid_step, measure_frequency, Discretization, GridParams, GridState};

    fn model(d: Discretization) -> GridModel {
        GridModel::new(GridParams { discretization: d, ..Default::default() }).unwrap()
    }

    #[test]
    fn first_reading_primes_buffer() {
        let mut e = EstimatorState::new(3, model(Discretization::Euler), Default::default()).unwrap();
        let first = e.estimate_residual(60.0);
        assert_eq!(first.value, 0.0);
        assert_eq!(first.agent, 3);
        let second = e.estimate_residual(60.0);
        assert_eq!(second.value, 0.0);
        assert_eq!(second.k_ref, 0);
        assert_eq!(e.governor_contribution(), 0.0);
    }

    #[test]
    fn recovers_mismatch_through_transient() {
        for d in [Discretization::Euler, Discretization::ExactZoh] {
            let m = model(d);
            let mut e = EstimatorState::new(0, m, Default::default()).unwrap();
            let mut s = GridState::default();
            e.estimate_residual(measure_frequency(&s, &m.params, 0.0));
            for k in 0..2000u64 {
                let load = 6.0 * (1.0 - (-(k as f64) / 40.0).exp());
                let g = if k < 100 { 200.0 } else { 190.0 };
                let truth = load - (200.0 - g);
                s = grid_step(&s, &m, load, g, 200.0, 0.0);
                let est = e.estimate_residual(measure_frequency(&s, &m.params, 0.0));
                assert_eq!(est.k_ref, k);
                assert!((est.value - truth).abs() < 1e-10, "{d:?} k={k}: {} vs {truth}", est.value);
                assert!((e.governor_contribution() - s.p_gov).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn governor_contribution_tracks_droop_steady_state() {
        let m = model(Discretization::Euler);
        let mut e = EstimatorState::new(0, m, Default::default()).unwrap();
        let mut s = GridState::default();
        e.estimate_residual(measure_frequency(&s, &m.params, 0.0));
        for _ in 0..5000 {
            s = grid_step(&s, &m, 0.0, 190.0, 200.0, 0.0);
            e.estimate_residual(measure_frequency(&s, &m.params, 0.0));
        }
        let p = m.params;
        let dw = -10.0 / (p.damping_mw_s + 1.0 / p.droop);
        assert!((e.governor_contribution() + dw / p.droop).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_smoothing() {
        let m = model(Discretization::Euler);
        assert!(EstimatorState::new(0, m, EstimatorOptions { smoothing: 0.0 }).is_err());
        assert!(EstimatorState::new(0, m, EstimatorOptions { smoothing: 1.5 }).is_err());
    }
}
