//! Single-machine micro-grid: swing equation plus a first-order governor.
//!
//! Continuous-time model with state `z = (dw, p_gov)` and external mismatch
//! `w = (g - g0) + sum_i x_i + zeta` (MW):
//!
//! ```text
//! M d(dw)/dt    = -D dw + p_gov + w
//! T_g d(p_gov)/dt = -p_gov - dw / R
//! ```
//!
//! A generation deficit (`g < g0`) drives `dw` negative; load reductions
//! (`x_i > 0`) push it back. The model is discretized at `dt_s` either by
//! forward Euler or by an exact zero-order hold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    #[default]
    Euler,
    ExactZoh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    pub dt_s: f64,
    pub inertia_mw_s2: f64,
    pub damping_mw_s: f64,
    /// Governor droop R; steady governor output is `-dw / R`.
    pub droop: f64,
    pub governor_time_constant_s: f64,
    pub nominal_frequency_hz: f64,
    pub process_noise_std_mw: f64,
    pub measurement_noise_std_hz: f64,
    pub discretization: Discretization,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            dt_s: 0.1,
            inertia_mw_s2: 10.0,
            damping_mw_s: 1.0,
            droop: 0.05,
            governor_time_constant_s: 5.0,
            nominal_frequency_hz: 60.0,
            process_noise_std_mw: 0.1,
            measurement_noise_std_hz: 1e-3,
            discretization: Discretization::Euler,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_s", self.dt_s),
            ("inertia_mw_s2", self.inertia_mw_s2),
            ("damping_mw_s", self.damping_mw_s),
            ("droop", self.droop),
            ("governor_time_constant_s", self.governor_time_constant_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("grid {name} = {v} must be positive")));
            }
        }
        if !self.nominal_frequency_hz.is_finite() {
            return Err(Error::Config("nominal frequency must be finite".into()));
        }
        for (name, v) in [
            ("process_noise_std_mw", self.process_noise_std_mw),
            ("measurement_noise_std_hz", self.measurement_noise_std_hz),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("grid {name} = {v} must be non-negative")));
            }
        }
        Ok(())
    }

    fn continuous(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let m = self.inertia_mw_s2;
        let tg = self.governor_time_constant_s;
        ([[-self.damping_mw_s / m, 1.0 / m], [-1.0 / (self.droop * tg), -1.0 / tg]], [1.0 / m, 0.0])
    }
}

/// Discrete transition `z+ = phi z + gamma w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridModel {
    pub params: GridParams,
    pub phi: [[f64; 2]; 2],
    pub gamma: [f64; 2],
}

impl GridModel {
    pub fn new(params: GridParams) -> Result<Self> {
        params.validate()?;
        let t = params.dt_s;
        let (phi, gamma) = match params.discretization {
            Discretization::Euler => {
                let m = params.inertia_mw_s2;
                let tg = params.governor_time_constant_s;
                ([[1.0 - t * params.damping_mw_s / m, t / m], [-t / (params.droop * tg), 1.0 - t / tg]], [t / m, 0.0])
            }
            Discretization::ExactZoh => {
                let (a, b) = params.continuous();
                // exp([[A, B], [0, 0]] t) = [[phi, gamma], [0, 1]]
                let mut aug = [[0.0; 3]; 3];
                for i in 0..2 {
                    for j in 0..2 {
                        aug[i][j] = a[i][j] * t;
                    }
                    aug[i][2] = b[i] * t;
                }
                let e = expm3(&aug);
                ([[e[0][0], e[0][1]], [e[1][0], e[1][1]]], [e[0][2], e[1][2]])
            }
        };
        Ok(GridModel { params, phi, gamma })
    }
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
fn expm3(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let norm = a.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let mut scaled = *a;
    scaled.iter_mut().flatten().for_each(|v| *v *= scale);

    let mut result = identity3();
    let mut term = identity3();
    for k in 1..=20 {
        term = matmul3(&term, &scaled);
        term.iter_mut().flatten().for_each(|v| *v /= k as f64);
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul3(&result, &result);
    }
    result
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn matmul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GridState {
    /// Frequency deviation from nominal, Hz.
    pub delta_omega: f64,
    /// Governor/turbine output adjustment, MW.
    pub p_gov: f64,
    pub k: u64,
}

/// One discrete step driven by total load change `total_x`, scheduled
/// generation `g` against nominal `g0`, and process disturbance `zeta`.
pub fn grid_step(state: &GridState, model: &GridModel, total_x: f64, g: f64, g0: f64, zeta: f64) -> GridState {
    let w = (g - g0) + total_x + zeta;
    let (phi, gamma) = (&model.phi, &model.gamma);
    GridState {
        delta_omega: phi[0][0] * state.delta_omega + phi[0][1] * state.p_gov + gamma[0] * w,
        p_gov: phi[1][0] * state.delta_omega + phi[1][1] * state.p_gov + gamma[1] * w,
        k: state.k + 1,
    }
}

/// Local frequency reading `omega0 + dw + delta`.
pub fn measure_frequency(state: &GridState, params: &GridParams, delta_hz: f64) -> f64 {
    params.nominal_frequency_hz + state.delta_omega + delta_hz
}

/// Piecewise-constant, right-continuous generation profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSchedule {
    /// Nominal output g0 the load changes are measured against.
    pub nominal_mw: f64,
    /// `(start time s, generation MW)`, sorted by time, first entry at 0 s.
    pub breakpoints: Vec<(f64, f64)>,
}

impl Default for GenerationSchedule {
    fn default() -> Self {
        GenerationSchedule { nominal_mw: 200.0, breakpoints: vec![(0.0, 200.0), (20.0, 190.0), (50.0, 170.0)] }
    }
}

/// Breakpoint times are matched within this many seconds so that `k * dt`
/// rounding does not delay a step by one sample.
const TIME_SNAP_S: f64 = 1e-9;

impl GenerationSchedule {
    pub fn validate(&self) -> Result<()> {
        let first = self.breakpoints.first().ok_or_else(|| Error::Config("generation schedule is empty".into()))?;
        if first.0 != 0.0 {
            return Err(Error::Config("generation schedule must start at t = 0 s".into()));
        }
        for w in self.breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config("schedule breakpoints must be strictly increasing".into()));
            }
        }
        if !self.nominal_mw.is_finite() || self.breakpoints.iter().any(|(t, g)| !t.is_finite() || !g.is_finite()) {
            return Err(Error::Config("schedule entries must be finite".into()));
        }
        Ok(())
    }

    pub fn nominal(&self) -> f64 {
        self.nominal_mw
    }

    /// Constant generation `g` from `t = 0` against nominal `g0`.
    pub fn constant(nominal_mw: f64, g: f64) -> Self {
        GenerationSchedule { nominal_mw, breakpoints: vec![(0.0, g)] }
    }

    /// Index of the segment active at `t`.
    pub fn segment(&self, t: f64) -> usize {
        self.breakpoints.iter().rposition(|&(tb, _)| tb <= t + TIME_SNAP_S).unwrap_or(0)
    }

    /// Balance constant `g0 - g` of each segment.
    pub fn balance_constants(&self) -> Vec<f64> {
        let g0 = self.nominal();
        self.breakpoints.iter().map(|&(_, g)| g0 - g).collect()
    }
}

pub fn scheduled_generation(schedule: &GenerationSchedule, t: f64) -> f64 {
    schedule.breakpoints[schedule.segment(t)].1
}

/// Process disturbance and per-load measurement noise, one independent
/// ChaCha stream per source so draws do not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    process: Option<(ChaCha8Rng, Normal<f64>)>,
    measurement: Option<(Vec<ChaCha8Rng>, Normal<f64>)>,
}

impl NoiseSource {
    pub fn new(seed: u64, n_loads: usize, params: &GridParams, enabled: bool) -> Result<Self> {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::Config(format!("noise std {std}: {e}")));
        let process = if enabled && params.process_noise_std_mw > 0.0 {
            Some((stream(1), normal(params.process_noise_std_mw)?))
        } else {
            None
        };
        let measurement = if enabled && params.measurement_noise_std_hz > 0.0 {
            let streams = (0..n_loads as u64).map(|i| stream(1000 + i)).collect();
            Some((streams, normal(params.measurement_noise_std_hz)?))
        } else {
            None
        };
        Ok(NoiseSource { process, measurement })
    }

    pub fn process(&mut self) -> f64 {
        match &mut self.process {
            Some((rng, dist)) => dist.sample(rng),
            None => 0.0,
        }
    }

    /// Fills `out` with one measurement-noise draw per load.
    pub fn measurement(&mut self, out: &mut [f64]) {
        match &mut self.measurement {
            Some((rngs, dist)) => {
                for (v, rng) in out.iter_mut().zip(rngs.iter_mut()) {
                    *v = dist.sample(rng);
                }
            }
            None => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }
}
