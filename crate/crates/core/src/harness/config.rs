use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{AgentState, DmAdmmParams, DualAscentParams, PjAdmmParams};
use crate::comm::CommGraph;
use crate::disutility::{Disutility, LoadBounds};
use crate::error::{Error, Result};
use crate::estimator::EstimatorOptions;
use crate::grid::{GenerationSchedule, GridParams};
use crate::oracle::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisutilityKind {
    Quadratic,
    KinkedQuadratic,
    AsymmetricQuadratic,
    /// Each load draws one of the three convex models uniformly.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KinkedForm {
    #[default]
    Continuous,
    AsPrinted,
}

/// How per-load disutilities are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisutilityConfig {
    pub model: DisutilityKind,
    pub kinked_form: KinkedForm,
    /// Kink location as a fraction of the load's upper bound.
    pub eta_fraction: f64,
    /// `1/q` is drawn uniformly from this interval.
    pub inv_q_range: (f64, f64),
}

impl Default for DisutilityConfig {
    fn default() -> Self {
        DisutilityConfig {
            model: DisutilityKind::KinkedQuadratic,
            kinked_form: KinkedForm::Continuous,
            eta_fraction: 0.1,
            inv_q_range: (1.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[serde(alias = "dm_admm")]
    Dmadmm,
    #[serde(alias = "pj_admm")]
    Pjadmm,
    Dual,
    /// Loads stay at zero: generator-only response.
    None,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::Dmadmm => "dmadmm",
            AlgorithmKind::Pjadmm => "pjadmm",
            AlgorithmKind::Dual => "dual",
            AlgorithmKind::None => "none",
        }
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dmadmm" | "dm_admm" => Ok(AlgorithmKind::Dmadmm),
            "pjadmm" | "pj_admm" => Ok(AlgorithmKind::Pjadmm),
            "dual" => Ok(AlgorithmKind::Dual),
            "none" => Ok(AlgorithmKind::None),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub rho: f64,
    pub initial_dual: f64,
    /// PJ-ADMM proximal weight; `rho (n - 1)` when absent.
    pub pj_tau: Option<f64>,
    pub pj_gamma: f64,
    /// Dual-ascent step; `rho` when absent.
    pub dual_gamma: Option<f64>,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            kind: AlgorithmKind::Dmadmm,
            rho: 2.5e-3,
            initial_dual: 0.0,
            pj_tau: None,
            pj_gamma: 0.5,
            dual_gamma: None,
        }
    }
}

/// Resolved per-agent update rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    DmAdmm(DmAdmmParams),
    PjAdmm(PjAdmmParams),
    DualAscent(DualAscentParams),
    None,
}

impl AlgorithmConfig {
    pub fn resolve(&self, n: usize) -> Result<Algorithm> {
        let algo = match self.kind {
            AlgorithmKind::Dmadmm => {
                let p = DmAdmmParams { rho: self.rho };
                p.validate()?;
                Algorithm::DmAdmm(p)
            }
            AlgorithmKind::Pjadmm => {
                let mut p = PjAdmmParams::with_defaults(self.rho, n);
                p.gamma = self.pj_gamma;
                if let Some(tau) = self.pj_tau {
                    p.tau = tau;
                }
                p.validate()?;
                Algorithm::PjAdmm(p)
            }
            AlgorithmKind::Dual => {
                let p = DualAscentParams { gamma: self.dual_gamma.unwrap_or(self.rho) };
                p.validate()?;
                Algorithm::DualAscent(p)
            }
            AlgorithmKind::None => Algorithm::None,
        };
        Ok(algo)
    }
}

/// Settings for the offline (exact-residual) convergence driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfflineConfig {
    pub c_mw: f64,
    pub max_iterations: usize,
    pub residual_tol_mw: f64,
    pub iterate_tol_mw: f64,
    pub objective_tol: f64,
    pub oracle_tol_mw: f64,
}

impl Default for OfflineConfig {
    fn default() -> Self {
        OfflineConfig {
            c_mw: 6.0,
            max_iterations: 100_000,
            residual_tol_mw: 1e-6,
            iterate_tol_mw: 1e-5,
            objective_tol: 1e-6,
            oracle_tol_mw: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_loads: usize,
    pub seed: u64,
    /// Upper bounds are drawn uniformly and rescaled to sum to this value.
    pub total_capacity_mw: f64,
    pub disutility: DisutilityConfig,
    pub algorithm: AlgorithmConfig,
    pub grid: GridParams,
    pub schedule: GenerationSchedule,
    pub noise: bool,
    pub estimator: EstimatorOptions,
    pub comm: CommGraph,
    pub horizon_s: f64,
    /// Run agent updates on the rayon pool.
    pub parallel: bool,
    /// Keep per-agent consumption and residual estimates in the trace.
    pub record_agents: bool,
    pub offline: OfflineConfig,
    pub output_dir: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_loads: 100,
            seed: 1,
            total_capacity_mw: 60.0,
            disutility: DisutilityConfig::default(),
            algorithm: AlgorithmConfig::default(),
            grid: GridParams::default(),
            schedule: GenerationSchedule::default(),
            noise: false,
            estimator: EstimatorOptions::default(),
            comm: CommGraph::None,
            horizon_s: 100.0,
            parallel: false,
            record_agents: false,
            offline: OfflineConfig::default(),
            output_dir: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_loads == 0 {
            return Err(Error::Config("n_loads must be at least 1".into()));
        }
        if !(self.total_capacity_mw > 0.0 && self.total_capacity_mw.is_finite()) {
            return Err(Error::Config("total_capacity_mw must be positive".into()));
        }
        let (lo, hi) = self.disutility.inv_q_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Config(format!("inv_q_range ({lo}, {hi}) must satisfy 0 < lo <= hi")));
        }
        if !(self.disutility.eta_fraction >= 0.0 && self.disutility.eta_fraction.is_finite()) {
            return Err(Error::Config("eta_fraction must be non-negative".into()));
        }
        if !(self.horizon_s >= 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::Config("horizon_s must be non-negative".into()));
        }
        self.grid.validate()?;
        self.schedule.validate()?;
        self.algorithm.resolve(self.n_loads)?;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon_s / self.grid.dt_s).round() as usize
    }
}

/// Generated loads plus the instance for the offline balance constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltInstance {
    pub problem: ProblemInstance,
    pub agents: Vec<AgentState>,
}

/// Deterministic load population for `cfg.seed`.
///
/// Lower bounds are zero, upper bounds uniform and rescaled to
/// `total_capacity_mw`, and `1/q` uniform on `inv_q_range`. Every balance
/// constant of the schedule and the offline constant must be feasible.
pub fn build_instance(cfg: &ScenarioConfig) -> Result<BuiltInstance> {
    cfg.validate()?;
    let n = cfg.n_loads;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0);

    let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let upper: Vec<f64> = raw.iter().map(|u| cfg.total_capacity_mw * (u / total)).collect();

    let (inv_lo, inv_hi) = cfg.disutility.inv_q_range;
    let draw_q = |rng: &mut ChaCha8Rng| 1.0 / (inv_lo + (inv_hi - inv_lo) * rng.random::<f64>());

    let mut functions = Vec::with_capacity(n);
    for &b in &upper {
        let kind = match cfg.disutility.model {
            DisutilityKind::Mixed => match rng.random_range(0..3) {
                0 => DisutilityKind::Quadratic,
                1 => DisutilityKind::KinkedQuadratic,
                _ => DisutilityKind::AsymmetricQuadratic,
            },
            k => k,
        };
        let f = match kind {
            DisutilityKind::Quadratic => Disutility::Quadratic { q: draw_q(&mut rng) },
            DisutilityKind::KinkedQuadratic => {
                let q = draw_q(&mut rng);
                let eta = cfg.disutility.eta_fraction * b;
                match cfg.disutility.kinked_form {
                    KinkedForm::Continuous => Disutility::KinkedQuadratic { q, eta },
                    KinkedForm::AsPrinted => Disutility::KinkedQuadraticAsPrinted { q, eta },
                }
            }
            DisutilityKind::AsymmetricQuadratic => {
                let q_minus = draw_q(&mut rng);
                let q_plus = draw_q(&mut rng);
                Disutility::AsymmetricQuadratic { q_minus, q_plus }
            }
            DisutilityKind::Mixed => unreachable!("resolved above"),
        };
        functions.push(f);
    }

    let bounds: Vec<LoadBounds> = upper.iter().map(|&b| LoadBounds::new(0.0, b)).collect::<Result<_>>()?;
    let problem = ProblemInstance::new(functions, bounds, cfg.offline.c_mw)?;

    let required = cfg.schedule.balance_constants().into_iter().chain(std::iter::once(cfg.offline.c_mw));
    for c in required {
        problem.with_c(c).check_feasible().map_err(|e| Error::Config(e.to_string()))?;
    }

    let agents = problem
        .functions
        .iter()
        .zip(&problem.bounds)
        .enumerate()
        .map(|(i, (f, b))| AgentState { y: cfg.algorithm.initial_dual, ..AgentState::new(i, *f, *b) })
        .collect();
    Ok(BuiltInstance { problem, agents })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_load_gets_full_capacity() {
        let cfg = ScenarioConfig { n_loads: 1, ..Default::default() };
        let built = build_instance(&cfg).unwrap();
        assert_eq!(built.problem.bounds[0].upper, 60.0);
        assert_eq!(built.problem.bounds[0].lower, 0.0);
    }

    #[test]
    fn capacity_normalized_for_many_loads() {
        for seed in 0..5 {
            let cfg = ScenarioConfig { n_loads: 1000, seed, ..Default::default() };
            let built = build_instance(&cfg).unwrap();
            let (_, hi) = built.problem.capacity();
            assert!((hi - 60.0).abs() < 1e-9, "{hi}");
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = ScenarioConfig { n_loads: 50, seed: 9, ..Default::default() };
        assert_eq!(build_instance(&cfg).unwrap(), build_instance(&cfg).unwrap());
        let other = ScenarioConfig { seed: 10, ..cfg.clone() };
        assert_ne!(build_instance(&cfg).unwrap(), build_instance(&other).unwrap());
    }

    #[test]
    fn draws_follow_rules() {
        let mut cfg = ScenarioConfig { n_loads: 200, ..Default::default() };
        let built = build_instance(&cfg).unwrap();
        for (f, b) in built.problem.functions.iter().zip(&built.problem.bounds) {
            match *f {
                Disutility::KinkedQuadratic { q, eta } => {
                    assert!((1.0 / 3.0..=1.0).contains(&q));
                    assert!((eta - 0.1 * b.upper).abs() < 1e-15);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert!(built.agents.iter().all(|a| a.x == 0.0 && a.y == 0.0));

        cfg.disutility.model = DisutilityKind::Mixed;
        let built = build_instance(&cfg).unwrap();
        let names: std::collections::HashSet<_> = built.problem.functions.iter().map(|f| f.name()).collect();
        assert_eq!(names.len(), 3);
    }

    #[test]
    fn infeasible_schedule_is_config_error() {
        let mut cfg = ScenarioConfig { n_loads: 5, ..Default::default() };
        cfg.schedule.breakpoints.push((80.0, 100.0));
        assert!(matches!(build_instance(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"n_loads": 7, "algorithm": {"kind": "pjadmm"}}"#).unwrap();
        assert_eq!(cfg.n_loads, 7);
        assert_eq!(cfg.algorithm.kind, AlgorithmKind::Pjadmm);
        assert_eq!(cfg.algorithm.rho, 2.5e-3);
        assert_eq!(cfg.grid.dt_s, 0.1);
        assert!(ScenarioConfig::from_json(r#"{"n_loads": 0}"#).is_err());
    }

    #[test]
    fn algorithm_defaults_resolve() {
        let cfg = AlgorithmConfig { kind: AlgorithmKind::Pjadmm, ..Default::default() };
        match cfg.resolve(11).unwrap() {
            Algorithm::PjAdmm(p) => {
                assert!((p.tau - 0.025).abs() < 1e-15);
                assert_eq!(p.gamma, 0.5);
            }
            other => panic!("{other:?}"),
        }
        let dual = AlgorithmConfig { kind: AlgorithmKind::Dual, ..Default::default() };
        assert_eq!(dual.resolve(3).unwrap(), Algorithm::DualAscent(DualAscentParams { gamma: 2.5e-3 }));
    }
}
