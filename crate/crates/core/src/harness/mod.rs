//! Scenario configuration, simulation drivers, metrics and trace output.

mod closed_loop;
mod config;
mod metrics;
mod offline;
mod trace;

pub use closed_loop::{jacobi_round, run_closed_loop};
pub use config::{
    build_instance, Algorithm, AlgorithmConfig, AlgorithmKind, BuiltInstance, DisutilityConfig, DisutilityKind,
    KinkedForm, OfflineConfig, ScenarioConfig,
};
pub use metrics::{compute_metrics, Metrics, WindowMetrics, STEADY_STATE_WINDOW_S};
pub use offline::{
    fit_linear_rate, run_offline, run_offline_instance, ConvergenceReport, History, OfflineOptions, RateFit,
    CERTIFICATE_ORACLE_TOL, CERTIFICATE_SLACK,
};
pub use trace::{Trace, TraceRecord, TRACE_HEADER};

use crate::error::Result;

/// Runs the same scenario once per algorithm and returns each trace with its
/// metrics. Runs that cannot start (for example an unsupported disutility)
/// are returned as errors in place.
pub fn compare(cfg: &ScenarioConfig, kinds: &[AlgorithmKind]) -> Vec<(AlgorithmKind, Result<(Trace, Metrics)>)> {
    kinds
        .iter()
        .map(|&kind| {
            let mut run = cfg.clone();
            run.algorithm.kind = kind;
            let result = run_closed_loop(&run).and_then(|trace| {
                let m = compute_metrics(&trace)?;
                Ok((trace, m))
            });
            (kind, result)
        })
        .collect()
}
