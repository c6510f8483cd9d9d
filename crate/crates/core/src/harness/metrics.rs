use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::trace::{Trace, TraceRecord};

/// Length of the tail averaged for the steady-state deviation.
pub const STEADY_STATE_WINDOW_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start_s: f64,
    pub end_s: f64,
    pub max_abs_deviation_hz: f64,
    /// Most negative deviation in the window.
    pub nadir_hz: f64,
    /// Mean of `|delta omega|` over the last second of the window.
    pub steady_state_abs_deviation_hz: f64,
    /// Rebound above the signed steady state after the nadir.
    pub overshoot_hz: f64,
    pub final_abs_residual_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub algorithm: String,
    pub max_abs_deviation_hz: f64,
    pub final_disutility: f64,
    /// Largest window overshoot.
    pub overshoot_hz: f64,
    pub windows: Vec<WindowMetrics>,
    pub failure: Option<String>,
}

fn window_metrics(records: &[TraceRecord], end_s: f64) -> WindowMetrics {
    let dev = |r: &TraceRecord| r.delta_omega_hz;
    let max_abs = records.iter().map(|r| dev(r).abs()).fold(0.0, f64::max);
    let (nadir_idx, nadir) = records
        .iter()
        .enumerate()
        .map(|(i, r)| (i, dev(r)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let last_t = records.last().map_or(0.0, |r| r.t_s);
    let tail: Vec<&TraceRecord> = records.iter().filter(|r| r.t_s >= last_t - STEADY_STATE_WINDOW_S - 1e-9).collect();
    let tail_len = tail.len() as f64;
    let ss_signed = tail.iter().map(|r| dev(r)).sum::<f64>() / tail_len;
    let ss_abs = tail.iter().map(|r| dev(r).abs()).sum::<f64>() / tail_len;
    let rebound = records[nadir_idx..].iter().map(dev).fold(f64::NEG_INFINITY, f64::max);
    WindowMetrics {
        start_s: records[0].t_s,
        end_s,
        max_abs_deviation_hz: max_abs,
        nadir_hz: nadir,
        steady_state_abs_deviation_hz: ss_abs,
        overshoot_hz: (rebound - ss_signed).max(0.0),
        final_abs_residual_mw: records.last().map_or(0.0, |r| r.r_mw.abs()),
    }
}

/// Per-window frequency metrics; windows are delimited by the schedule's
/// breakpoints.
pub fn compute_metrics(trace: &Trace) -> Result<Metrics> {
    let last = trace
        .records
        .last()
        .ok_or_else(|| Error::InvalidParameter("cannot compute metrics of an empty trace".into()))?;
    let mut windows = Vec::new();
    let mut start = 0;
    while start < trace.records.len() {
        let seg = trace.schedule.segment(trace.records[start].t_s);
        let len = trace.records[start..].iter().take_while(|r| trace.schedule.segment(r.t_s) == seg).count();
        let end = start + len;
        let end_s = trace.records.get(end).map_or(last.t_s, |r| r.t_s);
        windows.push(window_metrics(&trace.records[start..end], end_s));
        start = end;
    }
    Ok(Metrics {
        algorithm: trace.algorithm.clone(),
        max_abs_deviation_hz: windows.iter().map(|w| w.max_abs_deviation_hz).fold(0.0, f64::max),
        final_disutility: last.p_obj,
        overshoot_hz: windows.iter().map(|w| w.overshoot_hz).fold(0.0, f64::max),
        windows,
        failure: trace.failure.clone(),
    })
}
