use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::GenerationSchedule;

/// Column order of the trace CSV.
pub const TRACE_HEADER: [&str; 8] = ["k", "t_s", "omega_hz", "g_mw", "sum_x_mw", "r_mw", "p_obj", "v_lyap"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub t_s: f64,
    pub omega_hz: f64,
    pub delta_omega_hz: f64,
    pub g_mw: f64,
    pub sum_x_mw: f64,
    /// True residual `sum_i x_i - C`.
    pub r_mw: f64,
    pub p_obj: f64,
    /// Lyapunov value; NaN when the run is outside the certificate's setting.
    pub v_lyap: f64,
    /// Summary of the residual estimates formed right after this step,
    /// which refer to this record's `r_mw`. NaN on the final record.
    pub r_hat_mean: f64,
    pub r_hat_min: f64,
    pub r_hat_max: f64,
    /// `max_i |r_hat_i - r|`.
    pub r_hat_max_abs_error: f64,
    pub x: Option<Vec<f64>>,
    pub r_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub algorithm: String,
    pub dt_s: f64,
    pub nominal_frequency_hz: f64,
    pub schedule: GenerationSchedule,
    pub records: Vec<TraceRecord>,
    /// Set when the run stopped early; `records` then holds the partial run.
    pub failure: Option<String>,
}

impl Trace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.t_s.to_string(),
                r.omega_hz.to_string(),
                r.g_mw.to_string(),
                r.sum_x_mw.to_string(),
                r.r_mw.to_string(),
                r.p_obj.to_string(),
                r.v_lyap.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Bitwise equality of every numeric column.
    pub fn bitwise_eq(&self, other: &Trace) -> bool {
        fn same(a: f64, b: f64) -> bool {
            a.to_bits() == b.to_bits()
        }
        fn same_vec(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>) -> bool {
            match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => a.len() == b.len() && a.iter().zip(b).all(|(u, v)| same(*u, *v)),
                _ => false,
            }
        }
        self.records.len() == other.records.len()
            && self.failure == other.failure
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.k == b.k
                    && same(a.t_s, b.t_s)
                    && same(a.omega_hz, b.omega_hz)
                    && same(a.g_mw, b.g_mw)
                    && same(a.sum_x_mw, b.sum_x_mw)
                    && same(a.r_mw, b.r_mw)
                    && same(a.p_obj, b.p_obj)
                    && same(a.v_lyap, b.v_lyap)
                    && same(a.r_hat_mean, b.r_hat_mean)
                    && same(a.r_hat_max_abs_error, b.r_hat_max_abs_error)
                    && same_vec(&a.x, &b.x)
                    && same_vec(&a.r_hat, &b.r_hat)
            })
    }
}
