//! Deterministic CSV and JSON writers.
//!
//! Floats in CSV use 17 significant digits in scientific notation; JSON
//! numbers use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use schmidt_core::energetics::{EffectiveHamiltonian, EnergyRecord};
use schmidt_core::{CMat, FrameSeries, Operator};

use crate::CliError;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Output { path: path.display().to_string(), reason: e.to_string() })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialise");
    text.push('\n');
    write_text(path, &text)
}

pub const ENERGY_COLUMNS: [&str; 11] = [
    "t",
    "u0",
    "u1",
    "u2",
    "e1_bare",
    "e2_bare",
    "e_int",
    "additivity_residual",
    "master_residual_1",
    "master_residual_2",
    "entropy",
];

pub fn energies_csv(records: &[EnergyRecord]) -> String {
    let mut out = ENERGY_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let row = [
            r.time,
            r.u0,
            r.u1,
            r.u2,
            r.e1_bare,
            r.e2_bare,
            r.e_int,
            r.additivity_residual,
            r.master_residual_1,
            r.master_residual_2,
            r.entropy,
        ];
        out.push_str(&row.map(fmt_f64).join(","));
        out.push('\n');
    }
    out
}

pub fn lambdas_csv(series: &FrameSeries) -> String {
    let d1 = series.spec().shape().d1();
    let mut out = String::from("t");
    for j in 1..=d1 {
        let _ = write!(out, ",lambda_sq_{j}");
    }
    out.push('\n');
    for i in 0..series.n_points() {
        let f = series.center(i);
        out.push_str(&fmt_f64(f.time()));
        for l in f.lambda_sq() {
            out.push(',');
            out.push_str(&fmt_f64(l));
        }
        out.push('\n');
    }
    out
}

/// Rows of `[re, im]` pairs.
pub fn matrix_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|c| json!([m[(r, c)].re, m[(r, c)].im])).collect()))
            .collect(),
    )
}

fn optional(op: Option<&Operator>) -> Value {
    op.map(|o| matrix_json(o.matrix())).unwrap_or(Value::Null)
}

pub fn effective_json(effs: &[[EffectiveHamiltonian; 2]]) -> Value {
    let times: Vec<Value> = effs
        .iter()
        .map(|pair| {
            json!({
                "t": pair[0].time(),
                "subsystems": pair.iter().map(|e| json!({
                    "k": e.subsystem().number(),
                    "occupied_only": e.occupied_only(),
                    "asymmetry": e.asymmetry(),
                    "h_tilde": matrix_json(e.h_tilde().matrix()),
                    "h_ls": optional(e.h_ls()),
                    "h_x": optional(e.h_x()),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "schema_version": crate::SCHEMA_VERSION, "times": times })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
