//! `schmidt sweep`: one run per value of a single configuration parameter.

use std::path::Path;

use rayon::prelude::*;
use serde_json::Value;

use schmidt_core::Error;

use crate::config::{apply_seed, parse_config};
use crate::output::{fmt_f64, write_text};
use crate::run::{run, Summary};
use crate::CliError;

pub const SUMMARY_COLUMNS: [&str; 12] = [
    "index",
    "value",
    "status",
    "additivity_residual",
    "master_residual_1",
    "master_residual_2",
    "generator_deviation_1",
    "generator_deviation_2",
    "energy_drift",
    "u1_drift",
    "u2_drift",
    "error",
];

/// Turns `model.params.g` into `/model/params/g`; paths starting with `/`
/// are taken as JSON pointers already.
pub fn to_pointer(param: &str) -> String {
    if param.starts_with('/') {
        param.to_string()
    } else {
        param.split('.').map(|seg| format!("/{}", seg.replace('~', "~0").replace('/', "~1"))).collect()
    }
}

/// Splits `--values` on commas; each item is read as JSON, else as a string.
pub fn parse_values(list: &str) -> Vec<Value> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect()
}

fn substitute(doc: &Value, pointer: &str, value: &Value) -> Result<Value, Error> {
    let mut doc = doc.clone();
    let slot = doc
        .pointer_mut(pointer)
        .ok_or_else(|| Error::Parse { path: pointer.to_string(), reason: "no such parameter in the config".into() })?;
    *slot = value.clone();
    Ok(doc)
}

fn row(index: usize, value: &Value, result: &Result<Summary, CliError>) -> String {
    let value = value.to_string().replace(',', ";");
    let mut cells = vec![index.to_string(), value];
    match result {
        Ok(s) => {
            cells.push("ok".into());
            let nums = [
                s.additivity,
                s.master[0],
                s.master[1],
                s.generator_deviation[0],
                s.generator_deviation[1],
                s.energy_drift,
                s.u_drift[0],
                s.u_drift[1],
            ];
            cells.extend(nums.map(fmt_f64));
            cells.push(String::new());
        }
        Err(e) => {
            cells.push("error".into());
            cells.extend(std::iter::repeat_n(String::new(), 8));
            cells.push(e.to_string().replace([',', '\n'], ";"));
        }
    }
    cells.join(",")
}

/// Runs every value into `out/value_NNN/` and writes `out/summary.csv`.
///
/// The summary is written even when some values fail; the first failure (by
/// index) is then returned so its exit code reaches the caller.
pub fn sweep(doc: &Value, seed: Option<u64>, param: &str, values: &[Value], out: &Path) -> Result<Vec<Summary>, CliError> {
    let mut doc = doc.clone();
    if let Some(seed) = seed {
        apply_seed(&mut doc, seed);
    }
    let pointer = to_pointer(param);
    if doc.pointer(&pointer).is_none() {
        return Err(CliError::Config(Error::Parse { path: param.to_string(), reason: "no such parameter in the config".into() }));
    }
    if values.is_empty() {
        return Err(CliError::Config(Error::Parse { path: "--values".into(), reason: "no values given".into() }));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Output { path: out.display().to_string(), reason: e.to_string() })?;
    let results: Vec<Result<Summary, CliError>> = values
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let cfg = substitute(&doc, &pointer, v).and_then(|d| parse_config(&d, None)).map_err(CliError::Config)?;
            run(&cfg, &out.join(format!("value_{i:03}")))
        })
        .collect();
    let mut csv = SUMMARY_COLUMNS.join(",");
    csv.push('\n');
    for (i, (v, r)) in values.iter().zip(&results).enumerate() {
        csv.push_str(&row(i, v, r));
        csv.push('\n');
    }
    write_text(&out.join("summary.csv"), &csv)?;
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_paths_become_pointers() {
        assert_eq!(to_pointer("model.params.g"), "/model/params/g");
        assert_eq!(to_pointer("/grid/substep"), "/grid/substep");
        assert_eq!(to_pointer("a/b.c"), "/a~1b/c");
    }

    #[test]
    fn values_parse_as_json_where_possible() {
        assert_eq!(parse_values("0, 0.05,1e-3,bell"), vec![json!(0), json!(0.05), json!(0.001), json!("bell")]);
    }

    #[test]
    fn missing_parameter_is_a_config_error() {
        let doc = json!({ "model": { "params": { "g": 0.1 } } });
        let err = sweep(&doc, None, "model.params.h", &[json!(1)], Path::new("/nonexistent")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
