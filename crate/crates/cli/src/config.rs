//! Run configuration documents.
//!
//! ```json
//! {
//!   "model": { "preset": "exchange_qubits", "params": { "omega1": 1, "omega2": 1, "g": 0.1 } },
//!   "initial_state": "product:1,0",
//!   "grid": { "t0": 0, "t1": 62.83, "n_points": 200, "substep": 6.283e-4 },
//!   "gauge": { "kind": "bare_parallel" },
//!   "tolerances": { "rank_tol": 1e-8, "degeneracy_tol": 1e-6 },
//!   "outputs": ["energies", "lambdas", "effective_hamiltonians"]
//! }
//! ```
//!
//! `initial_state` is an amplitude list (numbers or `[re, im]`, normalised on
//! load), `"bell"`, `"product:i,j"` or `"random:SEED"`.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde_json::{Map, Value};

use schmidt_core::models::{load_model, random_state, vector_from_json};
use schmidt_core::{Error, GaugeConvention, ModelSpec, StateVector, TimeGrid, Tolerances};

const TOP_LEVEL_KEYS: [&str; 7] = ["model", "initial_state", "grid", "gauge", "tolerances", "outputs", "battery"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OutputKind {
    Energies,
    Lambdas,
    EffectiveHamiltonians,
    Residuals,
    Entropy,
}

impl OutputKind {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "energies" => OutputKind::Energies,
            "lambdas" => OutputKind::Lambdas,
            "effective_hamiltonians" => OutputKind::EffectiveHamiltonians,
            "residuals" => OutputKind::Residuals,
            "entropy" => OutputKind::Entropy,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: Arc<ModelSpec>,
    pub initial_state: StateVector,
    pub grid: TimeGrid,
    pub gauge: GaugeConvention,
    pub tolerances: Tolerances,
    pub outputs: BTreeSet<OutputKind>,
    /// Extra cases for `check`, each a full configuration.
    pub battery: Vec<RunConfig>,
    /// The document this was parsed from, after overrides.
    pub document: Value,
}

fn parse_err(path: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Parse { path: path.into(), reason: reason.into() }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, Error> {
    v.as_object().ok_or_else(|| parse_err(path, "expected an object"))
}

fn number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>, Error> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| parse_err(format!("{path}.{key}"), "expected a number")),
    }
}

/// Applies `--seed` to the random preset and a seeded initial state, if present.
pub fn apply_seed(doc: &mut Value, seed: u64) {
    if doc.pointer("/model/preset").and_then(Value::as_str) == Some("random_dense") {
        if let Some(params) = doc.pointer_mut("/model/params").and_then(Value::as_object_mut) {
            params.insert("seed".into(), seed.into());
        }
    }
    if let Some(state) = doc.get_mut("initial_state") {
        if state.as_str().is_some_and(|s| s.starts_with("random")) {
            *state = Value::String(format!("random:{seed}"));
        }
    }
    if let Some(cases) = doc.get_mut("battery").and_then(Value::as_array_mut) {
        for case in cases {
            apply_seed(case, seed);
        }
    }
}

fn parse_state(v: &Value, model: &ModelSpec, path: &str) -> Result<StateVector, Error> {
    let shape = model.shape();
    let fail = |reason: String| parse_err(path, reason);
    match v {
        Value::String(s) if s == "bell" => StateVector::maximally_entangled(shape),
        Value::String(s) => {
            let (kind, arg) = s.split_once(':').ok_or_else(|| fail(format!("unknown state preset `{s}`")))?;
            match kind {
                "product" => {
                    let idx: Vec<usize> = arg
                        .split(',')
                        .map(|x| x.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| fail(format!("bad product indices `{arg}`")))?;
                    match idx[..] {
                        [i, j] => StateVector::product(shape, i, j).map_err(|e| fail(e.to_string())),
                        _ => Err(fail("product needs two indices `i,j`".into())),
                    }
                }
                "random" => {
                    let seed = arg.trim().parse::<u64>().map_err(|_| fail(format!("bad seed `{arg}`")))?;
                    random_state(shape, seed)
                }
                _ => Err(fail(format!("unknown state preset `{s}`"))),
            }
        }
        Value::Array(_) => {
            let amps = vector_from_json(v, path, shape.total())?;
            StateVector::normalized(amps, shape, 0.0).map_err(|e| fail(e.to_string()))
        }
        _ => Err(fail("expected a preset string or an amplitude list".into())),
    }
}

fn parse_grid(v: &Value) -> Result<TimeGrid, Error> {
    let obj = object(v, "grid")?;
    for key in obj.keys() {
        if !["t0", "t1", "n_points", "substep"].contains(&key.as_str()) {
            return Err(parse_err(format!("grid.{key}"), "unknown field"));
        }
    }
    let t0 = number(obj, "t0", "grid")?.unwrap_or(0.0);
    let t1 = number(obj, "t1", "grid")?.ok_or_else(|| parse_err("grid.t1", "missing"))?;
    let n = obj
        .get("n_points")
        .ok_or_else(|| parse_err("grid.n_points", "missing"))?
        .as_u64()
        .ok_or_else(|| parse_err("grid.n_points", "expected a positive integer"))?;
    TimeGrid::new(t0, t1, n as usize, number(obj, "substep", "grid")?)
}

fn parse_outputs(v: Option<&Value>) -> Result<BTreeSet<OutputKind>, Error> {
    let Some(v) = v else {
        return Ok([OutputKind::Energies, OutputKind::Lambdas].into());
    };
    let items = v.as_array().ok_or_else(|| parse_err("outputs", "expected a list"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            item.as_str()
                .and_then(OutputKind::parse)
                .ok_or_else(|| parse_err(format!("outputs[{i}]"), format!("unknown output {item}")))
        })
        .collect()
}

/// Parses a configuration document. `seed` overrides every random seed in it.
pub fn parse_config(doc: &Value, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut doc = doc.clone();
    if let Some(seed) = seed {
        apply_seed(&mut doc, seed);
    }
    parse_document(&doc, "")
}

fn parse_document(doc: &Value, prefix: &str) -> Result<RunConfig, Error> {
    let at = |e: Error| match e {
        Error::Parse { path, reason } if !prefix.is_empty() => parse_err(format!("{prefix}.{path}"), reason),
        Error::Model { field, reason } if !prefix.is_empty() => {
            Error::Model { field: format!("{prefix}.{field}"), reason }
        }
        other => other,
    };
    let obj = object(doc, "config").map_err(at)?;
    for key in obj.keys() {
        if !TOP_LEVEL_KEYS.contains(&key.as_str()) {
            return Err(at(parse_err(key.clone(), "unknown field")));
        }
    }
    let model = load_model(obj.get("model").ok_or_else(|| at(parse_err("model", "missing")))?).map_err(at)?;
    let initial_state = parse_state(
        obj.get("initial_state").ok_or_else(|| at(parse_err("initial_state", "missing")))?,
        &model,
        "initial_state",
    )
    .map_err(at)?;
    let grid = parse_grid(obj.get("grid").ok_or_else(|| at(parse_err("grid", "missing")))?).map_err(at)?;
    let gauge: GaugeConvention = match obj.get("gauge") {
        None => GaugeConvention::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| at(parse_err("gauge", e.to_string())))?,
    };
    gauge.validate().map_err(at)?;
    let tolerances: Tolerances = match obj.get("tolerances") {
        None => Tolerances::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| at(parse_err("tolerances", e.to_string())))?,
    };
    tolerances
        .validate()
        .map_err(|(field, value)| at(parse_err(format!("tolerances.{field}"), format!("must be positive, got {value}"))))?;
    let outputs = parse_outputs(obj.get("outputs")).map_err(at)?;

    let mut battery = Vec::new();
    if let Some(cases) = obj.get("battery") {
        if !prefix.is_empty() {
            return Err(at(parse_err("battery", "battery cases cannot nest")));
        }
        let cases = cases.as_array().ok_or_else(|| parse_err("battery", "expected a list"))?;
        for (i, case) in cases.iter().enumerate() {
            // Cases inherit gauge and tolerances from the top level.
            let mut merged = object(case, &format!("battery[{i}]"))?.clone();
            for key in ["gauge", "tolerances"] {
                if let (false, Some(v)) = (merged.contains_key(key), obj.get(key)) {
                    merged.insert(key.into(), v.clone());
                }
            }
            battery.push(parse_document(&Value::Object(merged), &format!("battery[{i}]"))?);
        }
    }

    Ok(RunConfig {
        model: Arc::new(model),
        initial_state,
        grid,
        gauge,
        tolerances,
        outputs,
        battery,
        document: doc.clone(),
    })
}

/// Reads a configuration file as JSON without interpreting it.
pub fn read_document(path: &std::path::Path) -> Result<Value, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| parse_err(path.display().to_string(), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path.display().to_string(), e.to_string()))
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    parse_config(&read_document(path)?, seed)
}
