//! Model definitions: bare Hamiltonians, interaction, and ħ.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::hilbert::{
    kron, relative_asymmetry, spectral_decompose, BipartiteShape, CMat, CVec, Operator, StateVector, Subsystem, HERMITIAN_TOL,
};

/// `H0 = H1 ⊗ 1 + 1 ⊗ H2 + H_int` together with ħ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    shape: BipartiteShape,
    h1: Operator,
    h2: Operator,
    h_int: Operator,
    hbar: f64,
    label: String,
    h0: Operator,
}

fn require_hermitian(field: &str, m: &Operator, dim: usize) -> Result<Operator> {
    if m.dim() != dim {
        return Err(Error::model(field, format!("expected {dim}x{dim}, got {}x{}", m.dim(), m.dim())));
    }
    let asym = relative_asymmetry(m.matrix());
    if asym > HERMITIAN_TOL {
        return Err(Error::model(field, format!("not Hermitian (relative asymmetry {asym:.3e})")));
    }
    Ok(Operator::hermitian(m.matrix().clone()).expect("checked above"))
}

impl ModelSpec {
    pub fn new(
        shape: BipartiteShape,
        h1: Operator,
        h2: Operator,
        h_int: Operator,
        hbar: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::model("hbar", format!("must be positive and finite, got {hbar}")));
        }
        let h1 = require_hermitian("h1", &h1, shape.d1())?;
        let h2 = require_hermitian("h2", &h2, shape.d2())?;
        let h_int = require_hermitian("h_int", &h_int, shape.total())?;
        let mut spec = ModelSpec { shape, h1, h2, h_int, hbar, label: label.into(), h0: Operator::zeros(0) };
        spec.h0 = build_total_hamiltonian(&spec)?;
        Ok(spec)
    }

    pub fn shape(&self) -> BipartiteShape {
        self.shape
    }

    pub fn h1(&self) -> &Operator {
        &self.h1
    }

    pub fn h2(&self) -> &Operator {
        &self.h2
    }

    pub fn bare(&self, k: Subsystem) -> &Operator {
        match k {
            Subsystem::One => &self.h1,
            Subsystem::Two => &self.h2,
        }
    }

    pub fn h_int(&self) -> &Operator {
        &self.h_int
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Cached `H0`.
    pub fn total_hamiltonian(&self) -> &Operator {
        &self.h0
    }

    /// Same bare parts and ħ with a different interaction.
    pub fn with_interaction(&self, h_int: Operator, label: impl Into<String>) -> Result<Self> {
        ModelSpec::new(self.shape, self.h1.clone(), self.h2.clone(), h_int, self.hbar, label)
    }

    pub fn non_interacting(&self) -> Self {
        self.with_interaction(Operator::zeros(self.shape.total()), format!("{} [H_int = 0]", self.label))
            .expect("zero interaction is always valid")
    }

    /// Explicit-matrix document; `load_model` of the result reproduces `self`.
    pub fn to_document(&self) -> Value {
        json!({
            "d1": self.shape.d1(),
            "d2": self.shape.d2(),
            "h1": matrix_to_json(self.h1.matrix()),
            "h2": matrix_to_json(self.h2.matrix()),
            "h_int": matrix_to_json(self.h_int.matrix()),
            "hbar": self.hbar,
            "label": self.label,
        })
    }
}

/// `H1 ⊗ 1 + 1 ⊗ H2 + H_int`.
pub fn build_total_hamiltonian(spec: &ModelSpec) -> Result<Operator> {
    let shape = spec.shape;
    if spec.h1.dim() != shape.d1() || spec.h2.dim() != shape.d2() || spec.h_int.dim() != shape.total() {
        return Err(Error::model("h_int", "dimensions do not match the bipartite shape"));
    }
    let a = kron(&spec.h1, &Operator::identity(shape.d2()))?;
    let b = kron(&Operator::identity(shape.d1()), &spec.h2)?;
    a.add(&b)?.add(&spec.h_int)
}

fn pauli_z() -> CMat {
    Operator::diagonal(&[1.0, -1.0]).into_matrix()
}

/// Two qubits with `H_k = (ω_k/2) σz` and `H_int = g (σ+ ⊗ σ- + σ- ⊗ σ+)`.
///
/// `σz = diag(1, -1)` in the computational basis, so `|0⟩` carries `+ω/2`.
pub fn preset_exchange_qubits(omega1: f64, omega2: f64, g: f64) -> ModelSpec {
    exchange_qubits_with_hbar(omega1, omega2, g, 1.0).expect("exchange preset is always valid")
}

fn exchange_qubits_with_hbar(omega1: f64, omega2: f64, g: f64, hbar: f64) -> Result<ModelSpec> {
    let shape = BipartiteShape::new(2, 2)?;
    let h1 = Operator::new(pauli_z().scale(omega1 / 2.0))?;
    let h2 = Operator::new(pauli_z().scale(omega2 / 2.0))?;
    // σ+ ⊗ σ- + σ- ⊗ σ+ only couples |01⟩ and |10⟩.
    let mut hi = CMat::zeros(4, 4);
    hi[(1, 2)] = Complex64::new(g, 0.0);
    hi[(2, 1)] = Complex64::new(g, 0.0);
    ModelSpec::new(
        shape,
        h1,
        h2,
        Operator::new(hi)?,
        hbar,
        format!("exchange_qubits(omega1={omega1}, omega2={omega2}, g={g})"),
    )
}

/// Gaussian Hermitian matrix with unit spectral radius.
///
/// Entries of `A` are `(x + iy)/√2` with `x, y` standard normal, `H = (A + A†)/2`,
/// and `H` is divided by its largest absolute eigenvalue.
/// Normalised complex Gaussian state, reproducible from `seed`.
pub fn random_state(shape: BipartiteShape, seed: u64) -> Result<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = CVec::from_fn(shape.total(), |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    StateVector::normalized(v, shape, 0.0)
}

fn gaussian_hermitian(n: usize, rng: &mut ChaCha8Rng) -> Result<CMat> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let a = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    });
    let h = (&a + a.adjoint()).scale(0.5);
    let spectrum = spectral_decompose(&Operator::new(h.clone())?)?;
    let radius = spectrum.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if radius == 0.0 {
        return Err(Error::Numeric("degenerate random draw".into()));
    }
    Ok(h.unscale(radius))
}

/// Seeded random model: `H1`, `H2`, `H_int / strength` are independent unit-radius
/// Gaussian Hermitian draws from a `ChaCha8` stream seeded with `seed`, drawn in that order.
pub fn preset_random_dense(d1: usize, d2: usize, strength: f64, seed: u64) -> Result<ModelSpec> {
    random_dense_with_hbar(d1, d2, strength, seed, 1.0)
}

fn random_dense_with_hbar(d1: usize, d2: usize, strength: f64, seed: u64, hbar: f64) -> Result<ModelSpec> {
    if d1 == 0 || d2 == 0 || d1 > d2 {
        return Err(Error::model("params", format!("random_dense requires 1 <= d1 <= d2, got ({d1}, {d2})")));
    }
    if !strength.is_finite() {
        return Err(Error::model("params.strength", "must be finite"));
    }
    let shape = BipartiteShape::new(d1, d2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h1 = gaussian_hermitian(d1, &mut rng)?;
    let h2 = gaussian_hermitian(d2, &mut rng)?;
    let h_int = if strength == 0.0 {
        CMat::zeros(shape.total(), shape.total())
    } else {
        gaussian_hermitian(shape.total(), &mut rng)?.scale(strength)
    };
    ModelSpec::new(
        shape,
        Operator::new(h1)?,
        Operator::new(h2)?,
        Operator::new(h_int)?,
        hbar,
        format!("random_dense(d1={d1}, d2={d2}, strength={strength}, seed={seed})"),
    )
}

pub(crate) fn matrix_to_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

/// Parses a row-major matrix of `[re, im]` pairs.
pub fn matrix_from_json(v: &Value, path: &str, rows: usize, cols: usize) -> Result<CMat> {
    let arr = v.as_array().ok_or_else(|| Error::parse(path, "expected an array of rows"))?;
    if arr.len() != rows {
        return Err(Error::model(path, format!("expected {rows} rows, got {}", arr.len())));
    }
    let mut m = CMat::zeros(rows, cols);
    for (i, row) in arr.iter().enumerate() {
        let row = row.as_array().ok_or_else(|| Error::parse(format!("{path}[{i}]"), "expected a row array"))?;
        if row.len() != cols {
            return Err(Error::model(format!("{path}[{i}]"), format!("expected {cols} entries, got {}", row.len())));
        }
        for (j, z) in row.iter().enumerate() {
            m[(i, j)] = complex_from_json(z, &format!("{path}[{i}][{j}]"))?;
        }
    }
    Ok(m)
}

pub(crate) fn complex_from_json(z: &Value, path: &str) -> Result<Complex64> {
    match z {
        Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
        Value::Array(p) if p.len() == 2 => {
            let re = p[0].as_f64().ok_or_else(|| Error::parse(path, "real part is not a number"))?;
            let im = p[1].as_f64().ok_or_else(|| Error::parse(path, "imaginary part is not a number"))?;
            Ok(Complex64::new(re, im))
        }
        _ => Err(Error::parse(path, "expected [re, im]")),
    }
}

fn get_f64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    obj.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing"))?
        .as_f64()
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "expected a number"))
}

fn get_f64_or(obj: &Map<String, Value>, key: &str, path: &str, default: f64) -> Result<f64> {
    if obj.contains_key(key) {
        get_f64(obj, key, path)
    } else {
        Ok(default)
    }
}

fn get_usize(obj: &Map<String, Value>, key: &str, path: &str) -> Result<usize> {
    obj.get(key)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing"))?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::parse(format!("{path}.{key}"), "expected a non-negative integer"))
}

/// Builds a model from its JSON document.
///
/// Accepts either `{"preset": name, "params": {...}}` or the explicit form
/// `{"d1", "d2", "h1", "h2", "h_int", "hbar"}` with complex entries as `[re, im]`.
/// Error paths are reported relative to the document root.
/// Reads a length-`len` complex vector (entries as numbers or `[re, im]`).
pub fn vector_from_json(v: &Value, path: &str, len: usize) -> Result<CVec> {
    let items = v.as_array().ok_or_else(|| Error::parse(path, "expected an array"))?;
    if items.len() != len {
        return Err(Error::parse(path, format!("expected {len} entries, found {}", items.len())));
    }
    let entries = items
        .iter()
        .enumerate()
        .map(|(i, z)| complex_from_json(z, &format!("{path}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVec::from_vec(entries))
}

pub fn load_model(doc: &Value) -> Result<ModelSpec> {
    load_model_at(doc, "model")
}

pub fn load_model_str(text: &str) -> Result<ModelSpec> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::parse("model", e.to_string()))?;
    load_model(&v)
}

pub(crate) fn load_model_at(doc: &Value, path: &str) -> Result<ModelSpec> {
    let obj = doc.as_object().ok_or_else(|| Error::parse(path, "expected an object"))?;
    if let Some(preset) = obj.get("preset") {
        let name = preset.as_str().ok_or_else(|| Error::parse(format!("{path}.preset"), "expected a string"))?;
        let empty = Map::new();
        let ppath = format!("{path}.params");
        let params = match obj.get("params") {
            None => &empty,
            Some(p) => p.as_object().ok_or_else(|| Error::parse(&ppath, "expected an object"))?,
        };
        let hbar = get_f64_or(params, "hbar", &ppath, 1.0)?;
        return match name {
            "exchange_qubits" => exchange_qubits_with_hbar(
                get_f64(params, "omega1", &ppath)?,
                get_f64(params, "omega2", &ppath)?,
                get_f64(params, "g", &ppath)?,
                hbar,
            ),
            "random_dense" => random_dense_with_hbar(
                get_usize(params, "d1", &ppath)?,
                get_usize(params, "d2", &ppath)?,
                get_f64(params, "strength", &ppath)?,
                get_usize(params, "seed", &ppath)? as u64,
                hbar,
            ),
            other => Err(Error::parse(format!("{path}.preset"), format!("unknown preset `{other}`"))),
        }
        .map_err(|e| prefix_model_error(e, path));
    }
    let d1 = get_usize(obj, "d1", path)?;
    let d2 = get_usize(obj, "d2", path)?;
    let shape = BipartiteShape::new(d1, d2).map_err(|e| Error::model(format!("{path}.d1"), e.to_string()))?;
    let field = |key: &str, n: usize| -> Result<CMat> {
        let v = obj.get(key).ok_or_else(|| Error::parse(format!("{path}.{key}"), "missing"))?;
        matrix_from_json(v, &format!("{path}.{key}"), n, n)
    };
    let h1 = field("h1", d1)?;
    let h2 = field("h2", d2)?;
    let h_int = field("h_int", d1 * d2)?;
    let hbar = get_f64_or(obj, "hbar", path, 1.0)?;
    let label = obj.get("label").and_then(Value::as_str).unwrap_or("explicit").to_string();
    ModelSpec::new(shape, Operator::new(h1)?, Operator::new(h2)?, Operator::new(h_int)?, hbar, label)
        .map_err(|e| prefix_model_error(e, path))
}

fn prefix_model_error(e: Error, path: &str) -> Error {
    match e {
        Error::Model { field, reason } if !field.starts_with(path) => Error::Model { field: format!("{path}.{field}"), reason },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::CVec;

    #[test]
    fn total_hamiltonian_of_free_qubits() {
        let spec = preset_exchange_qubits(1.0, 1.0, 0.0);
        assert_eq!(spec.total_hamiltonian(), &Operator::diagonal(&[1.0, 0.0, 0.0, -1.0]));
    }

    #[test]
    fn exchange_with_zero_coupling_matches_free_sum() {
        let shape = BipartiteShape::new(2, 2).unwrap();
        let h = Operator::diagonal(&[0.5, -0.5]);
        let free = ModelSpec::new(shape, h.clone(), h, Operator::zeros(4), 1.0, "free").unwrap();
        assert_eq!(preset_exchange_qubits(1.0, 1.0, 0.0).total_hamiltonian(), free.total_hamiltonian());
    }

    #[test]
    fn exchange_couples_single_excitation_sector() {
        let spec = preset_exchange_qubits(1.0, 1.5, 0.1);
        let h0 = spec.total_hamiltonian().matrix();
        assert_eq!(h0[(1, 2)].re, 0.1);
        assert_eq!(h0[(0, 3)].norm(), 0.0);
        // Detuned case: ⟨H_int⟩ is nonzero for a superposition inside the sector.
        let v = CVec::from_vec(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.6, 0.0),
            Complex64::new(0.8, 0.0),
            Complex64::new(0.0, 0.0),
        ]);
        assert!((spec.h_int().expectation(&v).re - 2.0 * 0.6 * 0.8 * 0.1).abs() < 1e-15);
    }

    #[test]
    fn random_preset_is_hermitian_and_deterministic() {
        let a = preset_random_dense(2, 3, 1.0, 42).unwrap();
        let b = preset_random_dense(2, 3, 1.0, 42).unwrap();
        assert_eq!(a, b);
        let h0 = a.total_hamiltonian().matrix();
        assert!((h0 - h0.adjoint()).norm() < 1e-12);
        assert!(spectral_decompose(a.total_hamiltonian()).is_ok());
        let c = preset_random_dense(2, 3, 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_preset_zero_strength_has_no_interaction() {
        let spec = preset_random_dense(2, 2, 0.0, 9).unwrap();
        assert_eq!(spec.h_int().matrix().norm(), 0.0);
    }

    #[test]
    fn random_preset_unit_radius() {
        let spec = preset_random_dense(3, 3, 2.0, 1).unwrap();
        for (op, want) in [(spec.h1(), 1.0), (spec.h2(), 1.0), (spec.h_int(), 2.0)] {
            let s = spectral_decompose(op).unwrap();
            let r = s.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((r - want).abs() < 1e-12);
        }
    }

    #[test]
    fn strong_coupling_norm_ratio() {
        let spec = preset_random_dense(2, 3, 5.0, 7).unwrap();
        let bare = (spec.total_hamiltonian().matrix() - spec.h_int().matrix()).norm();
        assert!(spec.h_int().frobenius_norm() / bare > 1.0);
    }

    #[test]
    fn random_preset_rejects_wrong_order() {
        assert!(matches!(preset_random_dense(3, 2, 1.0, 0), Err(Error::Model { .. })));
    }

    #[test]
    fn interaction_is_additive() {
        let spec = preset_random_dense(2, 2, 1.0, 3).unwrap();
        let doubled = spec.with_interaction(spec.h_int().scale(2.0), "x2").unwrap();
        let diff = doubled.total_hamiltonian().matrix() - spec.total_hamiltonian().matrix();
        assert!((diff - spec.h_int().matrix()).norm() < 1e-15);
    }

    #[test]
    fn preset_document_delegates() {
        let doc = json!({"preset": "exchange_qubits", "params": {"omega1": 1, "omega2": 1, "g": 0.1}});
        assert_eq!(load_model(&doc).unwrap(), preset_exchange_qubits(1.0, 1.0, 0.1));
        let doc = json!({"preset": "random_dense", "params": {"d1": 2, "d2": 3, "strength": 1.0, "seed": 42}});
        assert_eq!(load_model(&doc).unwrap(), preset_random_dense(2, 3, 1.0, 42).unwrap());
    }

    #[test]
    fn explicit_document_round_trip() {
        let doc = json!({
            "d1": 2, "d2": 2,
            "h1": [[[0.5, 0.0], [0.0, 0.1]], [[0.0, -0.1], [-0.5, 0.0]]],
            "h2": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]],
            "h_int": [
                [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
                [[0.0, 0.0], [0.0, 0.0], [0.2, 0.0], [0.0, 0.0]],
                [[0.0, 0.0], [0.2, 0.0], [0.0, 0.0], [0.0, 0.0]],
                [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
            ],
            "hbar": 1.0,
            "label": "hand"
        });
        let spec = load_model(&doc).unwrap();
        assert_eq!(spec.to_document(), doc);
        assert_eq!(load_model(&spec.to_document()).unwrap(), spec);
    }

    #[test]
    fn non_hermitian_field_is_named() {
        let doc = json!({
            "d1": 2, "d2": 2,
            "h1": [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
            "h2": [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]],
            "h_int": [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]
        });
        match load_model(&doc) {
            Err(Error::Model { field, .. }) => assert_eq!(field, "model.h1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn schema_errors_carry_paths() {
        let doc = json!({"preset": "exchange_qubits", "params": {"omega1": 1, "g": 0.1}});
        match load_model(&doc) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "model.params.omega2"),
            other => panic!("unexpected {other:?}"),
        }
        let doc = json!({"d1": 2, "d2": 2, "h1": [[[1, 0]]], "h2": [], "h_int": []});
        match load_model(&doc) {
            Err(Error::Model { field, .. }) => assert_eq!(field, "model.h1"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(load_model(&json!({"preset": "nope"})), Err(Error::Parse { .. })));
    }
}
