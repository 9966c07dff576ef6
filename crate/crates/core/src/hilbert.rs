//! Dense complex linear algebra with bipartite structure.
//!
//! Flattening convention, shared by every module: the amplitude of
//! `|i⟩ ⊗ |j⟩` lives at flat index `i * d2 + j` (row-major over subsystem 1).
//! Operators on the universe use the same ordering, which is exactly the
//! ordering produced by the Kronecker product `A ⊗ B`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Default hard cap on the universe dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Tolerance on state normalisation.
pub const NORM_TOL: f64 = 1e-12;

/// Relative tolerance used to accept an operator as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Tolerance on the trace of density matrices handed to [`partial_trace`].
pub const TRACE_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Which half of the bipartition an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Subsystem {
    One,
    Two,
}

impl Subsystem {
    pub const BOTH: [Subsystem; 2] = [Subsystem::One, Subsystem::Two];

    /// 1 or 2.
    pub fn number(self) -> usize {
        match self {
            Subsystem::One => 1,
            Subsystem::Two => 2,
        }
    }

    /// The sign `(-1)^k` that appears in gauge transformation rules.
    pub fn gauge_sign(self) -> f64 {
        match self {
            Subsystem::One => -1.0,
            Subsystem::Two => 1.0,
        }
    }
}

/// Subsystem dimensions `(d1, d2)` with `1 <= d1 <= d2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BipartiteShape {
    d1: usize,
    d2: usize,
}

impl BipartiteShape {
    pub fn new(d1: usize, d2: usize) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return Err(Error::Dimension(format!("subsystem dimensions must be positive, got ({d1}, {d2})")));
        }
        if d1 > d2 {
            return Err(Error::Dimension(format!("expected d1 <= d2, got ({d1}, {d2})")));
        }
        Ok(BipartiteShape { d1, d2 })
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn dim(&self, k: Subsystem) -> usize {
        match k {
            Subsystem::One => self.d1,
            Subsystem::Two => self.d2,
        }
    }

    pub fn total(&self) -> usize {
        self.d1 * self.d2
    }

    #[inline]
    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        i * self.d2 + j
    }
}

/// Normalised pure state of the universe at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVec,
    shape: BipartiteShape,
    time: f64,
}

impl StateVector {
    /// Wraps `amplitudes`, rejecting vectors whose norm is off by more than [`NORM_TOL`].
    pub fn new(amplitudes: CVec, shape: BipartiteShape, time: f64) -> Result<Self> {
        if amplitudes.len() != shape.total() {
            return Err(Error::Dimension(format!(
                "state has {} amplitudes, shape requires {}",
                amplitudes.len(),
                shape.total()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Numeric(format!("state norm {norm} is not 1")));
        }
        Ok(StateVector { amplitudes, shape, time })
    }

    /// Normalises `amplitudes` before wrapping them.
    pub fn normalized(amplitudes: CVec, shape: BipartiteShape, time: f64) -> Result<Self> {
        let norm = amplitudes.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numeric("cannot normalise a zero or non-finite vector".into()));
        }
        Self::new(amplitudes.unscale(norm), shape, time)
    }

    /// `|i⟩ ⊗ |j⟩`.
    pub fn product(shape: BipartiteShape, i: usize, j: usize) -> Result<Self> {
        if i >= shape.d1() || j >= shape.d2() {
            return Err(Error::Dimension(format!(
                "basis state |{i}⟩⊗|{j}⟩ outside shape ({}, {})",
                shape.d1(),
                shape.d2()
            )));
        }
        let mut amps = CVec::zeros(shape.total());
        amps[shape.flat_index(i, j)] = ONE;
        Self::new(amps, shape, 0.0)
    }

    /// `(|00⟩ + |11⟩ + ... ) / sqrt(d1)`.
    pub fn maximally_entangled(shape: BipartiteShape) -> Result<Self> {
        let mut amps = CVec::zeros(shape.total());
        let w = 1.0 / (shape.d1() as f64).sqrt();
        for i in 0..shape.d1() {
            amps[shape.flat_index(i, i)] = Complex64::new(w, 0.0);
        }
        Self::normalized(amps, shape, 0.0)
    }

    pub(crate) fn from_parts_unchecked(amplitudes: CVec, shape: BipartiteShape, time: f64) -> Self {
        StateVector { amplitudes, shape, time }
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn shape(&self) -> BipartiteShape {
        self.shape
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn density_matrix(&self) -> Operator {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        Operator { matrix: m, hermitian: true }
    }

    pub fn coefficient_matrix(&self) -> CMat {
        coefficient_matrix(self)
    }
}

/// Square complex matrix, optionally certified Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: CMat,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CMat) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension(format!("operator must be square, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        Ok(Operator { matrix, hermitian: false })
    }

    /// Validates Hermiticity to [`HERMITIAN_TOL`] relative to `max(1, ‖A‖_F)`.
    pub fn hermitian(matrix: CMat) -> Result<Self> {
        let op = Self::new(matrix)?;
        let asym = relative_asymmetry(&op.matrix);
        if asym > HERMITIAN_TOL {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        Ok(Operator { hermitian: true, ..op })
    }

    pub(crate) fn hermitian_unchecked(matrix: CMat) -> Self {
        Operator { matrix, hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Operator { matrix: CMat::identity(dim, dim), hermitian: true }
    }

    pub fn zeros(dim: usize) -> Self {
        Operator { matrix: CMat::zeros(dim, dim), hermitian: true }
    }

    /// Real diagonal operator.
    pub fn diagonal(values: &[f64]) -> Self {
        let d = DVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
        Operator { matrix: CMat::from_diagonal(&d), hermitian: true }
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        Self::new(CMat::from_fn(n, n, |i, j| Complex64::new(rows[i][j], 0.0)))
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn adjoint(&self) -> Operator {
        Operator { matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator { matrix: self.matrix.scale(s), hermitian: self.hermitian }
    }

    /// Sum of two operators; the result is Hermitian iff both inputs are.
    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("cannot add {}x{} and {}x{}", self.dim(), self.dim(), other.dim(), other.dim())));
        }
        Ok(Operator { matrix: &self.matrix + &other.matrix, hermitian: self.hermitian && other.hermitian })
    }

    /// `⟨v|A|v⟩`.
    pub fn expectation(&self, v: &CVec) -> Complex64 {
        v.dotc(&(&self.matrix * v))
    }
}

/// `‖A − A†‖_F / max(1, ‖A‖_F)`.
pub fn relative_asymmetry(a: &CMat) -> f64 {
    (a - a.adjoint()).norm() / a.norm().max(1.0)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Kronecker product `a ⊗ b` with the default dimension cap.
pub fn kron(a: &Operator, b: &Operator) -> Result<Operator> {
    kron_with_limit(a, b, DEFAULT_MAX_DIM)
}

pub fn kron_with_limit(a: &Operator, b: &Operator, max_dim: usize) -> Result<Operator> {
    let dim = a.dim().saturating_mul(b.dim());
    if dim > max_dim {
        return Err(Error::Size { dim, max: max_dim });
    }
    Ok(Operator { matrix: a.matrix.kronecker(&b.matrix), hermitian: a.hermitian && b.hermitian })
}

/// Reduced density matrix of `keep`, tracing out the other subsystem.
pub fn partial_trace(rho: &Operator, shape: BipartiteShape, keep: Subsystem) -> Result<Operator> {
    if rho.dim() != shape.total() {
        return Err(Error::Dimension(format!(
            "density matrix is {}x{}, shape ({}, {}) requires {}",
            rho.dim(),
            rho.dim(),
            shape.d1(),
            shape.d2(),
            shape.total()
        )));
    }
    let asym = relative_asymmetry(rho.matrix());
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > TRACE_TOL {
        return Err(Error::Numeric(format!("density matrix trace {tr} is not 1")));
    }
    Ok(Operator::hermitian_unchecked(partial_trace_matrix(rho.matrix(), shape, keep)))
}

pub(crate) fn partial_trace_matrix(rho: &CMat, shape: BipartiteShape, keep: Subsystem) -> CMat {
    let (d1, d2) = (shape.d1(), shape.d2());
    match keep {
        Subsystem::One => CMat::from_fn(d1, d1, |i, ip| (0..d2).map(|j| rho[(i * d2 + j, ip * d2 + j)]).sum()),
        Subsystem::Two => CMat::from_fn(d2, d2, |j, jp| (0..d1).map(|i| rho[(i * d2 + j, i * d2 + jp)]).sum()),
    }
}

/// The `d1 × d2` matrix `C[i][j]` = amplitude of `|i⟩ ⊗ |j⟩`.
pub fn coefficient_matrix(psi: &StateVector) -> CMat {
    let shape = psi.shape();
    let amps = psi.amplitudes();
    CMat::from_fn(shape.d1(), shape.d2(), |i, j| amps[shape.flat_index(i, j)])
}

/// Inverse of [`coefficient_matrix`].
pub fn flatten(c: &CMat) -> CVec {
    let (d1, d2) = c.shape();
    CVec::from_fn(d1 * d2, |k, _| c[(k / d2, k % d2)])
}

/// Hermitian eigendecomposition `h = V diag(values) V†`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unitary; column `j` pairs with `values[j]`. The largest-magnitude entry
    /// of every column is real and positive.
    pub vectors: CMat,
}

impl Spectrum {
    /// `V diag(f(values)) V†`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        scaled * self.vectors.adjoint()
    }

    pub fn reconstruct(&self) -> CMat {
        self.apply_fn(|b| Complex64::new(b, 0.0))
    }
}

pub fn spectral_decompose(h: &Operator) -> Result<Spectrum> {
    let asym = relative_asymmetry(h.matrix());
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    // Symmetrise away the tolerated residue so the solver sees an exactly Hermitian input.
    let sym = (h.matrix() + h.matrix().adjoint()).scale(0.5);
    let n = sym.nrows();
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = CMat::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    fix_column_phases(&mut vectors);
    Ok(Spectrum { values, vectors })
}

/// Makes the largest-magnitude entry of each column real positive (first index wins ties).
pub(crate) fn fix_column_phases(m: &mut CMat) -> Vec<Complex64> {
    let mut phases = Vec::with_capacity(m.ncols());
    for mut col in m.column_iter_mut() {
        let phase = leading_phase(col.as_slice());
        col *= phase.conj();
        phases.push(phase);
    }
    phases
}

/// Unit phase of the largest-magnitude entry (first index wins ties).
pub(crate) fn leading_phase(v: &[Complex64]) -> Complex64 {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = i;
        }
    }
    if best_mag <= 0.0 {
        ONE
    } else {
        v[best] / best_mag
    }
}

/// Returns `((a + a†)/2, ‖a − a†‖_F / max(1, ‖a‖_F))`.
pub fn hermitize(a: &Operator) -> (Operator, f64) {
    let asym = relative_asymmetry(a.matrix());
    let h = (a.matrix() + a.matrix().adjoint()).scale(0.5);
    (Operator::hermitian_unchecked(h), asym)
}

/// Thin SVD with singular values sorted in nonincreasing order: `m = U diag(s) Vh`.
pub(crate) fn svd_sorted(m: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let svd = nalgebra::linalg::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let u = svd.u.ok_or_else(|| Error::Numeric("SVD returned no U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD returned no V†".into()))?;
    let r = svd.singular_values.len();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s = order.iter().map(|&j| svd.singular_values[j]).collect();
    let u_sorted = CMat::from_fn(u.nrows(), r, |i, c| u[(i, order[c])]);
    let vt_sorted = CMat::from_fn(r, vt.ncols(), |c, j| vt[(order[c], j)]);
    Ok((u_sorted, s, vt_sorted))
}

/// Closest isometry to `m` in Frobenius norm (`U Vh` from the thin SVD),
/// together with the smallest singular value of `m`.
pub(crate) fn polar_isometry(m: &CMat) -> Result<(CMat, f64)> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Ok((m.clone(), 1.0));
    }
    let (u, s, vt) = svd_sorted(m)?;
    let smin = s.last().copied().unwrap_or(0.0);
    Ok((u * vt, smin))
}

/// `‖B†B − 1‖_F`.
pub fn orthonormality_defect(b: &CMat) -> f64 {
    let n = b.ncols();
    (b.adjoint() * b - CMat::identity(n, n)).norm()
}
