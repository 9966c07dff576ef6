//! Time-local Schmidt decomposition and its alignment into a continuous basis path.
//!
//! A raw frame comes straight from the SVD of the coefficient matrix and
//! follows a deterministic phase convention. Raw frames along a trajectory
//! are then aligned pairwise in time order:
//!
//! 1. columns are reordered by optimal assignment on `|⟨ref_i|raw_j⟩|`;
//! 2. degenerate occupied blocks are rotated onto the reference by the
//!    closest unitary (basis 2 gets the conjugate rotation);
//! 3. unoccupied columns are matched to the reference inside the
//!    orthogonal complement of the occupied ones, independently per subsystem;
//! 4. each occupied pair gets phases `e^{-iθ}, e^{+iθ}` making the basis-1
//!    overlap with the reference real positive.
//!
//! The reference is the previous aligned frame pushed through the gauge's
//! reference propagator (the bare propagator `e^{-iH_k dt/ħ}` by default).

mod assignment;

use std::sync::Arc;

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    coefficient_matrix, leading_phase, polar_isometry, spectral_decompose, svd_sorted, BipartiteShape, CMat, CVec,
    Spectrum, StateVector, Subsystem, ZERO,
};
use crate::models::ModelSpec;
use crate::propagator::{center_index, TimeGrid, Trajectory};

pub use assignment::maximize_assignment;

/// Consecutive occupied Schmidt vectors must overlap at least this much.
pub const CONTINUITY_MIN_OVERLAP: f64 = 0.5;

/// Phase convention used when aligning frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeConvention {
    /// Each occupied basis-1 vector keeps a real positive overlap with its
    /// bare-evolved predecessor.
    #[default]
    #[serde(rename = "bare_parallel")]
    BareParallelTransport,
    /// Same rule with the identity as reference propagator.
    ZeroDiagonal,
    /// Bare transport followed by `θ_j(t) = α t` for every `j`, i.e. basis 1
    /// picks up `e^{+iαt}` and basis 2 `e^{-iαt}`.
    LinearShift { alpha: f64 },
}

impl GaugeConvention {
    pub fn validate(&self) -> Result<()> {
        match self {
            GaugeConvention::LinearShift { alpha } if !alpha.is_finite() => {
                Err(Error::parse("gauge.alpha", "must be finite"))
            }
            _ => Ok(()),
        }
    }

    fn alpha(&self) -> f64 {
        match self {
            GaugeConvention::LinearShift { alpha } => *alpha,
            _ => 0.0,
        }
    }
}

/// Fingerprint identifying the gauge a frame was produced in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GaugeId(u64);

impl GaugeId {
    fn mix(seed: u64, words: impl IntoIterator<Item = u64>) -> u64 {
        // FNV-1a over 64-bit words.
        let mut h = seed ^ 0xcbf2_9ce4_8422_2325;
        for w in words {
            for b in w.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn of_convention(g: &GaugeConvention) -> Self {
        let words: Vec<u64> = match g {
            GaugeConvention::BareParallelTransport => vec![1],
            GaugeConvention::ZeroDiagonal => vec![2],
            GaugeConvention::LinearShift { alpha } => vec![3, alpha.to_bits()],
        };
        GaugeId(Self::mix(0, words))
    }

    pub fn derive(self, words: impl IntoIterator<Item = u64>) -> Self {
        GaugeId(Self::mix(self.0, words))
    }
}

/// Schmidt coefficients and paired local bases at one instant.
///
/// Raw frames have nonincreasing `lambdas`; alignment permutes them.
#[derive(Debug, Clone, PartialEq)]
pub struct SchmidtFrame {
    time: f64,
    lambdas: Vec<f64>,
    basis1: CMat,
    basis2: CMat,
    rank: usize,
    rank_tol: f64,
    gauge: Option<GaugeId>,
}

impl SchmidtFrame {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_sq(&self) -> Vec<f64> {
        self.lambdas.iter().map(|l| l * l).collect()
    }

    /// `d1 × d1`, columns `|φ_j^(1)⟩`.
    pub fn basis1(&self) -> &CMat {
        &self.basis1
    }

    /// `d2 × d1`, columns `|φ_j^(2)⟩`.
    pub fn basis2(&self) -> &CMat {
        &self.basis2
    }

    pub fn basis(&self, k: Subsystem) -> &CMat {
        match k {
            Subsystem::One => &self.basis1,
            Subsystem::Two => &self.basis2,
        }
    }

    /// Number of coefficients above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn is_aligned(&self) -> bool {
        self.gauge.is_some()
    }

    pub fn gauge(&self) -> Option<GaugeId> {
        self.gauge
    }

    pub fn is_occupied(&self, j: usize) -> bool {
        self.lambdas[j] > self.rank_tol
    }

    pub fn occupied(&self) -> Vec<usize> {
        (0..self.lambdas.len()).filter(|&j| self.is_occupied(j)).collect()
    }

    pub fn shape(&self) -> BipartiteShape {
        BipartiteShape::new(self.basis1.nrows(), self.basis2.nrows()).expect("frame shapes are valid")
    }

    /// `Σ_j λ_j |φ_j^(1)⟩ ⊗ |φ_j^(2)⟩` in the flat layout.
    pub fn reconstruct(&self) -> CVec {
        let shape = self.shape();
        let mut out = CVec::zeros(shape.total());
        for (j, &l) in self.lambdas.iter().enumerate() {
            for a in 0..shape.d1() {
                let ca = self.basis1[(a, j)] * l;
                if ca == ZERO {
                    continue;
                }
                for b in 0..shape.d2() {
                    out[shape.flat_index(a, b)] += ca * self.basis2[(b, j)];
                }
            }
        }
        out
    }

    /// `ρ^(k) = Σ_j λ_j² |φ_j^(k)⟩⟨φ_j^(k)|`.
    pub fn reduced_density(&self, k: Subsystem) -> CMat {
        let b = self.basis(k);
        let mut weighted = b.clone();
        for (j, mut col) in weighted.column_iter_mut().enumerate() {
            col *= Complex64::new(self.lambdas[j] * self.lambdas[j], 0.0);
        }
        weighted * b.adjoint()
    }

    pub(crate) fn with_phases(&self, phases: &[f64], gauge: GaugeId) -> SchmidtFrame {
        let mut out = self.clone();
        for (j, &theta) in phases.iter().enumerate() {
            let p = Complex64::from_polar(1.0, theta);
            out.basis1.column_mut(j).scale_mut_c(p);
            out.basis2.column_mut(j).scale_mut_c(p.conj());
        }
        out.gauge = Some(gauge);
        out
    }
}

trait ScaleMutC {
    fn scale_mut_c(&mut self, p: Complex64);
}

impl<S: nalgebra::StorageMut<Complex64, nalgebra::Dyn, nalgebra::U1>> ScaleMutC
    for nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>
{
    fn scale_mut_c(&mut self, p: Complex64) {
        for z in self.iter_mut() {
            *z *= p;
        }
    }
}

/// Raw Schmidt decomposition of `psi`: `C = U Σ V†`, `basis1 = U`, `basis2 = conj(V)`.
///
/// The largest-magnitude entry of every basis-1 column is made real
/// positive and the paired basis-2 column takes the opposite phase.
pub fn schmidt_decompose(psi: &StateVector, rank_tol: f64) -> Result<SchmidtFrame> {
    let c = coefficient_matrix(psi);
    let (mut u, s, vt) = svd_sorted(&c)?;
    let d1 = c.nrows();
    let d2 = c.ncols();
    let mut basis2 = CMat::from_fn(d2, d1, |j, k| vt[(k, j)]);
    for k in 0..d1 {
        let p = leading_phase(u.column(k).as_slice());
        u.column_mut(k).scale_mut_c(p.conj());
        basis2.column_mut(k).scale_mut_c(p);
    }
    let rank = s.iter().filter(|&&l| l > rank_tol).count();
    Ok(SchmidtFrame { time: psi.time(), lambdas: s, basis1: u, basis2, rank, rank_tol, gauge: None })
}

/// Cached bare spectra used to build the alignment reference propagators.
#[derive(Debug, Clone)]
pub struct ReferenceEvolution {
    h1: Spectrum,
    h2: Spectrum,
    hbar: f64,
}

impl ReferenceEvolution {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        Ok(ReferenceEvolution {
            h1: spectral_decompose(spec.h1())?,
            h2: spectral_decompose(spec.h2())?,
            hbar: spec.hbar(),
        })
    }

    /// `e^{-i H_k dt/ħ}`.
    pub fn bare_propagator(&self, k: Subsystem, dt: f64) -> CMat {
        let s = match k {
            Subsystem::One => &self.h1,
            Subsystem::Two => &self.h2,
        };
        s.apply_fn(|b| Complex64::from_polar(1.0, -b * dt / self.hbar))
    }

    fn reference(&self, gauge: &GaugeConvention, k: Subsystem, dt: f64, prev: &CMat) -> CMat {
        match gauge {
            GaugeConvention::ZeroDiagonal => prev.clone(),
            _ => self.bare_propagator(k, dt) * prev,
        }
    }
}

fn columns(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), idx.len(), |i, c| m[(i, idx[c])])
}

fn set_columns(m: &mut CMat, idx: &[usize], src: &CMat) {
    for (c, &j) in idx.iter().enumerate() {
        m.set_column(j, &src.column(c));
    }
}

/// Groups indices whose coefficients lie within `tol` of each other (transitively).
fn degenerate_blocks(lambdas: &[f64], idx: &[usize], tol: f64) -> Vec<Vec<usize>> {
    let mut sorted = idx.to_vec();
    sorted.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]).then(a.cmp(&b)));
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for j in sorted {
        match blocks.last_mut() {
            Some(block) if lambdas[*block.last().unwrap()] - lambdas[j] <= tol => block.push(j),
            _ => blocks.push(vec![j]),
        }
    }
    blocks
        .into_iter()
        .filter(|b| b.len() > 1)
        .map(|mut b| {
            b.sort();
            b
        })
        .collect()
}

/// Aligns `raw` to the already aligned `prev` (see the module docs for the steps).
///
/// `dt = raw.time − prev.time` must be non-negative. Fails with
/// [`Error::Continuity`] when an occupied vector overlaps its reference by
/// less than [`CONTINUITY_MIN_OVERLAP`].
pub fn align_frame(
    prev: &SchmidtFrame,
    raw: &SchmidtFrame,
    reference: &ReferenceEvolution,
    gauge: &GaugeConvention,
    degeneracy_tol: f64,
) -> Result<SchmidtFrame> {
    let gauge_id = prev
        .gauge
        .ok_or_else(|| Error::Usage("previous frame is not aligned".into()))?;
    if prev.basis1.shape() != raw.basis1.shape() || prev.basis2.shape() != raw.basis2.shape() {
        return Err(Error::Dimension("frames have different shapes".into()));
    }
    let dt = raw.time - prev.time;
    if dt < 0.0 {
        return Err(Error::Usage(format!("frames out of order: {} after {}", raw.time, prev.time)));
    }
    let d1 = raw.lambdas.len();
    let ref1 = reference.reference(gauge, Subsystem::One, dt, &prev.basis1);
    let ref2 = reference.reference(gauge, Subsystem::Two, dt, &prev.basis2);
    let lambda_max = raw.lambdas.iter().cloned().fold(0.0, f64::max);
    let block_tol = degeneracy_tol * lambda_max;

    // 1. ordering
    let overlap = ref1.adjoint() * &raw.basis1;
    let score: Vec<Vec<f64>> = (0..d1).map(|i| (0..d1).map(|j| overlap[(i, j)].norm()).collect()).collect();
    let perm = maximize_assignment(&score);
    warn_on_ambiguity(&score, &perm, raw, block_tol);
    let lambdas: Vec<f64> = perm.iter().map(|&j| raw.lambdas[j]).collect();
    let mut b1 = columns(&raw.basis1, &perm);
    let mut b2 = columns(&raw.basis2, &perm);
    let occupied: Vec<usize> = (0..d1).filter(|&j| lambdas[j] > raw.rank_tol).collect();
    let unoccupied: Vec<usize> = (0..d1).filter(|&j| lambdas[j] <= raw.rank_tol).collect();

    // 2. degenerate occupied blocks: closest unitary onto the reference
    for block in degenerate_blocks(&lambdas, &occupied, block_tol) {
        let raw_b = columns(&b1, &block);
        let (rot, _) = polar_isometry(&(raw_b.adjoint() * columns(&ref1, &block)))?;
        set_columns(&mut b1, &block, &(raw_b * &rot));
        let raw_b2 = columns(&b2, &block);
        set_columns(&mut b2, &block, &(raw_b2 * rot.map(|z| z.conj())));
    }

    // 3. unoccupied columns, matched independently in each subsystem
    if !unoccupied.is_empty() {
        let own = columns(&b1, &unoccupied);
        let (rot, _) = polar_isometry(&(own.adjoint() * columns(&ref1, &unoccupied)))?;
        set_columns(&mut b1, &unoccupied, &(own * rot));
        let matched = match_in_complement(&b2, &occupied, &unoccupied, &columns(&ref2, &unoccupied))?;
        set_columns(&mut b2, &unoccupied, &matched);
    }

    // 4. pair phases
    for &j in &occupied {
        let z = ref1.column(j).dotc(&b1.column(j));
        if z.norm() > 0.0 {
            let p = z / z.norm();
            b1.column_mut(j).scale_mut_c(p.conj());
            b2.column_mut(j).scale_mut_c(p);
        }
    }
    let alpha = gauge.alpha();
    if alpha != 0.0 {
        let p = Complex64::from_polar(1.0, alpha * dt);
        for j in 0..d1 {
            b1.column_mut(j).scale_mut_c(p);
            b2.column_mut(j).scale_mut_c(p.conj());
        }
    }

    for &j in &occupied {
        if prev.lambdas[j] <= prev.rank_tol {
            continue;
        }
        let ov = ref1.column(j).dotc(&b1.column(j)).norm();
        if ov < CONTINUITY_MIN_OVERLAP {
            return Err(Error::Continuity {
                time: raw.time,
                reason: format!("Schmidt vector {j} overlaps its predecessor by only {ov:.3}"),
            });
        }
    }

    Ok(SchmidtFrame { time: raw.time, lambdas, basis1: b1, basis2: b2, rank: raw.rank, rank_tol: raw.rank_tol, gauge: Some(gauge_id) })
}

/// Picks orthonormal vectors for the unoccupied basis-2 slots inside the
/// orthogonal complement of the occupied columns, as close as possible to `target`.
fn match_in_complement(b2: &CMat, occupied: &[usize], unoccupied: &[usize], target: &CMat) -> Result<CMat> {
    let d2 = b2.nrows();
    let occ = columns(b2, occupied);
    let projector = CMat::identity(d2, d2) - &occ * occ.adjoint();
    let projected = &projector * target;
    let (iso, smin) = polar_isometry(&projected)?;
    if smin > 1e-6 {
        return Ok(iso);
    }
    // Reference leaves the complement: fall back to the raw unoccupied vectors.
    let own = columns(b2, unoccupied);
    let (rot, _) = polar_isometry(&(own.adjoint() * target))?;
    Ok(own * rot)
}

fn warn_on_ambiguity(score: &[Vec<f64>], perm: &[usize], raw: &SchmidtFrame, block_tol: f64) {
    for (i, row) in score.iter().enumerate() {
        let chosen = perm[i];
        if !raw.is_occupied(chosen) || row[chosen] < 0.1 {
            continue;
        }
        for (j, &s) in row.iter().enumerate() {
            if j != chosen
                && raw.is_occupied(j)
                && (s - row[chosen]).abs() < 1e-9
                && (raw.lambdas[j] - raw.lambdas[chosen]).abs() > block_tol
            {
                warn!(
                    "ambiguous Schmidt ordering at t = {}: columns {chosen} and {j} overlap equally; keeping the lower index",
                    raw.time
                );
                return;
            }
        }
    }
}

/// Aligned Schmidt frames at every sample time of a trajectory.
#[derive(Debug, Clone)]
pub struct FrameSeries {
    trajectory: Arc<Trajectory>,
    frames: Vec<SchmidtFrame>,
    gauge: GaugeConvention,
    gauge_id: GaugeId,
    degeneracy_tol: f64,
}

impl FrameSeries {
    pub fn frames(&self) -> &[SchmidtFrame] {
        &self.frames
    }

    pub fn trajectory(&self) -> &Arc<Trajectory> {
        &self.trajectory
    }

    pub fn spec(&self) -> &Arc<ModelSpec> {
        self.trajectory.spec()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.trajectory.grid()
    }

    pub fn n_points(&self) -> usize {
        self.grid().n_points()
    }

    pub fn gauge(&self) -> &GaugeConvention {
        &self.gauge
    }

    pub fn gauge_id(&self) -> GaugeId {
        self.gauge_id
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    /// Frame at grid point `i`.
    pub fn center(&self, i: usize) -> &SchmidtFrame {
        &self.frames[center_index(i)]
    }

    /// `(t−δ, t, t+δ)` frames around grid point `i`.
    pub fn stencil(&self, i: usize) -> Result<[&SchmidtFrame; 3]> {
        if i >= self.n_points() {
            return Err(Error::Usage(format!("grid index {i} out of range ({} points)", self.n_points())));
        }
        let c = center_index(i);
        Ok([&self.frames[c - 1], &self.frames[c], &self.frames[c + 1]])
    }

    pub(crate) fn with_frames(&self, frames: Vec<SchmidtFrame>, gauge_id: GaugeId) -> FrameSeries {
        FrameSeries { frames, gauge_id, ..self.clone() }
    }
}

/// Decomposes every sample of `traj` (in parallel) and aligns the frames in time order.
pub fn track(traj: Arc<Trajectory>, gauge: GaugeConvention, rank_tol: f64, degeneracy_tol: f64) -> Result<FrameSeries> {
    gauge.validate()?;
    let reference = ReferenceEvolution::new(traj.spec())?;
    let raw: Vec<SchmidtFrame> = traj
        .states()
        .par_iter()
        .map(|s| schmidt_decompose(s, rank_tol))
        .collect::<Result<_>>()?;
    let gauge_id = GaugeId::of_convention(&gauge);
    let mut frames = Vec::with_capacity(raw.len());
    let mut iter = raw.into_iter();
    let first = iter.next().ok_or_else(|| Error::Usage("empty trajectory".into()))?;
    let theta0 = gauge.alpha() * first.time;
    frames.push(first.with_phases(&vec![theta0; first.lambdas.len()], gauge_id));
    for r in iter {
        let next = align_frame(frames.last().unwrap(), &r, &reference, &gauge, degeneracy_tol)?;
        frames.push(next);
    }
    Ok(FrameSeries { trajectory: traj, frames, gauge, gauge_id, degeneracy_tol })
}

/// `−Σ_j λ_j² ln λ_j²`, with `0 ln 0 = 0`.
pub fn entanglement_entropy(frame: &SchmidtFrame) -> f64 {
    let s: f64 = frame
        .lambdas
        .iter()
        .map(|l| l * l)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    s.max(0.0)
}
