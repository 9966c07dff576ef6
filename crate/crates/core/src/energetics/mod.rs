//! Local effective Hamiltonians, internal energies and the reduced-state
//! equation of motion, all built from a tracked [`FrameSeries`].
//!
//! Basis derivatives are central differences over the `(t−δ, t, t+δ)`
//! stencil stored with every grid point.

mod gauge;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    hermitize, partial_trace_matrix, relative_asymmetry, spectral_decompose, CMat, Operator, Spectrum, StateVector,
    Subsystem, I, ZERO,
};
use crate::models::ModelSpec;
use crate::propagator::{sample_trajectory, TimeGrid};
use crate::schmidt::{entanglement_entropy, track, FrameSeries, GaugeConvention, GaugeId, SchmidtFrame};
use crate::tolerances::Tolerances;

pub use gauge::{apply_gauge, gauge_transform_check, GaugeCheckReport, GaugeSpec};

/// Generator of the Schmidt-basis motion of one subsystem at one grid time.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    subsystem: Subsystem,
    time: f64,
    h_tilde: Operator,
    h_ls: Option<Operator>,
    h_x: Option<Operator>,
    asymmetry: f64,
    occupied_only: bool,
    gauge: GaugeId,
}

impl EffectiveHamiltonian {
    pub fn subsystem(&self) -> Subsystem {
        self.subsystem
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Hermitized generator. With `occupied_only` set this is `P H̃ P`, the
    /// restriction to the occupied Schmidt subspace.
    pub fn h_tilde(&self) -> &Operator {
        &self.h_tilde
    }

    /// Part of `H̃ − H_bare` that commutes with `H_bare`; `None` before [`split_effective`].
    pub fn h_ls(&self) -> Option<&Operator> {
        self.h_ls.as_ref()
    }

    /// Off-diagonal remainder in the bare eigenbasis; `None` before [`split_effective`].
    pub fn h_x(&self) -> Option<&Operator> {
        self.h_x.as_ref()
    }

    /// Relative anti-Hermitian part of the raw finite-difference generator.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn occupied_only(&self) -> bool {
        self.occupied_only
    }

    pub fn gauge(&self) -> GaugeId {
        self.gauge
    }
}

fn require_aligned(series: &FrameSeries, frames: &[&SchmidtFrame]) -> Result<()> {
    if frames.iter().all(|f| f.gauge() == Some(series.gauge_id())) {
        Ok(())
    } else {
        Err(Error::Usage("stencil frames are not aligned in the series gauge".into()))
    }
}

/// `(B(t+δ) − B(t−δ)) / 2δ` for the Schmidt basis of subsystem `k`.
fn basis_derivative(series: &FrameSeries, k: Subsystem, i: usize) -> Result<CMat> {
    let [m, c, p] = series.stencil(i)?;
    require_aligned(series, &[m, c, p])?;
    let delta = series.grid().substep();
    Ok((p.basis(k) - m.basis(k)) / Complex64::new(2.0 * delta, 0.0))
}

/// `H̃ = iħ Σ_j |φ̇_j⟩⟨φ_j|` at grid point `i`, with default tolerances.
pub fn effective_hamiltonian(series: &FrameSeries, k: Subsystem, i: usize) -> Result<EffectiveHamiltonian> {
    effective_hamiltonian_with(series, k, i, &Tolerances::default())
}

/// As [`effective_hamiltonian`]. The full matrix is formed when the centre frame
/// has rank `d_k`; otherwise the occupied-subspace block
/// `M_ab = iħ⟨φ_a|φ̇_b⟩` is embedded and `occupied_only` is set.
pub fn effective_hamiltonian_with(
    series: &FrameSeries,
    k: Subsystem,
    i: usize,
    tol: &Tolerances,
) -> Result<EffectiveHamiltonian> {
    let centre = series.center(i);
    let bdot = basis_derivative(series, k, i)?;
    let b0 = centre.basis(k);
    let ihbar = I * series.spec().hbar();
    let dk = b0.nrows();
    let full = centre.rank() == dk;
    let raw = if full {
        (&bdot * b0.adjoint()) * ihbar
    } else {
        let occ = centre.occupied();
        let b_occ = CMat::from_fn(dk, occ.len(), |r, c| b0[(r, occ[c])]);
        let bdot_occ = CMat::from_fn(dk, occ.len(), |r, c| bdot[(r, occ[c])]);
        let m = (b_occ.adjoint() * bdot_occ) * ihbar;
        &b_occ * m * b_occ.adjoint()
    };
    let asymmetry = relative_asymmetry(&raw);
    if asymmetry > tol.max_stencil_asymmetry {
        return Err(Error::StencilQuality { time: centre.time(), asymmetry });
    }
    let (h_tilde, _) = hermitize(&Operator::new(raw)?);
    Ok(EffectiveHamiltonian {
        subsystem: k,
        time: centre.time(),
        h_tilde,
        h_ls: None,
        h_x: None,
        asymmetry,
        occupied_only: !full,
        gauge: series.gauge_id(),
    })
}

/// Bare eigenvalues grouped into degenerate blocks; `block[j]` is the block label of level `j`.
fn bare_blocks(spectrum: &Spectrum, degeneracy_tol: f64) -> Vec<usize> {
    let scale = spectrum.values.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut labels = Vec::with_capacity(spectrum.values.len());
    let mut label = 0;
    for (j, &b) in spectrum.values.iter().enumerate() {
        if j > 0 && b - spectrum.values[j - 1] > degeneracy_tol * scale {
            label += 1;
        }
        labels.push(label);
    }
    labels
}

fn split_by_blocks(delta_bare: &CMat, blocks: &[usize], v: &CMat) -> (Operator, Operator) {
    let n = blocks.len();
    let ls = CMat::from_fn(n, n, |a, b| if blocks[a] == blocks[b] { delta_bare[(a, b)] } else { ZERO });
    let x = delta_bare - &ls;
    let back = |m: CMat| hermitize(&Operator::hermitian_unchecked(v * m * v.adjoint())).0;
    (back(ls), back(x))
}

/// Splits `H̃ = H_bare + H_LS + H_X` in the bare eigenbasis of subsystem `k`.
///
/// Within a degenerate bare eigenspace the whole block counts as diagonal,
/// so `[H_LS, H_bare] = 0` holds exactly.
pub fn split_effective(eff: &EffectiveHamiltonian, spec: &ModelSpec) -> Result<EffectiveHamiltonian> {
    if eff.occupied_only {
        return Err(Error::Unsupported(format!(
            "split needs the full generator; subsystem {} at t = {} is occupied-only",
            eff.subsystem.number(),
            eff.time
        )));
    }
    let bare = spec.bare(eff.subsystem);
    let spectrum = spectral_decompose(bare)?;
    let v = &spectrum.vectors;
    let delta = eff.h_tilde.matrix() - bare.matrix();
    let delta_bare = v.adjoint() * delta * v;
    let (h_ls, h_x) = split_by_blocks(&delta_bare, &bare_blocks(&spectrum, Tolerances::default().degeneracy_tol), v);
    Ok(EffectiveHamiltonian { h_ls: Some(h_ls), h_x: Some(h_x), ..eff.clone() })
}

/// Bare-frame projections `r_jl(t) = e^{i b_j t/ħ} ⟨b_j|φ_l(t)⟩` at the three stencil times.
fn projections(series: &FrameSeries, k: Subsystem, i: usize, spectrum: &Spectrum) -> Result<[CMat; 3]> {
    let frames = series.stencil(i)?;
    require_aligned(series, &frames)?;
    let hbar = series.spec().hbar();
    let dk = spectrum.values.len();
    if frames[1].rank() != dk {
        return Err(Error::Unsupported(format!(
            "projection formulas need rank {dk} at t = {}, found {}",
            frames[1].time(),
            frames[1].rank()
        )));
    }
    Ok(frames.map(|f| {
        let mut r = spectrum.vectors.adjoint() * f.basis(k);
        for (j, mut row) in r.row_iter_mut().enumerate() {
            row *= Complex64::from_polar(1.0, spectrum.values[j] * f.time() / hbar);
        }
        r
    }))
}

/// `H_LS` and `H_X` assembled directly from the time derivatives of the
/// bare-frame projections `r_jl`, independently of [`split_effective`].
///
/// Times are absolute (origin at `t = 0`).
pub fn lamb_shift_from_projections(series: &FrameSeries, k: Subsystem, i: usize) -> Result<(Operator, Operator)> {
    let spec = series.spec();
    let hbar = spec.hbar();
    let spectrum = spectral_decompose(spec.bare(k))?;
    let [rm, r0, rp] = projections(series, k, i, &spectrum)?;
    let delta = series.grid().substep();
    let rdot = (rp - rm) / Complex64::new(2.0 * delta, 0.0);
    let s = rdot * r0.adjoint();
    let t = series.center(i).time();
    let b = &spectrum.values;
    // Δ_jm = iħ S_jm e^{i(b_m − b_j)t/ħ} is H̃ − H_bare in the bare eigenbasis.
    let n = b.len();
    let delta_bare = CMat::from_fn(n, n, |j, m| I * hbar * s[(j, m)] * Complex64::from_polar(1.0, (b[m] - b[j]) * t / hbar));
    Ok(split_by_blocks(&delta_bare, &bare_blocks(&spectrum, Tolerances::default().degeneracy_tol), &spectrum.vectors))
}

/// `max_{αβ} |Σ_l r_αl r*_βl e^{i(b_β − b_α)t/ħ} − δ_αβ|` at the centre frame.
pub fn projection_orthonormality_residual(series: &FrameSeries, k: Subsystem, i: usize) -> Result<f64> {
    let spec = series.spec();
    let hbar = spec.hbar();
    let spectrum = spectral_decompose(spec.bare(k))?;
    let [_, r0, _] = projections(series, k, i, &spectrum)?;
    let t = series.center(i).time();
    let b = &spectrum.values;
    let g = &r0 * r0.adjoint();
    let mut worst = 0.0f64;
    for a in 0..b.len() {
        for c in 0..b.len() {
            let z = g[(a, c)] * Complex64::from_polar(1.0, (b[c] - b[a]) * t / hbar);
            let target = if a == c { 1.0 } else { 0.0 };
            worst = worst.max((z - target).norm());
        }
    }
    Ok(worst)
}

fn real_expectation(z: Complex64, scale: f64, what: &str) -> Result<f64> {
    let limit = Tolerances::default().imaginary_residue * scale.max(1.0);
    if z.im.abs() > limit {
        return Err(Error::Numeric(format!("{what} has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// `U⁽⁰⁾ = ⟨ψ|H⁽⁰⁾|ψ⟩`.
pub fn total_energy(psi: &StateVector, spec: &ModelSpec) -> Result<f64> {
    if psi.shape() != spec.shape() {
        return Err(Error::Dimension("state shape does not match the model".into()));
    }
    let h0 = spec.total_hamiltonian();
    real_expectation(h0.expectation(psi.amplitudes()), h0.frobenius_norm(), "total energy")
}

/// `U⁽ᵏ⁾ = Σ_j λ_j² ⟨φ_j|H̃|φ_j⟩`; only occupied columns contribute.
pub fn local_energy(frame: &SchmidtFrame, eff: &EffectiveHamiltonian) -> Result<f64> {
    if frame.gauge() != Some(eff.gauge) {
        return Err(Error::Usage("frame and effective Hamiltonian belong to different gauges".into()));
    }
    if frame.time() != eff.time {
        return Err(Error::Usage(format!("frame at t = {} paired with generator at t = {}", frame.time(), eff.time)));
    }
    let b = frame.basis(eff.subsystem);
    let h = eff.h_tilde.matrix();
    let mut u = ZERO;
    for j in frame.occupied() {
        let col = b.column(j);
        u += col.dotc(&(h * col)) * frame.lambdas()[j].powi(2);
    }
    real_expectation(u, eff.h_tilde.frobenius_norm(), "local energy")
}

/// `|u0 − u1 − u2|`.
pub fn additivity_residual(u0: f64, u1: f64, u2: f64) -> f64 {
    (u0 - u1 - u2).abs()
}

/// `D = iħ Σ_j (dλ_j²/dt) |φ_j⟩⟨φ_j|` on the centre Schmidt basis.
pub fn dissipator(series: &FrameSeries, k: Subsystem, i: usize) -> Result<Operator> {
    let [m, c, p] = series.stencil(i)?;
    require_aligned(series, &[m, c, p])?;
    let delta = series.grid().substep();
    let hbar = series.spec().hbar();
    let b = c.basis(k);
    let mut weighted = b.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        let rate = (p.lambdas()[j].powi(2) - m.lambdas()[j].powi(2)) / (2.0 * delta);
        col *= I * hbar * rate;
    }
    Operator::new(weighted * b.adjoint())
}

/// `‖iħ dρ/dt − [H̃, ρ] − D‖_F` at grid point `i`.
///
/// The commutator is taken in column-action form `A − A†` with
/// `A = iħ Σ_j λ_j² |φ̇_j⟩⟨φ_j|`, which equals `[H̃, ρ]` for the full generator
/// and stays meaningful when only the occupied columns are known.
pub fn master_equation_residual(series: &FrameSeries, k: Subsystem, i: usize) -> Result<f64> {
    let [m, c, p] = series.stencil(i)?;
    let delta = series.grid().substep();
    let ihbar = I * series.spec().hbar();
    let lhs = (p.reduced_density(k) - m.reduced_density(k)) * (ihbar / (2.0 * delta));
    let bdot = basis_derivative(series, k, i)?;
    let b0 = c.basis(k);
    let mut weighted = bdot;
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= Complex64::new(c.lambdas()[j].powi(2), 0.0);
    }
    let a = (weighted * b0.adjoint()) * ihbar;
    let d = dissipator(series, k, i)?;
    Ok((lhs - (&a - a.adjoint()) - d.matrix()).norm())
}

/// Energies and residuals at one grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub time: f64,
    pub u0: f64,
    pub u1: f64,
    pub u2: f64,
    pub e1_bare: f64,
    pub e2_bare: f64,
    pub e_int: f64,
    pub additivity_residual: f64,
    pub master_residual_1: f64,
    pub master_residual_2: f64,
    pub entropy: f64,
}

/// Assembles the [`EnergyRecord`] at grid point `i` from both generators.
pub fn energy_record(
    series: &FrameSeries,
    effs: [&EffectiveHamiltonian; 2],
    spec: &ModelSpec,
    i: usize,
) -> Result<EnergyRecord> {
    let psi = series.trajectory().grid_state(i);
    let frame = series.center(i);
    let u0 = total_energy(psi, spec)?;
    let u1 = local_energy(frame, effs[0])?;
    let u2 = local_energy(frame, effs[1])?;
    let rho = psi.density_matrix();
    let bare_energy = |k: Subsystem| {
        let reduced = partial_trace_matrix(rho.matrix(), spec.shape(), k);
        let h = spec.bare(k);
        real_expectation((reduced * h.matrix()).trace(), h.frobenius_norm(), "bare energy")
    };
    let e1_bare = bare_energy(Subsystem::One)?;
    let e2_bare = bare_energy(Subsystem::Two)?;
    let e_int = real_expectation(spec.h_int().expectation(psi.amplitudes()), spec.h_int().frobenius_norm(), "interaction energy")?;
    Ok(EnergyRecord {
        time: frame.time(),
        u0,
        u1,
        u2,
        e1_bare,
        e2_bare,
        e_int,
        additivity_residual: additivity_residual(u0, u1, u2),
        master_residual_1: master_equation_residual(series, Subsystem::One, i)?,
        master_residual_2: master_equation_residual(series, Subsystem::Two, i)?,
        entropy: entanglement_entropy(frame),
    })
}

/// Everything computed along one trajectory.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub series: FrameSeries,
    /// Per grid point, the generators of subsystems 1 and 2 (split when full).
    pub effective: Vec<[EffectiveHamiltonian; 2]>,
    pub records: Vec<EnergyRecord>,
}

fn analyze_point(series: &FrameSeries, i: usize, tol: &Tolerances) -> Result<([EffectiveHamiltonian; 2], EnergyRecord)> {
    let spec = series.spec();
    let mut effs = Vec::with_capacity(2);
    for k in Subsystem::BOTH {
        let eff = effective_hamiltonian_with(series, k, i, tol)?;
        effs.push(if eff.occupied_only() { eff } else { split_effective(&eff, spec)? });
    }
    let record = energy_record(series, [&effs[0], &effs[1]], spec, i)?;
    let [e1, e2]: [EffectiveHamiltonian; 2] = effs.try_into().expect("two subsystems");
    Ok(([e1, e2], record))
}

/// Propagates, tracks and evaluates every grid point (grid points in parallel).
pub fn analyze(
    spec: Arc<ModelSpec>,
    psi0: &StateVector,
    grid: TimeGrid,
    gauge: GaugeConvention,
    tol: &Tolerances,
) -> Result<Analysis> {
    let traj = Arc::new(sample_trajectory(spec, psi0, grid)?);
    let series = track(traj, gauge, tol.rank_tol, tol.degeneracy_tol)?;
    analyze_series(series, tol)
}

/// Evaluates every grid point of an already tracked series.
pub fn analyze_series(series: FrameSeries, tol: &Tolerances) -> Result<Analysis> {
    let points: Vec<_> = (0..series.n_points())
        .into_par_iter()
        .map(|i| analyze_point(&series, i, tol))
        .collect::<Result<_>>()?;
    let (effective, records) = points.into_iter().unzip();
    Ok(Analysis { series, effective, records })
}

#[cfg(test)]
mod tests;
