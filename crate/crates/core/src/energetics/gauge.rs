//! Phase-gauge transformations of a tracked series and their effect on the
//! effective Hamiltonians and local energies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{effective_hamiltonian, local_energy};
use crate::error::{Error, Result};
use crate::hilbert::{spectral_decompose, CMat, Operator, Subsystem};
use crate::schmidt::FrameSeries;

/// Phases `θ_j(t)` applied as `e^{+iθ_j}` to basis 1 and `e^{-iθ_j}` to basis 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GaugeSpec {
    /// `θ_j(t) = offsets[j] + rates[j] t`.
    Linear { offsets: Vec<f64>, rates: Vec<f64> },
    /// One row of `d1` phases per frame of the series (all stencil samples,
    /// in time order). Rates come from central differences.
    Tabulated { samples: Vec<Vec<f64>> },
}

impl GaugeSpec {
    /// `θ_j(t) = α t` for every index.
    pub fn uniform_rate(d1: usize, alpha: f64) -> Self {
        GaugeSpec::Linear { offsets: vec![0.0; d1], rates: vec![alpha; d1] }
    }

    /// Time-independent phases.
    pub fn constant(offsets: Vec<f64>) -> Self {
        let rates = vec![0.0; offsets.len()];
        GaugeSpec::Linear { offsets, rates }
    }

    /// Tabulates `f(j, t)` on every sample time of `series`.
    pub fn tabulate(series: &FrameSeries, f: impl Fn(usize, f64) -> f64) -> Self {
        let d1 = series.spec().shape().d1();
        let samples = series.frames().iter().map(|fr| (0..d1).map(|j| f(j, fr.time())).collect()).collect();
        GaugeSpec::Tabulated { samples }
    }

    fn validate(&self, series: &FrameSeries) -> Result<()> {
        let d1 = series.spec().shape().d1();
        let rows: Vec<&Vec<f64>> = match self {
            GaugeSpec::Linear { offsets, rates } => vec![offsets, rates],
            GaugeSpec::Tabulated { samples } => {
                if samples.len() != series.frames().len() {
                    return Err(Error::Usage(format!(
                        "tabulated gauge has {} samples, series has {} frames",
                        samples.len(),
                        series.frames().len()
                    )));
                }
                samples.iter().collect()
            }
        };
        for row in rows {
            if row.len() != d1 {
                return Err(Error::Usage(format!("gauge has {} phases per time, expected {d1}", row.len())));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::Usage("gauge phases must be finite".into()));
            }
        }
        Ok(())
    }

    fn phases(&self, sample: usize, t: f64) -> Vec<f64> {
        match self {
            GaugeSpec::Linear { offsets, rates } => offsets.iter().zip(rates).map(|(o, r)| o + r * t).collect(),
            GaugeSpec::Tabulated { samples } => samples[sample].clone(),
        }
    }

    /// `θ̇_j` at grid point `i`.
    pub fn rates(&self, series: &FrameSeries, i: usize) -> Vec<f64> {
        match self {
            GaugeSpec::Linear { rates, .. } => rates.clone(),
            GaugeSpec::Tabulated { samples } => {
                let c = crate::propagator::center_index(i);
                let two_delta = 2.0 * series.grid().substep();
                samples[c + 1].iter().zip(&samples[c - 1]).map(|(p, m)| (p - m) / two_delta).collect()
            }
        }
    }

    fn fingerprint(&self) -> Vec<u64> {
        let mut words = Vec::new();
        match self {
            GaugeSpec::Linear { offsets, rates } => {
                words.push(1);
                words.extend(offsets.iter().chain(rates).map(|x| x.to_bits()));
            }
            GaugeSpec::Tabulated { samples } => {
                words.push(2);
                words.extend(samples.iter().flatten().map(|x| x.to_bits()));
            }
        }
        words
    }
}

/// Multiplies every frame's pair `(φ_j¹, φ_j²)` by `(e^{iθ_j}, e^{-iθ_j})`.
///
/// The result carries a new gauge fingerprint, so generators built from the
/// original series cannot be paired with its frames by accident.
pub fn apply_gauge(series: &FrameSeries, g: &GaugeSpec) -> Result<FrameSeries> {
    g.validate(series)?;
    let id = series.gauge_id().derive(g.fingerprint());
    let frames = series
        .frames()
        .iter()
        .enumerate()
        .map(|(s, f)| f.with_phases(&g.phases(s, f.time()), id))
        .collect();
    Ok(series.with_frames(frames, id))
}

/// Largest deviations found by [`gauge_transform_check`] over all grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaugeCheckReport {
    /// `max ‖Ψ' − Ψ‖` over all frames.
    pub reconstruction: f64,
    /// `max ‖H̃' − H̃ − (−1)^k ħ Σ_j θ̇_j |φ_j⟩⟨φ_j|‖_F` (occupied `j`).
    pub generator_shift: f64,
    /// `max |U'⁽ᵏ⁾ − U⁽ᵏ⁾ − (−1)^k ħ Σ_j λ_j² θ̇_j|`.
    pub energy_shift: f64,
    /// `max |ΔU⁽¹⁾ + ΔU⁽²⁾|`.
    pub energy_sum: f64,
    /// `max |ΔU⁽ᵏ⁾|` per subsystem.
    pub max_energy_change: [f64; 2],
    /// When all rates equal `α`: `max |spec(H̃') − (spec(H̃) + (−1)^k ħα)|` over
    /// full-rank points. `None` otherwise.
    pub spectrum_shift: Option<f64>,
}

struct PointReport {
    generator_shift: f64,
    energy_shift: f64,
    energy_sum: f64,
    change: [f64; 2],
    spectrum_shift: Option<f64>,
}

fn sorted_eigenvalues(op: &Operator) -> Result<Vec<f64>> {
    Ok(spectral_decompose(op)?.values)
}

fn check_point(series: &FrameSeries, moved: &FrameSeries, g: &GaugeSpec, i: usize) -> Result<PointReport> {
    let hbar = series.spec().hbar();
    let rates = g.rates(series, i);
    let uniform = rates.iter().all(|r| *r == rates[0]).then_some(rates[0]);
    let frame = series.center(i);
    let moved_frame = moved.center(i);
    let occupied = frame.occupied();
    let mut out = PointReport { generator_shift: 0.0, energy_shift: 0.0, energy_sum: 0.0, change: [0.0; 2], spectrum_shift: None };
    let mut delta_sum = 0.0;
    for (slot, k) in Subsystem::BOTH.into_iter().enumerate() {
        let sign = k.gauge_sign();
        let eff = effective_hamiltonian(series, k, i)?;
        let eff_moved = effective_hamiltonian(moved, k, i)?;
        let b = frame.basis(k);
        let mut expected = CMat::zeros(b.nrows(), b.nrows());
        let mut energy_expected = 0.0;
        for &j in &occupied {
            let col = b.column(j);
            expected += (col * col.adjoint()) * num_complex::Complex64::new(sign * hbar * rates[j], 0.0);
            energy_expected += sign * hbar * frame.lambdas()[j].powi(2) * rates[j];
        }
        let diff = eff_moved.h_tilde().matrix() - eff.h_tilde().matrix();
        out.generator_shift = out.generator_shift.max((diff - expected).norm());
        let du = local_energy(moved_frame, &eff_moved)? - local_energy(frame, &eff)?;
        out.energy_shift = out.energy_shift.max((du - energy_expected).abs());
        out.change[slot] = du.abs();
        delta_sum += du;
        if let (Some(alpha), false) = (uniform, eff.occupied_only()) {
            let before = sorted_eigenvalues(eff.h_tilde())?;
            let after = sorted_eigenvalues(eff_moved.h_tilde())?;
            let worst = before
                .iter()
                .zip(&after)
                .map(|(x, y)| (y - x - sign * hbar * alpha).abs())
                .fold(0.0, f64::max);
            out.spectrum_shift = Some(out.spectrum_shift.unwrap_or(0.0).max(worst));
        }
    }
    out.energy_sum = delta_sum.abs();
    Ok(out)
}

/// Applies `g` and measures how the generators and local energies moved
/// against the expected diagonal shifts.
pub fn gauge_transform_check(series: &FrameSeries, g: &GaugeSpec) -> Result<GaugeCheckReport> {
    let moved = apply_gauge(series, g)?;
    let reconstruction = series
        .frames()
        .par_iter()
        .zip(moved.frames())
        .map(|(a, b)| (a.reconstruct() - b.reconstruct()).norm())
        .reduce(|| 0.0, f64::max);
    let points: Vec<PointReport> = (0..series.n_points())
        .into_par_iter()
        .map(|i| check_point(series, &moved, g, i))
        .collect::<Result<_>>()?;
    let mut report = GaugeCheckReport {
        reconstruction,
        generator_shift: 0.0,
        energy_shift: 0.0,
        energy_sum: 0.0,
        max_energy_change: [0.0; 2],
        spectrum_shift: None,
    };
    for p in points {
        report.generator_shift = report.generator_shift.max(p.generator_shift);
        report.energy_shift = report.energy_shift.max(p.energy_shift);
        report.energy_sum = report.energy_sum.max(p.energy_sum);
        for s in 0..2 {
            report.max_energy_change[s] = report.max_energy_change[s].max(p.change[s]);
        }
        if let Some(x) = p.spectrum_shift {
            report.spectrum_shift = Some(report.spectrum_shift.unwrap_or(0.0).max(x));
        }
    }
    Ok(report)
}
