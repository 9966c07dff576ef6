//! Exact unitary evolution through the spectral decomposition of `H0`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{spectral_decompose, Operator, Spectrum, StateVector};
use crate::models::ModelSpec;

/// Output times `t0..=t1` (`n_points` of them) plus the central-difference substep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    n_points: usize,
    substep: f64,
}

impl TimeGrid {
    /// `substep` defaults to `(t1 − t0) / (1000 n_points)`.
    ///
    /// The substep may not exceed half the grid spacing, so the stencils of
    /// neighbouring points never cross.
    pub fn new(t0: f64, t1: f64, n_points: usize, substep: Option<f64>) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::parse("grid", format!("require finite t1 > t0, got t0={t0}, t1={t1}")));
        }
        if n_points < 2 {
            return Err(Error::parse("grid.n_points", format!("need at least 2 points, got {n_points}")));
        }
        let substep = substep.unwrap_or((t1 - t0) / (1000.0 * n_points as f64));
        let spacing = (t1 - t0) / (n_points - 1) as f64;
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(Error::parse("grid.substep", format!("must be positive, got {substep}")));
        }
        if substep > spacing / 2.0 {
            return Err(Error::parse(
                "grid.substep",
                format!("substep {substep} exceeds half the grid spacing {spacing}"),
            ));
        }
        Ok(TimeGrid { t0, t1, n_points, substep })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn substep(&self) -> f64 {
        self.substep
    }

    pub fn spacing(&self) -> f64 {
        (self.t1 - self.t0) / (self.n_points - 1) as f64
    }

    pub fn with_substep(&self, substep: f64) -> Result<Self> {
        TimeGrid::new(self.t0, self.t1, self.n_points, Some(substep))
    }

    /// Grid time `i`; the last point is exactly `t1`.
    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t1
        } else {
            self.t0 + i as f64 * self.spacing()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.time(i)).collect()
    }

    /// All sample times in order: `t_i − δ, t_i, t_i + δ` for each grid point.
    pub fn sample_times(&self) -> Vec<f64> {
        let d = self.substep;
        (0..self.n_points).flat_map(|i| {
            let t = self.time(i);
            [t - d, t, t + d]
        }).collect()
    }
}

/// Position of a grid point's centre sample in [`TimeGrid::sample_times`].
#[inline]
pub fn center_index(grid_index: usize) -> usize {
    3 * grid_index + 1
}

/// `e^{-i H0 t/ħ}` through a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    spectrum: Spectrum,
    hbar: f64,
}

impl SpectralPropagator {
    pub fn new(h0: &Operator, hbar: f64) -> Result<Self> {
        Ok(SpectralPropagator { spectrum: spectral_decompose(h0)?, hbar })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Evolves `psi0` by `t` (relative to `psi0`'s own time). `t = 0` returns
    /// the input amplitudes unchanged.
    pub fn evolve(&self, psi0: &StateVector, t: f64) -> StateVector {
        if t == 0.0 {
            return psi0.clone();
        }
        let v = &self.spectrum.vectors;
        let mut coeffs = v.adjoint() * psi0.amplitudes();
        for (c, &b) in coeffs.iter_mut().zip(&self.spectrum.values) {
            *c *= Complex64::from_polar(1.0, -b * t / self.hbar);
        }
        StateVector::from_parts_unchecked(v * coeffs, psi0.shape(), psi0.time() + t)
    }
}

/// One-shot evolution: decomposes `h0` and applies `e^{-i h0 t/ħ}`.
pub fn evolve_state(h0: &Operator, psi0: &StateVector, t: f64, hbar: f64) -> Result<StateVector> {
    Ok(SpectralPropagator::new(h0, hbar)?.evolve(psi0, t))
}

/// States at every grid and stencil time, each propagated directly from the initial state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: TimeGrid,
    states: Vec<StateVector>,
    spec: Arc<ModelSpec>,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn spec(&self) -> &Arc<ModelSpec> {
        &self.spec
    }

    /// All samples in time order (see [`TimeGrid::sample_times`]).
    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn grid_state(&self, i: usize) -> &StateVector {
        &self.states[center_index(i)]
    }

    /// `(ψ(t−δ), ψ(t), ψ(t+δ))` around grid point `i`.
    pub fn stencil(&self, i: usize) -> [&StateVector; 3] {
        let c = center_index(i);
        [&self.states[c - 1], &self.states[c], &self.states[c + 1]]
    }

    pub fn energies(&self) -> Vec<f64> {
        let h0 = self.spec.total_hamiltonian();
        self.states.iter().map(|s| h0.expectation(s.amplitudes()).re).collect()
    }
}

/// Samples the trajectory starting from `psi0` at `grid.t0()`.
///
/// Time points are independent and evaluated in parallel.
pub fn sample_trajectory(spec: Arc<ModelSpec>, psi0: &StateVector, grid: TimeGrid) -> Result<Trajectory> {
    if psi0.shape() != spec.shape() {
        return Err(Error::Dimension("initial state shape does not match the model".into()));
    }
    let prop = SpectralPropagator::new(spec.total_hamiltonian(), spec.hbar())?;
    let start = psi0.clone().with_time(grid.t0());
    let states = grid
        .sample_times()
        .par_iter()
        .map(|&t| prop.evolve(&start, t - grid.t0()).with_time(t))
        .collect();
    Ok(Trajectory { grid, states, spec })
}
