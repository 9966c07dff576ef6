//! Numerical tolerances in one place.
//!
//! Values that depend on the finite-difference substep are produced by
//! [`Tolerances::stencil_bound`]; everything else is a fixed threshold.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Schmidt coefficients at or below this are unoccupied.
    pub rank_tol: f64,
    /// Coefficients within `degeneracy_tol * λ_max` of each other form a degenerate block.
    pub degeneracy_tol: f64,
    /// Largest acceptable relative asymmetry of a raw finite-difference generator.
    pub max_stencil_asymmetry: f64,
    /// Absolute floor for stencil-limited comparisons.
    pub stencil_floor: f64,
    /// Residuals below this are treated as converged when testing step-halving ratios.
    pub convergence_floor: f64,
    pub convergence_ratio_min: f64,
    pub convergence_ratio_max: f64,
    /// Maximum |U0 − U1 − U2| at the configured substep.
    pub additivity_max: f64,
    /// Imaginary part allowed on real-valued expectations, relative to `max(1, ‖H‖_F)`.
    pub imaginary_residue: f64,
    /// Relative energy drift allowed along an exactly propagated trajectory.
    pub energy_drift: f64,
    /// Identities that hold to rounding error only.
    pub exact: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-8,
            degeneracy_tol: 1e-6,
            max_stencil_asymmetry: 1e-3,
            stencil_floor: 1e-8,
            convergence_floor: 1e-10,
            convergence_ratio_min: 3.5,
            convergence_ratio_max: 4.5,
            additivity_max: 1e-6,
            imaginary_residue: 1e-12,
            energy_drift: 1e-10,
            exact: 1e-10,
        }
    }
}

impl Tolerances {
    /// Rejects non-finite or non-positive entries; names the first offending field.
    pub fn validate(&self) -> Result<(), (&'static str, f64)> {
        let fields = [
            ("rank_tol", self.rank_tol),
            ("degeneracy_tol", self.degeneracy_tol),
            ("max_stencil_asymmetry", self.max_stencil_asymmetry),
            ("stencil_floor", self.stencil_floor),
            ("convergence_floor", self.convergence_floor),
            ("convergence_ratio_min", self.convergence_ratio_min),
            ("convergence_ratio_max", self.convergence_ratio_max),
            ("additivity_max", self.additivity_max),
            ("imaginary_residue", self.imaginary_residue),
            ("energy_drift", self.energy_drift),
            ("exact", self.exact),
        ];
        match fields.into_iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some(bad) => Err(bad),
            None => Ok(()),
        }
    }

    /// `max(stencil_floor, C δ²)` with `C = E³ / (3ħ²)`.
    ///
    /// The central difference of `e^{-iEt/ħ}` has leading error `E³δ²/(6ħ²)`;
    /// `energy_scale` must bound every frequency the stencil sees (including
    /// gauge rates times ħ), and the factor two over the leading term absorbs
    /// the matching error of the discrete transport rule.
    pub fn stencil_bound(&self, energy_scale: f64, delta: f64, hbar: f64) -> f64 {
        let c = energy_scale.powi(3) / (3.0 * hbar * hbar);
        self.stencil_floor.max(c * delta * delta)
    }

    /// Whether `coarse / fine` is a second-order step-halving ratio, or both
    /// values already sit below the convergence floor.
    pub fn is_second_order(&self, coarse: f64, fine: f64) -> bool {
        if coarse <= self.convergence_floor || fine <= self.convergence_floor {
            return true;
        }
        let r = coarse / fine;
        (self.convergence_ratio_min..=self.convergence_ratio_max).contains(&r)
    }
}
