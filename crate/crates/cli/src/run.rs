//! `schmidt run`: propagate, track, evaluate and write the requested files.

use std::path::Path;
use std::sync::Arc;

use serde_json::{json, Value};

use schmidt_core::energetics::{analyze_series, Analysis, EffectiveHamiltonian};
use schmidt_core::propagator::sample_trajectory;
use schmidt_core::schmidt::track;
use schmidt_core::{CMat, SchmidtFrame};

use crate::config::{OutputKind, RunConfig};
use crate::output::{effective_json, energies_csv, lambdas_csv, write_json, write_text};
use crate::{CliError, SCHEMA_VERSION, TOOL_VERSION};

/// Runs the full pipeline, tagging failures with the stage that raised them.
pub fn execute(cfg: &RunConfig) -> Result<Analysis, CliError> {
    let stage = |stage| move |source| CliError::Stage { stage, source };
    let traj = sample_trajectory(cfg.model.clone(), &cfg.initial_state, cfg.grid).map_err(stage("propagate"))?;
    let tol = &cfg.tolerances;
    let series = track(Arc::new(traj), cfg.gauge, tol.rank_tol, tol.degeneracy_tol).map_err(stage("track"))?;
    analyze_series(series, tol).map_err(stage("energetics"))
}

/// `‖H̃ − P H_k P‖_F`, with `P` the projector on the occupied Schmidt vectors
/// (the identity when the generator is full).
pub fn generator_deviation(frame: &SchmidtFrame, eff: &EffectiveHamiltonian, bare: &CMat) -> f64 {
    let k = eff.subsystem();
    let n = bare.nrows();
    let p = if eff.occupied_only() {
        let b = frame.basis(k);
        frame.occupied().iter().fold(CMat::zeros(n, n), |acc, &j| acc + b.column(j) * b.column(j).adjoint())
    } else {
        CMat::identity(n, n)
    };
    (eff.h_tilde().matrix() - &p * bare * &p).norm()
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

/// Maxima over the grid, as reported in `report.json` and sweep summaries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub additivity: f64,
    pub master: [f64; 2],
    /// `max |U0(t) − U0(t0)| / max(‖H‖_F, 1)`.
    pub energy_drift: f64,
    pub u_drift: [f64; 2],
    pub generator_deviation: [f64; 2],
    pub asymmetry: f64,
    pub h_ls_norm: [Option<f64>; 2],
    pub h_x_norm: [Option<f64>; 2],
    pub occupied_only_points: [usize; 2],
}

pub fn summarize(a: &Analysis) -> Summary {
    let spec = a.series.spec();
    let r = &a.records;
    let scale = spec.total_hamiltonian().frobenius_norm().max(1.0);
    let mut s = Summary {
        additivity: max_of(r.iter().map(|x| x.additivity_residual)),
        master: [max_of(r.iter().map(|x| x.master_residual_1)), max_of(r.iter().map(|x| x.master_residual_2))],
        energy_drift: max_of(r.iter().map(|x| (x.u0 - r[0].u0).abs())) / scale,
        u_drift: [max_of(r.iter().map(|x| (x.u1 - r[0].u1).abs())), max_of(r.iter().map(|x| (x.u2 - r[0].u2).abs()))],
        generator_deviation: [0.0; 2],
        asymmetry: 0.0,
        h_ls_norm: [None; 2],
        h_x_norm: [None; 2],
        occupied_only_points: [0; 2],
    };
    for (i, pair) in a.effective.iter().enumerate() {
        let frame = a.series.center(i);
        for (slot, eff) in pair.iter().enumerate() {
            let bare = spec.bare(eff.subsystem()).matrix();
            s.generator_deviation[slot] = s.generator_deviation[slot].max(generator_deviation(frame, eff, bare));
            s.asymmetry = s.asymmetry.max(eff.asymmetry());
            s.occupied_only_points[slot] += usize::from(eff.occupied_only());
            let fold = |acc: Option<f64>, op: Option<&schmidt_core::Operator>| match (acc, op) {
                (a, None) => a,
                (a, Some(o)) => Some(a.unwrap_or(0.0).max(o.frobenius_norm())),
            };
            s.h_ls_norm[slot] = fold(s.h_ls_norm[slot], eff.h_ls());
            s.h_x_norm[slot] = fold(s.h_x_norm[slot], eff.h_x());
        }
    }
    s
}

impl Summary {
    pub fn to_json(&self) -> Value {
        json!({
            "additivity_residual": self.additivity,
            "master_residual_1": self.master[0],
            "master_residual_2": self.master[1],
            "energy_drift": self.energy_drift,
            "u1_drift": self.u_drift[0],
            "u2_drift": self.u_drift[1],
            "generator_deviation_1": self.generator_deviation[0],
            "generator_deviation_2": self.generator_deviation[1],
            "stencil_asymmetry": self.asymmetry,
            "h_ls_norm_1": self.h_ls_norm[0],
            "h_ls_norm_2": self.h_ls_norm[1],
            "h_x_norm_1": self.h_x_norm[0],
            "h_x_norm_2": self.h_x_norm[1],
        })
    }
}

/// Writes the requested outputs plus `report.json` into `out`.
pub fn write_outputs(cfg: &RunConfig, a: &Analysis, out: &Path) -> Result<Summary, CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Output { path: out.display().to_string(), reason: e.to_string() })?;
    let mut files = Vec::new();
    // Residuals and entropy are columns of the energy table.
    if [OutputKind::Energies, OutputKind::Residuals, OutputKind::Entropy].iter().any(|k| cfg.outputs.contains(k)) {
        write_text(&out.join("energies.csv"), &energies_csv(&a.records))?;
        files.push("energies.csv");
    }
    if cfg.outputs.contains(&OutputKind::Lambdas) {
        write_text(&out.join("lambdas.csv"), &lambdas_csv(&a.series))?;
        files.push("lambdas.csv");
    }
    if cfg.outputs.contains(&OutputKind::EffectiveHamiltonians) {
        write_json(&out.join("effective_hamiltonians.json"), &effective_json(&a.effective))?;
        files.push("effective_hamiltonians.json");
    }
    let summary = summarize(a);
    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "command": "run",
        "config": cfg.document,
        "model": cfg.model.label(),
        "n_points": a.records.len(),
        "occupied_only_points": summary.occupied_only_points,
        "maxima": summary.to_json(),
        "files": files,
    });
    write_json(&out.join("report.json"), &report)?;
    Ok(summary)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Summary, CliError> {
    let analysis = execute(cfg)?;
    write_outputs(cfg, &analysis, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn uncoupled_run_has_flat_local_energies() {
        let doc = json!({
            "model": { "preset": "exchange_qubits", "params": { "omega1": 1.0, "omega2": 1.3, "g": 0.0 } },
            "initial_state": "bell",
            "grid": { "t1": 5.0, "n_points": 21, "substep": 1e-4 }
        });
        let a = execute(&parse_config(&doc, None).unwrap()).unwrap();
        let s = summarize(&a);
        assert!(s.u_drift[0] < 1e-8 && s.u_drift[1] < 1e-8, "{s:?}");
        assert!(s.additivity < 1e-8);
        assert!(s.generator_deviation.iter().all(|d| *d < 1e-6), "{s:?}");
    }
}
