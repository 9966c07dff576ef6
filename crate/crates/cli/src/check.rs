//! `schmidt check`: named invariant checks over the configured case and its battery.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use schmidt_core::energetics::{
    analyze, dissipator, gauge_transform_check, lamb_shift_from_projections, Analysis, GaugeSpec,
};
use schmidt_core::hilbert::spectral_decompose;
use schmidt_core::{CMat, GaugeConvention, Subsystem, Tolerances};

use crate::config::RunConfig;
use crate::output::write_json;
use crate::run::{execute, generator_deviation, summarize};
use crate::{CliError, SCHEMA_VERSION, TOOL_VERSION};

/// Step-halving checks never use a substep below this fraction of the span,
/// so the residuals they compare sit above rounding noise.
pub const CONVERGENCE_DELTA_FRACTION: f64 = 1e-3;
pub const SPLIT_CROSS_METHOD: f64 = 1e-6;
pub const GAUGE_RATE: f64 = 0.3;
/// Rates `(GAUGE_RATE, −GAUGE_RATE / 2, …)` for the non-uniform check.
pub const GAUGE_SUM: f64 = 1e-8;
pub const GAUGE_SPECTRUM_FLOOR: f64 = 1e-8;
pub const TABULATED_AMPLITUDE: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub case: String,
    pub name: &'static str,
    pub passed: bool,
    pub measured: Value,
    pub limit: Value,
    pub detail: String,
}

struct Measured {
    passed: bool,
    measured: Value,
    limit: Value,
    detail: String,
}

fn within(measured: f64, limit: f64) -> Measured {
    Measured { passed: measured <= limit, measured: json!(measured), limit: json!(limit), detail: String::new() }
}

type CheckFn<'a> = Box<dyn FnOnce() -> Result<Measured, String> + 'a>;

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

fn relaxed(tol: &Tolerances) -> Tolerances {
    Tolerances { max_stencil_asymmetry: f64::INFINITY, ..*tol }
}

struct Case<'a> {
    label: String,
    cfg: &'a RunConfig,
}

impl Case<'_> {
    fn hbar(&self) -> f64 {
        self.cfg.model.hbar()
    }

    /// Largest frequency (times ħ) the stencil can see without a gauge:
    /// the spread of the spectrum, which the Frobenius norm does not always cover.
    fn energy_scale(&self) -> f64 {
        let h = self.cfg.model.total_hamiltonian();
        let spread = spectral_decompose(h).map(|s| s.values[s.values.len() - 1] - s.values[0]).unwrap_or(0.0);
        h.frobenius_norm().max(spread)
    }

    fn alpha(&self) -> f64 {
        match self.cfg.gauge {
            GaugeConvention::LinearShift { alpha } => alpha,
            _ => 0.0,
        }
    }

    fn delta(&self) -> f64 {
        self.cfg.grid.substep()
    }

    fn analyze_with(&self, substep: f64, gauge: GaugeConvention, tol: &Tolerances) -> Result<Analysis, String> {
        let grid = self.cfg.grid.with_substep(substep).map_err(|e| e.to_string())?;
        analyze(self.cfg.model.clone(), &self.cfg.initial_state, grid, gauge, tol).map_err(|e| e.to_string())
    }

    fn convergence_pair(&self) -> Result<(f64, Analysis, Analysis), String> {
        let span = self.cfg.grid.t1() - self.cfg.grid.t0();
        let delta = self.delta().max(CONVERGENCE_DELTA_FRACTION * span);
        let tol = relaxed(&self.cfg.tolerances);
        let coarse = self.analyze_with(delta, self.cfg.gauge, &tol)?;
        let fine = self.analyze_with(delta / 2.0, self.cfg.gauge, &tol)?;
        Ok((delta, coarse, fine))
    }

    fn halving(&self, name: &str, pairs: &[(f64, f64)], delta: f64) -> Measured {
        let tol = &self.cfg.tolerances;
        let passed = pairs.iter().all(|(c, f)| tol.is_second_order(*c, *f));
        let measured: Vec<Value> =
            pairs.iter().map(|(c, f)| json!({ "coarse": c, "fine": f, "ratio": c / f })).collect();
        Measured {
            passed,
            measured: Value::Array(measured),
            limit: json!([tol.convergence_ratio_min, tol.convergence_ratio_max]),
            detail: format!("{name} at substep {delta:e} and half of it"),
        }
    }
}

fn gauge_check(case: &Case, base: &Analysis, g: &GaugeSpec, max_rate: f64) -> Result<Measured, String> {
    let r = gauge_transform_check(&base.series, g).map_err(|e| e.to_string())?;
    let tol = &case.cfg.tolerances;
    let bound = tol.stencil_bound(case.energy_scale() + case.hbar() * max_rate, case.delta(), case.hbar());
    let spectrum_limit = bound.max(GAUGE_SPECTRUM_FLOOR);
    let passed = r.reconstruction <= tol.exact
        && r.energy_sum <= GAUGE_SUM
        && r.energy_shift <= bound
        && r.generator_shift <= bound
        && r.spectrum_shift.is_none_or(|s| s <= spectrum_limit);
    Ok(Measured {
        passed,
        measured: serde_json::to_value(r).expect("report serialises"),
        limit: json!({
            "reconstruction": tol.exact,
            "energy_sum": GAUGE_SUM,
            "energy_shift": bound,
            "generator_shift": bound,
            "spectrum_shift": spectrum_limit,
        }),
        detail: String::new(),
    })
}

fn case_checks<'a>(case: &'a Case<'a>, base: &'a Result<Analysis, CliError>) -> Vec<(&'static str, CheckFn<'a>)> {
    let base = move || base.as_ref().map_err(|e| e.to_string());
    let tol = &case.cfg.tolerances;
    let mut checks: Vec<(&'static str, CheckFn<'a>)> = vec![
        ("energy_conservation", Box::new(move || Ok(within(summarize(base()?).energy_drift, tol.energy_drift)))),
        ("additivity", Box::new(move || Ok(within(summarize(base()?).additivity, tol.additivity_max)))),
        (
            "step_halving",
            Box::new(move || {
                let (delta, c, f) = case.convergence_pair()?;
                let (sc, sf) = (summarize(&c), summarize(&f));
                let mut m = case.halving(
                    "additivity, master (k = 1, 2) and asymmetry",
                    &[
                        (sc.additivity, sf.additivity),
                        (sc.master[0], sf.master[0]),
                        (sc.master[1], sf.master[1]),
                        (sc.asymmetry, sf.asymmetry),
                    ],
                    delta,
                );
                m.measured = json!({
                    "additivity": m.measured[0],
                    "master_1": m.measured[1],
                    "master_2": m.measured[2],
                    "asymmetry": m.measured[3],
                });
                Ok(m)
            }),
        ),
        (
            "dissipator_traceless",
            Box::new(move || {
                let a = base()?;
                let mut worst = 0.0f64;
                for i in 0..a.series.n_points() {
                    for k in Subsystem::BOTH {
                        let d = dissipator(&a.series, k, i).map_err(|e| e.to_string())?;
                        worst = worst.max(d.trace().norm());
                    }
                }
                Ok(within(worst, tol.exact))
            }),
        ),
        (
            "split_cross_check",
            Box::new(move || {
                let a = base()?;
                let (mut worst, mut points) = (0.0f64, 0usize);
                for (i, pair) in a.effective.iter().enumerate() {
                    for eff in pair {
                        let (Some(ls), Some(x)) = (eff.h_ls(), eff.h_x()) else { continue };
                        let (pls, px) =
                            lamb_shift_from_projections(&a.series, eff.subsystem(), i).map_err(|e| e.to_string())?;
                        worst = worst.max((ls.matrix() - pls.matrix()).norm()).max((x.matrix() - px.matrix()).norm());
                        points += 1;
                    }
                }
                let mut m = within(worst, SPLIT_CROSS_METHOD);
                m.detail = format!("{points} full generators compared");
                Ok(m)
            }),
        ),
        (
            "non_interacting_limit",
            Box::new(move || {
                let spec = Arc::new(case.cfg.model.non_interacting());
                let a = analyze(spec.clone(), &case.cfg.initial_state, case.cfg.grid, case.cfg.gauge, tol)
                    .map_err(|e| e.to_string())?;
                // A linear gauge shifts the generator by ∓ħα on the occupied space.
                let shift = case.hbar() * case.alpha();
                let mut worst = 0.0f64;
                for (i, pair) in a.effective.iter().enumerate() {
                    for eff in pair {
                        let k = eff.subsystem();
                        let n = spec.shape().dim(k);
                        let target = spec.bare(k).matrix() + CMat::identity(n, n).scale(k.gauge_sign() * shift);
                        worst = worst.max(generator_deviation(a.series.center(i), eff, &target));
                    }
                }
                let scale = spec.total_hamiltonian().frobenius_norm() + shift.abs();
                Ok(within(worst, tol.stencil_bound(scale, case.delta(), case.hbar())))
            }),
        ),
        (
            "gauge_uniform_rate",
            Box::new(move || {
                let d1 = case.cfg.model.shape().d1();
                gauge_check(case, base()?, &GaugeSpec::uniform_rate(d1, GAUGE_RATE), GAUGE_RATE)
            }),
        ),
        (
            "gauge_distinct_rates",
            Box::new(move || {
                let d1 = case.cfg.model.shape().d1();
                let rates = (0..d1).map(|j| GAUGE_RATE * (-0.5f64).powi(j as i32)).collect();
                gauge_check(case, base()?, &GaugeSpec::Linear { offsets: vec![0.5; d1], rates }, GAUGE_RATE)
            }),
        ),
        (
            "gauge_tabulated",
            Box::new(move || {
                let a = base()?;
                let g = GaugeSpec::tabulate(&a.series, |j, t| TABULATED_AMPLITUDE * (t + j as f64).sin());
                gauge_check(case, a, &g, TABULATED_AMPLITUDE)
            }),
        ),
        (
            "gauge_free_quantities",
            Box::new(move || {
                let a = base()?;
                let other = match case.cfg.gauge {
                    GaugeConvention::BareParallelTransport => GaugeConvention::ZeroDiagonal,
                    _ => GaugeConvention::BareParallelTransport,
                };
                let b = case.analyze_with(case.delta(), other, tol)?;
                let mut exact = 0.0f64;
                let mut sum = 0.0f64;
                for (i, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
                    let (fa, fb) = (a.series.center(i), b.series.center(i));
                    exact = exact
                        .max(max_of(fa.lambda_sq().iter().zip(fb.lambda_sq()).map(|(x, y)| (x - y).abs())))
                        .max((ra.entropy - rb.entropy).abs())
                        .max((ra.u0 - rb.u0).abs());
                    sum = sum.max((ra.u1 + ra.u2 - rb.u1 - rb.u2).abs());
                }
                let alpha = case.alpha().abs();
                let sum_limit =
                    tol.stencil_bound(case.energy_scale() + case.hbar() * alpha, case.delta(), case.hbar()).max(GAUGE_SUM);
                Ok(Measured {
                    passed: exact <= tol.exact && sum <= sum_limit,
                    measured: json!({ "spectrum_entropy_u0": exact, "u1_plus_u2": sum }),
                    limit: json!({ "spectrum_entropy_u0": tol.exact, "u1_plus_u2": sum_limit }),
                    detail: format!("compared against the {other:?} gauge"),
                })
            }),
        ),
    ];
    if let GaugeConvention::LinearShift { alpha } = case.cfg.gauge {
        checks.push((
            "linear_shift_energy_shift",
            Box::new(move || {
                let a = base()?;
                let b = case.analyze_with(case.delta(), GaugeConvention::BareParallelTransport, tol)?;
                let shift = case.hbar() * alpha;
                let worst = max_of(
                    a.records.iter().zip(&b.records).map(|(x, y)| {
                        (x.u1 - y.u1 + shift).abs().max((x.u2 - y.u2 - shift).abs())
                    }),
                );
                let bound = tol.stencil_bound(case.energy_scale() + shift.abs(), case.delta(), case.hbar());
                let mut m = within(worst, bound);
                m.detail = format!("expected U1 - {shift} and U2 + {shift} relative to bare parallel transport");
                Ok(m)
            }),
        ));
    }
    checks
}

fn run_case(label: String, cfg: &RunConfig) -> Vec<CheckOutcome> {
    let case = Case { label, cfg };
    let base = execute(cfg);
    case_checks(&case, &base)
        .into_iter()
        .map(|(name, f)| {
            let m = f().unwrap_or_else(|e| Measured { passed: false, measured: Value::Null, limit: Value::Null, detail: e });
            CheckOutcome { case: case.label.clone(), name, passed: m.passed, measured: m.measured, limit: m.limit, detail: m.detail }
        })
        .collect()
}

/// Runs every check on the configured case and each battery case, in parallel.
pub fn run_checks(cfg: &RunConfig) -> Vec<CheckOutcome> {
    let mut cases = vec![(format!("config ({})", cfg.model.label()), cfg)];
    cases.extend(cfg.battery.iter().enumerate().map(|(i, c)| (format!("battery[{i}] ({})", c.model.label()), c)));
    cases.into_par_iter().map(|(label, c)| run_case(label, c)).flatten().collect()
}

pub fn report(cfg: &RunConfig, outcomes: &[CheckOutcome]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": TOOL_VERSION,
        "command": "check",
        "config": cfg.document,
        "passed": outcomes.iter().all(|o| o.passed),
        "checks": outcomes,
    })
}

pub fn summary_line(o: &CheckOutcome) -> String {
    let status = if o.passed { "PASS" } else { "FAIL" };
    let mut line = format!("{} {}: {status} (measured {}, limit {})", o.case, o.name, o.measured, o.limit);
    if !o.detail.is_empty() {
        line.push_str(&format!(" [{}]", o.detail));
    }
    line
}

/// Runs the checks, prints one line per check and writes `report.json` into `out`.
pub fn check(cfg: &RunConfig, out: &Path) -> Result<Vec<CheckOutcome>, CliError> {
    let outcomes = run_checks(cfg);
    for o in &outcomes {
        println!("{}", summary_line(o));
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Output { path: out.display().to_string(), reason: e.to_string() })?;
    write_json(&out.join("report.json"), &report(cfg, &outcomes))?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| format!("{} {}", o.case, o.name)).collect();
    if failed.is_empty() {
        Ok(outcomes)
    } else {
        Err(CliError::Invariant(failed.join(", ")))
    }
}
