//! Gate error across control–target detuning.

use rayon::prelude::*;
use serde::Serialize;

use super::calibrate::{calibrate_cr_echo, evaluate_gate, optimize_rotary};
use super::hamiltonian::static_zz;
use super::{TransmonPair, DEFAULT_SOLVER_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub gate_time: f64,
    pub solver_tol: f64,
    pub rotary: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            gate_time: 400.0,
            solver_tol: DEFAULT_SOLVER_TOL,
            rotary: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    CalibrationFailed,
    SolverFailed,
}

impl std::fmt::Display for PointStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PointStatus::Ok => "ok",
            PointStatus::CalibrationFailed => "calibration_failed",
            PointStatus::SolverFailed => "solver_failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub detuning: f64,
    pub status: PointStatus,
    pub error: Option<f64>,
    pub zz_khz: f64,
    pub zz_ambiguous: bool,
    pub amplitude: Option<f64>,
    pub rotary_amplitude: Option<f64>,
    pub unitarity_defect: Option<f64>,
    pub message: Option<String>,
}

impl SweepPoint {
    /// Error used for window analysis; failed points count as 1.
    pub fn effective_error(&self) -> f64 {
        self.error.unwrap_or(1.0)
    }
}

fn sweep_point(base: &TransmonPair, detuning: f64, opts: &SweepOptions) -> Result<SweepPoint> {
    let pair = base.with_detuning(detuning);
    let zz = static_zz(&pair)?;
    let mut point = SweepPoint {
        detuning,
        status: PointStatus::Ok,
        error: None,
        zz_khz: zz.zz_khz,
        zz_ambiguous: zz.ambiguous,
        amplitude: None,
        rotary_amplitude: None,
        unitarity_defect: None,
        message: None,
    };
    let outcome = calibrate_cr_echo(&pair, opts.gate_time, opts.solver_tol).and_then(|spec| {
        point.amplitude = Some(spec.amplitude);
        let spec = if opts.rotary {
            optimize_rotary(&pair, &spec, opts.solver_tol)?.spec
        } else {
            spec
        };
        evaluate_gate(&pair, &spec, opts.solver_tol).map(|r| (spec, r))
    });
    match outcome {
        Ok((spec, r)) => {
            point.error = Some(r.error);
            point.rotary_amplitude = Some(spec.rotary_amplitude);
            point.unitarity_defect = Some(r.unitarity_defect);
        }
        Err(e @ Error::Calibration(_)) => {
            point.status = PointStatus::CalibrationFailed;
            point.message = Some(e.to_string());
        }
        Err(e @ Error::Solver(_)) => {
            point.status = PointStatus::SolverFailed;
            point.message = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(point)
}

/// Calibrate, rotary-optimize and score the pair at each detuning
/// Δ = f_c − f_t, with f_t held at `base.f_t`. Points run in parallel and
/// are deterministic; calibration and solver failures are recorded per point.
pub fn error_vs_detuning_sweep(
    base: &TransmonPair,
    detunings: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<SweepPoint>> {
    base.validate()?;
    if detunings.is_empty() {
        return Err(Error::param("detuning grid is empty"));
    }
    if let Some(bad) = detunings
        .iter()
        .find(|d| !d.is_finite() || base.f_t + **d <= 0.0)
    {
        return Err(Error::param(format!(
            "detuning {bad} MHz gives a non-positive control frequency"
        )));
    }
    detunings
        .par_iter()
        .map(|&d| sweep_point(base, d, opts))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Detuning intervals where the error is below `threshold`. Crossings
/// between grid points are interpolated in log error; failed points count as
/// error 1.
pub fn sub_threshold_windows(points: &[SweepPoint], threshold: f64) -> Vec<Window> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| {
            (
                p.detuning,
                (p.effective_error().max(1e-300) / threshold).log10(),
            )
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Window> = Vec::new();
    let mut extend = |lo: f64, hi: f64| match out.last_mut() {
        Some(w) if w.hi == lo => w.hi = hi,
        _ => out.push(Window { lo, hi }),
    };
    for w in pts.windows(2) {
        let ((x0, l0), (x1, l1)) = (w[0], w[1]);
        let cross = |a: f64, b: f64| x0 + (x1 - x0) * a / (a - b);
        match (l0 < 0.0, l1 < 0.0) {
            (true, true) => extend(x0, x1),
            (true, false) => extend(x0, cross(l0, l1)),
            (false, true) => extend(cross(l0, l1), x1),
            (false, false) => {}
        }
    }
    out
}
