//! Echo amplitude calibration and rotary-tone optimization.

use std::cell::RefCell;
use std::f64::consts::FRAC_PI_2;

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::brent::BrentRoot;
use argmin::solver::goldensectionsearch::GoldenSectionSearch;
use serde::Serialize;

use super::fidelity::error_from_columns;
use super::hamiltonian::{zz_of, DressedPair};
use super::propagate::{column_defect, Propagator};
use super::{CRPulseSpec, GateErrorResult, TransmonPair};
use crate::error::{Error, Result};

/// Calibration gives up once the bracketing scan passes this drive strength.
pub const AMPLITUDE_LIMIT_MHZ: f64 = 400.0;
pub const ROTARY_LIMIT_MHZ: f64 = 60.0;
const AMPLITUDE_START_MHZ: f64 = 2.0;
const AMPLITUDE_GROWTH: f64 = 1.6;
const AMPLITUDE_XTOL_MHZ: f64 = 1e-3;
const ROTARY_GRID_STEP_MHZ: f64 = 5.0;

/// Adapts a fallible scalar function to argmin, keeping the first library
/// error so it can be returned unchanged.
struct Scalar<F> {
    f: F,
    failure: RefCell<Option<Error>>,
}

impl<F: Fn(f64) -> Result<f64>> Scalar<F> {
    fn new(f: F) -> Self {
        Scalar {
            f,
            failure: RefCell::new(None),
        }
    }

    fn take_failure(&self, fallback: argmin::core::Error) -> Error {
        self.failure
            .borrow_mut()
            .take()
            .unwrap_or_else(|| Error::Solver(fallback.to_string()))
    }
}

impl<F: Fn(f64) -> Result<f64>> CostFunction for &Scalar<F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, argmin::core::Error> {
        (self.f)(*x).map_err(|e| {
            let msg = e.to_string();
            self.failure.borrow_mut().get_or_insert(e);
            argmin::core::Error::msg(msg)
        })
    }
}

fn check_gate_time(gate_time: f64) -> Result<()> {
    if !(100.0..=1000.0).contains(&gate_time) {
        return Err(Error::param(format!(
            "gate_time must be in [100, 1000] ns, got {gate_time}"
        )));
    }
    Ok(())
}

fn dressed_for_gate(pair: &TransmonPair) -> Result<DressedPair> {
    let d = DressedPair::new(pair)?;
    if d.ambiguous() {
        return Err(Error::Calibration(format!(
            "computational levels are hybridized at Δ = {} MHz (overlap {:.3})",
            pair.detuning(),
            d.min_computational_overlap()
        )));
    }
    Ok(d)
}

/// Target polar angle after the echo, averaged over control in |0⟩ and |1⟩.
fn conditional_angle(d: &DressedPair, spec: &CRPulseSpec, solver_tol: f64) -> Result<f64> {
    let prop = Propagator::new(d, spec, solver_tol)?;
    let y = prop.evolve_dressed(&[d.label(0, 0), d.label(1, 0)])?;
    let n = d.dim();
    let mut sum = 0.0;
    for c in 0..2 {
        let col = &y[c * n..(c + 1) * n];
        let amp = |t: usize| {
            let v = d.vectors.column(d.label(c, t));
            col.iter()
                .zip(v.iter())
                .map(|(a, b)| a * b)
                .sum::<num_complex::Complex64>()
        };
        let (a0, a1) = (amp(0), amp(1));
        sum += (2.0 * (a0.conj() * a1).norm()).atan2(a0.norm_sqr() - a1.norm_sqr());
    }
    Ok(0.5 * sum)
}

/// Find the echo amplitude that rotates the target by π/2 conditionally on
/// the control, i.e. the ZX(π/2) point, with the rotary tone off.
pub fn calibrate_cr_echo(
    pair: &TransmonPair,
    gate_time: f64,
    solver_tol: f64,
) -> Result<CRPulseSpec> {
    check_gate_time(gate_time)?;
    let d = dressed_for_gate(pair)?;
    let base = CRPulseSpec::echoed(gate_time, 0.0);
    base.validate()?;
    let angle = |amp: f64| {
        let spec = CRPulseSpec {
            amplitude: amp,
            ..base
        };
        conditional_angle(&d, &spec, solver_tol).map(|th| th - FRAC_PI_2)
    };
    let (mut lo, mut hi) = (0.0, AMPLITUDE_START_MHZ);
    loop {
        if hi >= AMPLITUDE_LIMIT_MHZ {
            return Err(Error::Calibration(format!(
                "no amplitude below {AMPLITUDE_LIMIT_MHZ} MHz reaches a π/2 conditional rotation at Δ = {} MHz",
                pair.detuning()
            )));
        }
        if angle(hi)? >= 0.0 {
            break;
        }
        lo = hi;
        hi *= AMPLITUDE_GROWTH;
    }
    let problem = Scalar::new(angle);
    let res = Executor::new(&problem, BrentRoot::new(lo, hi, AMPLITUDE_XTOL_MHZ))
        .configure(|s| s.max_iters(100))
        .run()
        .map_err(|e| problem.take_failure(e))?;
    let amp = res
        .state()
        .get_best_param()
        .copied()
        .ok_or_else(|| Error::Calibration("root search returned no amplitude".into()))?;
    Ok(CRPulseSpec {
        amplitude: amp,
        ..base
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotaryOptimum {
    pub spec: CRPulseSpec,
    pub error: f64,
    pub zero_rotary_error: f64,
    /// False when the line search stopped on its iteration cap; `spec` is
    /// then the best point seen.
    pub converged: bool,
}

fn echo_error(d: &DressedPair, spec: &CRPulseSpec, solver_tol: f64) -> Result<f64> {
    let prop = Propagator::new(d, spec, solver_tol)?;
    let cols = prop.evolve_dressed(&d.computational())?;
    Ok(error_from_columns(&cols, d))
}

/// Minimize gate error over the rotary amplitude in [0, 60] MHz: a coarse
/// grid locates the basin, golden-section search refines it.
pub fn optimize_rotary(
    pair: &TransmonPair,
    spec: &CRPulseSpec,
    solver_tol: f64,
) -> Result<RotaryOptimum> {
    let d = dressed_for_gate(pair)?;
    let base = CRPulseSpec {
        rotary_amplitude: 0.0,
        ..*spec
    };
    base.validate()?;
    let err_at = |r: f64| {
        echo_error(
            &d,
            &CRPulseSpec {
                rotary_amplitude: r,
                ..base
            },
            solver_tol,
        )
    };
    let steps = (ROTARY_LIMIT_MHZ / ROTARY_GRID_STEP_MHZ).round() as usize;
    let mut grid = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let r = i as f64 * ROTARY_GRID_STEP_MHZ;
        grid.push((r, err_at(r)?));
    }
    let zero_rotary_error = grid[0].1;
    let (mut best_r, mut best_e) =
        grid.iter()
            .copied()
            .fold((0.0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b });
    let lo = (best_r - ROTARY_GRID_STEP_MHZ).max(0.0);
    let hi = (best_r + ROTARY_GRID_STEP_MHZ).min(ROTARY_LIMIT_MHZ);
    let problem = Scalar::new(err_at);
    let solver = GoldenSectionSearch::new(lo, hi)
        .and_then(|s| s.with_tolerance(0.005))
        .map_err(|e| Error::Solver(e.to_string()))?;
    let res = Executor::new(&problem, solver)
        .configure(|s| s.param(best_r).max_iters(60))
        .run()
        .map_err(|e| problem.take_failure(e))?;
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    if let Some(&r) = state.get_best_param() {
        if state.get_best_cost() < best_e {
            best_r = r;
            best_e = state.get_best_cost();
        }
    }
    Ok(RotaryOptimum {
        spec: CRPulseSpec {
            rotary_amplitude: best_r,
            ..base
        },
        error: best_e,
        zero_rotary_error,
        converged,
    })
}

/// Score a calibrated spec: gate error, static ZZ and the unitarity defect of
/// the propagated computational columns.
pub fn evaluate_gate(
    pair: &TransmonPair,
    spec: &CRPulseSpec,
    solver_tol: f64,
) -> Result<GateErrorResult> {
    let d = DressedPair::new(pair)?;
    let prop = Propagator::new(&d, spec, solver_tol)?;
    let cols = prop.evolve_dressed(&d.computational())?;
    Ok(GateErrorResult {
        error: error_from_columns(&cols, &d),
        zz_khz: if pair.j_coupling == 0.0 {
            0.0
        } else {
            zz_of(&d).zz_khz
        },
        unitarity_defect: column_defect(&cols, d.dim()),
        calibrated_amplitude: spec.amplitude,
    })
}
