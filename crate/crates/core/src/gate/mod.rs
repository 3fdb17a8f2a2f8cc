//! Two-transmon Duffing model: static ZZ, echoed cross-resonance calibration,
//! unitary propagation and average gate error.
//!
//! The drive frame rotates at the dressed target frequency. Time evolution is
//! integrated in the interaction picture of the bare diagonal of that frame,
//! so an undriven, uncoupled pair has a constant state vector.

mod calibrate;
mod fidelity;
mod hamiltonian;
pub mod ode;
mod propagate;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DEFAULT_ANHARMONICITY_MHZ;

pub use calibrate::{
    calibrate_cr_echo, evaluate_gate, optimize_rotary, RotaryOptimum, AMPLITUDE_LIMIT_MHZ,
    ROTARY_LIMIT_MHZ,
};
pub use fidelity::{error_from_projection, gate_error, target_zx};
pub use hamiltonian::{
    build_hamiltonian, static_zz, static_zz_perturbative, DressedPair, ZzResult, MIN_LABEL_OVERLAP,
};
pub use propagate::{propagate_unitary, unitarity_defect};
pub use sweep::{
    error_vs_detuning_sweep, sub_threshold_windows, PointStatus, SweepOptions, SweepPoint, Window,
};

/// Angular frequency in rad/ns of 1 MHz.
pub(crate) const RAD_PER_NS: f64 = 2.0 * std::f64::consts::PI * 1e-3;

pub const DEFAULT_LEVELS: usize = 4;
/// Target accuracy of a propagated gate.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-7;
pub const DEFAULT_RISE_FALL_NS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonPair {
    #[serde(rename = "f_c_mhz")]
    pub f_c: f64,
    #[serde(rename = "f_t_mhz")]
    pub f_t: f64,
    #[serde(rename = "delta_c_mhz", default = "default_anharmonicity")]
    pub delta_c: f64,
    #[serde(rename = "delta_t_mhz", default = "default_anharmonicity")]
    pub delta_t: f64,
    #[serde(rename = "j_coupling_mhz")]
    pub j_coupling: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_anharmonicity() -> f64 {
    DEFAULT_ANHARMONICITY_MHZ
}

fn default_levels() -> usize {
    DEFAULT_LEVELS
}

impl Default for TransmonPair {
    fn default() -> Self {
        TransmonPair {
            f_c: 5100.0,
            f_t: 5000.0,
            delta_c: DEFAULT_ANHARMONICITY_MHZ,
            delta_t: DEFAULT_ANHARMONICITY_MHZ,
            j_coupling: 1.75,
            levels: DEFAULT_LEVELS,
        }
    }
}

impl TransmonPair {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 3 {
            return Err(Error::param(format!(
                "levels = {} but the two-excitation physics needs at least 3",
                self.levels
            )));
        }
        if self.levels > 8 {
            return Err(Error::param(format!(
                "levels = {} exceeds the supported 8",
                self.levels
            )));
        }
        if !(self.f_c.is_finite() && self.f_t.is_finite() && self.f_c > 0.0 && self.f_t > 0.0) {
            return Err(Error::param("qubit frequencies must be positive"));
        }
        if !(self.delta_c < 0.0 && self.delta_t < 0.0) {
            return Err(Error::param("anharmonicities must be negative"));
        }
        if !(self.j_coupling.is_finite() && self.j_coupling >= 0.0) {
            return Err(Error::param(format!(
                "J must be ≥ 0, got {}",
                self.j_coupling
            )));
        }
        Ok(())
    }

    /// Δ = f_c − f_t.
    pub fn detuning(&self) -> f64 {
        self.f_c - self.f_t
    }

    /// Same pair with the control moved to `f_t + detuning`.
    pub fn with_detuning(&self, detuning: f64) -> Self {
        TransmonPair {
            f_c: self.f_t + detuning,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CRPulseSpec {
    #[serde(rename = "gate_time_ns")]
    pub gate_time: f64,
    #[serde(rename = "rise_fall_ns", default = "default_rise_fall")]
    pub rise_fall: f64,
    #[serde(rename = "amplitude_mhz")]
    pub amplitude: f64,
    #[serde(rename = "rotary_amplitude_mhz", default)]
    pub rotary_amplitude: f64,
    #[serde(default = "default_echo")]
    pub echo: bool,
}

fn default_rise_fall() -> f64 {
    DEFAULT_RISE_FALL_NS
}

fn default_echo() -> bool {
    true
}

impl CRPulseSpec {
    pub fn echoed(gate_time: f64, amplitude: f64) -> Self {
        CRPulseSpec {
            gate_time,
            rise_fall: DEFAULT_RISE_FALL_NS,
            amplitude,
            rotary_amplitude: 0.0,
            echo: true,
        }
    }

    /// Duration of one flat-topped segment: half the gate when echoed.
    pub fn segment_time(&self) -> f64 {
        if self.echo {
            0.5 * self.gate_time
        } else {
            self.gate_time
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rise_fall.is_finite() && self.rise_fall > 0.0) {
            return Err(Error::param("rise_fall must be positive"));
        }
        if !(self.gate_time.is_finite() && self.segment_time() > 2.0 * self.rise_fall) {
            return Err(Error::param(format!(
                "gate_time {} ns leaves no flat top with rise_fall {} ns{}",
                self.gate_time,
                self.rise_fall,
                if self.echo { " per echo half" } else { "" }
            )));
        }
        if !(self.amplitude >= 0.0 && self.rotary_amplitude >= 0.0)
            || !(self.amplitude.is_finite() && self.rotary_amplitude.is_finite())
        {
            return Err(Error::param("amplitudes must be finite and ≥ 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateErrorResult {
    pub error: f64,
    pub zz_khz: f64,
    pub unitarity_defect: f64,
    pub calibrated_amplitude: f64,
}

/// Gaussian-square envelope on [0, duration]: Gaussian edges with
/// 2σ = rise_fall, shifted and rescaled so it is 0 at both ends and 1 on the
/// flat top.
pub fn gaussian_square(t: f64, duration: f64, rise_fall: f64) -> f64 {
    if !(0.0..=duration).contains(&t) {
        return 0.0;
    }
    let sigma = 0.5 * rise_fall;
    let floor = (-0.5 * (rise_fall / sigma).powi(2)).exp();
    let edge = |x: f64| ((-0.5 * (x / sigma).powi(2)).exp() - floor) / (1.0 - floor);
    if t < rise_fall {
        edge(t - rise_fall)
    } else if t > duration - rise_fall {
        edge(t - (duration - rise_fall))
    } else {
        1.0
    }
}
