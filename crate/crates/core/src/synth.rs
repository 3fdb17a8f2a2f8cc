//! Synthetic chips: a topology populated with junction resistances drawn
//! around a nominal design frequency.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_model::PowerLawModel;
use crate::lattice::{ChipState, QubitRecord, DEFAULT_ANHARMONICITY_MHZ};
use crate::rng::{stream_rng, substream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub f_nominal_mhz: f64,
    /// Relative standard deviation of the as-fabricated frequency.
    pub freq_spread_rel: f64,
    /// Scatter of measured f01 about the power law, MHz. Zero leaves f01 unset.
    pub measurement_sigma_mhz: f64,
    pub anharmonicity_mhz: f64,
    pub model: PowerLawModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            f_nominal_mhz: 5150.0,
            freq_spread_rel: 0.02,
            measurement_sigma_mhz: 0.0,
            anharmonicity_mhz: DEFAULT_ANHARMONICITY_MHZ,
            model: PowerLawModel {
                a: 5e5,
                p: -0.5,
                sigma_f: 0.0,
            },
        }
    }
}

/// Replace every qubit record of `topology` with synthetic values.
/// Qubit `id` draws from `substream(seed, id)`.
pub fn synth_chip(topology: &ChipState, cfg: &SynthConfig, seed: u64) -> Result<ChipState> {
    cfg.model.validate()?;
    if !(cfg.freq_spread_rel >= 0.0 && cfg.measurement_sigma_mhz >= 0.0) {
        return Err(Error::param("spreads must be non-negative"));
    }
    let spread = Normal::new(0.0, cfg.freq_spread_rel * cfg.f_nominal_mhz)
        .map_err(|e| Error::param(e.to_string()))?;
    let meas =
        Normal::new(0.0, cfg.measurement_sigma_mhz).map_err(|e| Error::param(e.to_string()))?;
    let mut records = Vec::with_capacity(topology.len());
    for q in topology.qubits() {
        let mut rng = stream_rng(substream(seed, q.id as u64));
        let f_design = cfg.f_nominal_mhz + spread.sample(&mut rng);
        let mut rec = QubitRecord::new(q.id, cfg.model.predict_rn(f_design)?);
        rec.anharmonicity = cfg.anharmonicity_mhz;
        if cfg.measurement_sigma_mhz > 0.0 {
            rec.f01 = Some(f_design + meas.sample(&mut rng));
        }
        records.push(rec);
    }
    ChipState::new(topology.name(), records, topology.edges().to_vec())
}
