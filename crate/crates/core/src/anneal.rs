//! Stochastic model of the adaptive anneal loop.
//!
//! A junction starts at r0 and must land within ±band of R_T. Each exposure
//! adds `step_fraction` of the remaining gap, scaled by log-normal noise. The
//! first exposure of a fresh junction also has a minimum jump (the onset),
//! drawn log-normally around `onset_median_rel·r0`. Resistance can never
//! exceed a hidden per-junction ceiling r0·(1 + s), with s ~ N(0.14, 0.02).
//! Resistance only grows, so a step that lands above the band is final.
//!
//! The onset is what makes small targets overshoot. With gap-proportional
//! steps alone the success rate barely depends on ΔR at the low end.

use std::collections::BTreeMap;
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use crate::error::{Error, Result};
use crate::lattice::ChipState;
use crate::rng::{stream_rng, substream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnnealConfig {
    pub band_rel: f64,
    pub step_fraction: f64,
    pub step_sigma_rel: f64,
    pub saturation_mean_rel: f64,
    pub saturation_sigma_rel: f64,
    pub max_exposures: u32,
    /// Median first-exposure jump relative to r0; 0 disables the onset.
    pub onset_median_rel: f64,
    pub onset_sigma: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            band_rel: 0.003,
            step_fraction: 0.5,
            step_sigma_rel: 0.39,
            saturation_mean_rel: 0.14,
            saturation_sigma_rel: 0.02,
            max_exposures: 100,
            onset_median_rel: 0.012,
            onset_sigma: 0.5,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.band_rel > 0.0 && self.band_rel < 0.01) {
            return Err(Error::param(format!(
                "band_rel must be in (0, 0.01), got {}",
                self.band_rel
            )));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::param(format!(
                "step_fraction must be in (0, 1], got {}",
                self.step_fraction
            )));
        }
        if !(self.saturation_mean_rel > 0.0) {
            return Err(Error::param("saturation_mean_rel must be > 0"));
        }
        for (name, v) in [
            ("step_sigma_rel", self.step_sigma_rel),
            ("saturation_sigma_rel", self.saturation_sigma_rel),
            ("onset_median_rel", self.onset_median_rel),
            ("onset_sigma", self.onset_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!("{name} must be ≥ 0, got {v}")));
            }
        }
        if self.max_exposures == 0 {
            return Err(Error::param("max_exposures must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealStatus {
    Success,
    Overshoot,
    UndershootSaturated,
    ExposureLimit,
}

impl fmt::Display for AnnealStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnealStatus::Success => "success",
            AnnealStatus::Overshoot => "overshoot",
            AnnealStatus::UndershootSaturated => "undershoot_saturated",
            AnnealStatus::ExposureLimit => "exposure_limit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealOutcome {
    pub r0: f64,
    pub r_target: f64,
    pub final_r: f64,
    pub exposures: u32,
    pub status: AnnealStatus,
    /// (final_r − R_T)/R_T.
    pub final_dev_rel: f64,
}

impl AnnealOutcome {
    pub fn planned_dr(&self) -> f64 {
        self.r_target / self.r0 - 1.0
    }

    /// final_r / r0, always positive.
    pub fn increment(&self) -> f64 {
        self.final_r / self.r0
    }
}

fn simulate(
    r0: f64,
    r_target: f64,
    cfg: &AnnealConfig,
    rng: &mut StreamRng,
    mut trace: Option<&mut Vec<f64>>,
) -> AnnealOutcome {
    let z = |rng: &mut StreamRng| -> f64 { StandardNormal.sample(rng) };
    let sat = (cfg.saturation_mean_rel + cfg.saturation_sigma_rel * z(rng)).max(0.0);
    let r_max = r0 * (1.0 + sat);
    let floor = r_target * (1.0 - cfg.band_rel);
    let mut r = r0;
    let mut exposures = 0u32;
    let mut saturated = false;
    if let Some(t) = trace.as_deref_mut() {
        t.push(r);
    }
    while r < floor && !saturated && exposures < cfg.max_exposures {
        let mut step = cfg.step_fraction * (r_target - r) * (cfg.step_sigma_rel * z(rng)).exp();
        if exposures == 0 && cfg.onset_median_rel > 0.0 {
            let onset = r0 * cfg.onset_median_rel * (cfg.onset_sigma * z(rng)).exp();
            step = step.max(onset);
        }
        r += step;
        exposures += 1;
        if r >= r_max {
            r = r_max.max(r0);
            saturated = true;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(r);
        }
    }
    let dev = (r - r_target) / r_target;
    let status = if dev.abs() <= cfg.band_rel {
        AnnealStatus::Success
    } else if dev > cfg.band_rel {
        AnnealStatus::Overshoot
    } else if saturated {
        AnnealStatus::UndershootSaturated
    } else {
        AnnealStatus::ExposureLimit
    };
    AnnealOutcome {
        r0,
        r_target,
        final_r: r,
        exposures,
        status,
        final_dev_rel: dev,
    }
}

fn check_junction(r0: f64, r_target: f64, cfg: &AnnealConfig) -> Result<()> {
    cfg.validate()?;
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::param(format!("r0 must be > 0, got {r0}")));
    }
    let floor = r0 * (1.0 - cfg.band_rel);
    if !(r_target >= floor) {
        return Err(Error::Monotonicity {
            target: r_target,
            floor,
        });
    }
    Ok(())
}

pub fn anneal_junction(
    r0: f64,
    r_target: f64,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<AnnealOutcome> {
    check_junction(r0, r_target, cfg)?;
    Ok(simulate(r0, r_target, cfg, &mut stream_rng(seed), None))
}

/// Same as [`anneal_junction`] plus the resistance after every exposure,
/// starting with r0.
pub fn anneal_junction_traced(
    r0: f64,
    r_target: f64,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<(AnnealOutcome, Vec<f64>)> {
    check_junction(r0, r_target, cfg)?;
    let mut trace = Vec::new();
    let out = simulate(r0, r_target, cfg, &mut stream_rng(seed), Some(&mut trace));
    Ok((out, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitAnneal {
    pub id: usize,
    pub r0: f64,
    pub r_target: f64,
    /// Rejected targets carry the reason instead of an outcome.
    pub outcome: std::result::Result<AnnealOutcome, String>,
}

/// Anneal every qubit that has a target. Qubit `id` uses
/// `substream(seed, id)`, so results do not depend on iteration order.
pub fn anneal_chip(
    chip: &ChipState,
    targets_r: &BTreeMap<usize, f64>,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<Vec<QubitAnneal>> {
    cfg.validate()?;
    if let Some(id) = targets_r.keys().find(|id| chip.qubit(**id).is_none()) {
        return Err(Error::param(format!("target for unknown qubit {id}")));
    }
    let mut out = Vec::with_capacity(targets_r.len());
    for q in chip.qubits() {
        let Some(&rt) = targets_r.get(&q.id) else {
            continue;
        };
        let outcome = anneal_junction(q.r_n, rt, cfg, substream(seed, q.id as u64))
            .map_err(|e| e.to_string());
        out.push(QubitAnneal {
            id: q.id,
            r0: q.r_n,
            r_target: rt,
            outcome,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinStats {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub success: usize,
    pub overshoot: usize,
    pub undershoot: usize,
}

impl BinStats {
    pub fn success_rate(&self) -> f64 {
        ratio(self.success, self.n)
    }
    pub fn overshoot_rate(&self) -> f64 {
        ratio(self.overshoot, self.n)
    }
    pub fn undershoot_rate(&self) -> f64 {
        ratio(self.undershoot, self.n)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnealStats {
    pub n: usize,
    pub success_rate: f64,
    /// RMS of final_dev_rel over successes.
    pub rms_dev_success: f64,
    pub overshoot: usize,
    /// Saturated or exposure-capped below the band.
    pub undershoot: usize,
    pub bins: Vec<BinStats>,
}

/// Aggregate statistics. `bin_edges` are ascending planned-ΔR edges; bin k
/// covers [edges[k], edges[k+1]). Outcomes outside every bin still count in
/// the aggregate.
pub fn success_stats(outcomes: &[AnnealOutcome], bin_edges: &[f64]) -> Result<AnnealStats> {
    if outcomes.is_empty() {
        return Err(Error::param("no anneal outcomes"));
    }
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("bin edges must be strictly ascending"));
    }
    let mut bins: Vec<BinStats> = bin_edges
        .windows(2)
        .map(|w| BinStats {
            lo: w[0],
            hi: w[1],
            n: 0,
            success: 0,
            overshoot: 0,
            undershoot: 0,
        })
        .collect();
    let (mut success, mut over, mut under, mut sq) = (0usize, 0usize, 0usize, 0.0);
    for o in outcomes {
        let dr = o.planned_dr();
        let mut bin = bins.iter_mut().find(|b| dr >= b.lo && dr < b.hi);
        if let Some(b) = bin.as_deref_mut() {
            b.n += 1;
        }
        match o.status {
            AnnealStatus::Success => {
                success += 1;
                sq += o.final_dev_rel * o.final_dev_rel;
                if let Some(b) = bin {
                    b.success += 1;
                }
            }
            AnnealStatus::Overshoot => {
                over += 1;
                if let Some(b) = bin {
                    b.overshoot += 1;
                }
            }
            AnnealStatus::UndershootSaturated | AnnealStatus::ExposureLimit => {
                under += 1;
                if let Some(b) = bin {
                    b.undershoot += 1;
                }
            }
        }
    }
    Ok(AnnealStats {
        n: outcomes.len(),
        success_rate: success as f64 / outcomes.len() as f64,
        rms_dev_success: if success > 0 {
            (sq / success as f64).sqrt()
        } else {
            f64::NAN
        },
        overshoot: over,
        undershoot: under,
        bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    /// Kolmogorov–Smirnov distance to the fitted distribution.
    pub ks: f64,
    /// Asymptotic Kolmogorov p-value. Parameters are estimated from the same
    /// sample, which makes this optimistic.
    pub p_value: f64,
}

impl LogNormalFit {
    /// Asymptotic KS critical value at level `alpha` for `n` samples.
    pub fn critical_value(n: usize, alpha: f64) -> f64 {
        (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
    }
}

pub const MIN_LOGNORMAL_SAMPLES: usize = 10;

/// Maximum-likelihood log-normal fit of strictly positive samples.
pub fn lognormal_fit(samples: &[f64]) -> Result<LogNormalFit> {
    if samples.len() < MIN_LOGNORMAL_SAMPLES {
        return Err(Error::DegenerateFit(format!(
            "need ≥ {MIN_LOGNORMAL_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::param(format!(
            "log-normal samples must be positive, got {bad}"
        )));
    }
    let n = samples.len() as f64;
    let logs: Vec<f64> = samples.iter().map(|x| x.ln()).collect();
    let mu = logs.iter().sum::<f64>() / n;
    let sigma = (logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n).sqrt();
    if !(sigma > 1e-12 * mu.abs().max(1e-300)) {
        return Err(Error::DegenerateFit("samples have no spread".into()));
    }
    let dist = LogNormal::new(mu, sigma).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = dist.cdf(x);
            (cdf - i as f64 / n).max((i + 1) as f64 / n - cdf)
        })
        .fold(0.0, f64::max);
    Ok(LogNormalFit {
        mu,
        sigma,
        ks,
        p_value: kolmogorov_p(ks, samples.len()),
    })
}

/// P(D > d) for the one-sample statistic, with the usual finite-n
/// correction to the Kolmogorov limit distribution.
fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
