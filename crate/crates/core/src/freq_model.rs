//! Power-law relation between junction resistance and qubit frequency,
//! f01 = a·Rn^p.
//!
//! The exponent comes from ordinary least squares in log-log space. The
//! prefactor is then set so that the linear-frequency residuals average to
//! zero, which keeps frequency predictions unbiased in MHz (the log-space
//! intercept alone is biased low by roughly σ²/2f under noise). On exact
//! power-law data the two coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ChipState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    /// Prefactor, MHz·Ω^−p.
    pub a: f64,
    /// Exponent; negative.
    pub p: f64,
    /// Residual standard deviation, MHz.
    #[serde(rename = "sigma_f_mhz")]
    pub sigma_f: f64,
}

impl PowerLawModel {
    pub fn new(a: f64, p: f64, sigma_f: f64) -> Result<Self> {
        let m = PowerLawModel { a, p, sigma_f };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::param(format!(
                "power-law prefactor must be > 0, got {}",
                self.a
            )));
        }
        if !(self.p.is_finite() && self.p < 0.0) {
            return Err(Error::param(format!(
                "power-law exponent must be < 0, got {}",
                self.p
            )));
        }
        if !(self.sigma_f.is_finite() && self.sigma_f >= 0.0) {
            return Err(Error::param(format!(
                "sigma_f must be ≥ 0, got {}",
                self.sigma_f
            )));
        }
        Ok(())
    }

    /// f01 in MHz at resistance `r_n` Ω.
    pub fn predict_f01(&self, r_n: f64) -> Result<f64> {
        if !(r_n > 0.0) {
            return Err(Error::param(format!("r_n must be > 0, got {r_n}")));
        }
        Ok(self.a * r_n.powf(self.p))
    }

    /// Resistance in Ω that the model maps to `f01` MHz.
    pub fn predict_rn(&self, f01: f64) -> Result<f64> {
        if !(f01 > 0.0) {
            return Err(Error::param(format!("f01 must be > 0, got {f01}")));
        }
        Ok((f01 / self.a).powf(1.0 / self.p))
    }

    /// Frequency-equivalent spread of a relative resistance error:
    /// |∂f/∂R|·σ_R = |p|·f(R)·σ_R/R.
    pub fn freq_sensitivity(&self, r_n: f64, sigma_r_rel: f64) -> Result<f64> {
        if !(sigma_r_rel >= 0.0) {
            return Err(Error::param(format!(
                "sigma_r_rel must be ≥ 0, got {sigma_r_rel}"
            )));
        }
        Ok(self.p.abs() * self.predict_f01(r_n)? * sigma_r_rel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitStats {
    /// (qubit id, measured − predicted MHz).
    pub residuals: Vec<(usize, f64)>,
    pub sigma_f: f64,
    pub mean_f: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Fix p instead of fitting it, e.g. `Some(-0.5)`.
    pub pinned_exponent: Option<f64>,
}

/// Fit on bare (r_n Ω, f01 MHz) points; residual ids are point indices.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(PowerLawModel, FitStats)> {
    let labeled: Vec<(usize, f64, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, &(r, f))| (i, r, f))
        .collect();
    fit_power_law_with(&labeled, FitOptions::default())
}

/// Fit on measured f01 of every qubit of a chip.
pub fn fit_chip(chip: &ChipState, opts: FitOptions) -> Result<(PowerLawModel, FitStats)> {
    let samples = chip
        .qubits()
        .iter()
        .map(|q| {
            q.f01
                .map(|f| (q.id, q.r_n, f))
                .ok_or_else(|| Error::param(format!("qubit {} has no f01 to fit", q.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_power_law_with(&samples, opts)
}

/// Fit on (id, r_n Ω, f01 MHz) samples.
pub fn fit_power_law_with(
    samples: &[(usize, f64, f64)],
    opts: FitOptions,
) -> Result<(PowerLawModel, FitStats)> {
    if samples.len() < 2 {
        return Err(Error::param(format!(
            "power-law fit needs ≥ 2 points, got {}",
            samples.len()
        )));
    }
    for &(id, r, f) in samples {
        if !(r > 0.0 && f > 0.0 && r.is_finite() && f.is_finite()) {
            return Err(Error::param(format!(
                "point {id}: resistance and frequency must be positive, got ({r}, {f})"
            )));
        }
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.2.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;

    let p = match opts.pinned_exponent {
        Some(p) => p,
        None => {
            let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
            let sxy: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - x_mean) * (y - y_mean))
                .sum();
            // Relative to the spread of ln R itself, not absolute.
            if sxx <= 1e-24 * n * x_mean.abs().max(1.0).powi(2) {
                return Err(Error::SingularFit("all resistances are equal".into()));
            }
            sxy / sxx
        }
    };
    if !(p < 0.0) {
        return Err(Error::SingularFit(format!(
            "fitted exponent {p} is not negative; data do not follow a decreasing power law"
        )));
    }

    // Mean-preserving prefactor: Σ f_i = a·Σ R_i^p.
    let f_sum: f64 = samples.iter().map(|s| s.2).sum();
    let basis_sum: f64 = samples.iter().map(|s| s.1.powf(p)).sum();
    let a = f_sum / basis_sum;

    let residuals: Vec<(usize, f64)> = samples
        .iter()
        .map(|&(id, r, f)| (id, f - a * r.powf(p)))
        .collect();
    let mean_res = residuals.iter().map(|r| r.1).sum::<f64>() / n;
    let sigma_f = (residuals
        .iter()
        .map(|r| (r.1 - mean_res).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let stats = FitStats {
        residuals,
        sigma_f,
        mean_f: f_sum / n,
    };
    Ok((PowerLawModel::new(a, p, sigma_f)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn model() -> PowerLawModel {
        PowerLawModel::new(5e5, -0.5, 0.0).unwrap()
    }

    #[test]
    fn two_points_determine_the_law() {
        let (m, stats) = fit_power_law(&[(10_000.0, 5000.0), (40_000.0, 2500.0)]).unwrap();
        assert!((m.p + 0.5).abs() < 1e-14);
        assert!((m.a / 5e5 - 1.0).abs() < 1e-12);
        assert!(stats.sigma_f < 1e-9);
    }

    #[test]
    fn noiseless_recovery() {
        let truth = PowerLawModel::new(5e5, -0.55, 0.0).unwrap();
        let pts: Vec<_> = (0..10)
            .map(|i| {
                let r = 8000.0 + 400.0 * i as f64;
                (r, truth.predict_f01(r).unwrap())
            })
            .collect();
        let (m, stats) = fit_power_law(&pts).unwrap();
        assert!((m.p - truth.p).abs() < 1e-9);
        assert!((m.a / truth.a - 1.0).abs() < 1e-9);
        assert!(stats.sigma_f < 1e-6);
    }

    #[test]
    fn noisy_refit_recovers_spread() {
        let truth = model();
        let mut rng = crate::rng::stream_rng(11);
        let noise = Normal::new(0.0, 18.0).unwrap();
        let pts: Vec<_> = (0..100)
            .map(|_| {
                let r = rng.random_range(8000.0..12000.0);
                (r, truth.predict_f01(r).unwrap() + noise.sample(&mut rng))
            })
            .collect();
        let (m, stats) = fit_power_law(&pts).unwrap();
        assert!(
            (14.4..=21.6).contains(&m.sigma_f),
            "sigma_f = {}",
            m.sigma_f
        );
        let mean_res = stats.residuals.iter().map(|r| r.1).sum::<f64>() / 100.0;
        assert!(mean_res.abs() < 1e-6 * stats.mean_f);
    }

    #[test]
    fn pinned_exponent_is_respected() {
        let truth = PowerLawModel::new(5e5, -0.55, 0.0).unwrap();
        let pts: Vec<_> = [9000.0, 10000.0, 11000.0]
            .iter()
            .enumerate()
            .map(|(i, &r)| (i, r, truth.predict_f01(r).unwrap()))
            .collect();
        let (m, _) = fit_power_law_with(
            &pts,
            FitOptions {
                pinned_exponent: Some(-0.5),
            },
        )
        .unwrap();
        assert_eq!(m.p, -0.5);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0)]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            fit_power_law(&[(1.0, 1.0), (-1.0, 2.0)]),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            fit_power_law(&[(1e4, 5000.0), (1e4, 4900.0), (1e4, 5100.0)]),
            Err(Error::SingularFit(_))
        ));
    }

    #[test]
    fn predictions() {
        let m = model();
        assert!((m.predict_f01(10_000.0).unwrap() - 5000.0).abs() < 1e-9);
        assert!((m.predict_f01(10_201.0).unwrap() - 4_950.495_049_5).abs() < 1e-6);
        assert!(m.predict_f01(11_000.0).unwrap() < m.predict_f01(10_000.0).unwrap());
        assert!((m.predict_rn(5000.0).unwrap() - 10_000.0).abs() < 1e-8);
        assert!((m.predict_rn(2500.0).unwrap() - 40_000.0).abs() < 1e-7);
        assert!(m.predict_f01(0.0).is_err());
        assert!(m.predict_rn(-5.0).is_err());
    }

    #[test]
    fn sensitivity_examples() {
        let m = model();
        assert!((m.freq_sensitivity(10_000.0, 0.003).unwrap() - 7.5).abs() < 1e-9);
        assert_eq!(m.freq_sensitivity(10_000.0, 0.0).unwrap(), 0.0);
        assert!(m.freq_sensitivity(10_000.0, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn predict_is_strictly_decreasing(a in 1e3f64..1e7, p in -2.0f64..-0.05,
                                          r in 100.0f64..1e6, bump in 1e-6f64..0.5) {
            let m = PowerLawModel::new(a, p, 0.0).unwrap();
            prop_assert!(m.predict_f01(r * (1.0 + bump)).unwrap() < m.predict_f01(r).unwrap());
        }

        #[test]
        fn inverse_round_trip(f in 1000.0f64..9000.0, p in -1.0f64..-0.2) {
            let m = PowerLawModel::new(5e5, p, 0.0).unwrap();
            let back = m.predict_f01(m.predict_rn(f).unwrap()).unwrap();
            prop_assert!((back / f - 1.0).abs() < 1e-12);
        }

        #[test]
        fn sensitivity_matches_central_difference(r in 5e3f64..2e4, p in -1.0f64..-0.2,
                                                  s in 1e-4f64..0.05) {
            let m = PowerLawModel::new(5e5, p, 0.0).unwrap();
            let h = 1e-4 * r;
            let deriv = (m.predict_f01(r + h).unwrap() - m.predict_f01(r - h).unwrap()) / (2.0 * h);
            let fd = deriv.abs() * r * s;
            let analytic = m.freq_sensitivity(r, s).unwrap();
            prop_assert!((analytic / fd - 1.0).abs() < 1e-3);
        }

        #[test]
        fn refit_on_own_predictions_is_fixed_point(p in -0.9f64..-0.3, seed in 0u64..1000) {
            let mut rng = crate::rng::stream_rng(seed);
            let pts: Vec<_> = (0..20)
                .map(|_| {
                    let r: f64 = rng.random_range(7000.0..13000.0);
                    (r, 5e5 * r.powf(p) + rng.random_range(-20.0..20.0))
                })
                .collect();
            let (m1, _) = fit_power_law(&pts).unwrap();
            let again: Vec<_> = pts.iter().map(|&(r, _)| (r, m1.predict_f01(r).unwrap())).collect();
            let (m2, _) = fit_power_law(&again).unwrap();
            prop_assert!((m2.a / m1.a - 1.0).abs() < 1e-9);
            prop_assert!((m2.p / m1.p - 1.0).abs() < 1e-9);
        }
    }
}
