//! Monte Carlo collision-free yield.
//!
//! Each trial perturbs every target frequency with independent Normal(0, σ)
//! noise and counts collisions. Trial `i` draws from its own stream seeded by
//! `substream(seed, i)`, and the reduction is over integers, so the result is
//! bit-identical for any rayon pool size.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::collision::{count_collisions_indexed, CollisionBounds};
use crate::error::{Error, Result};
use crate::lattice::{ChipState, FreqMap};
use crate::rng::{stream_rng, substream};

pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YieldEstimate {
    pub yield_frac: f64,
    /// 95% binomial half-width.
    pub ci: f64,
    pub mean_collisions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldCurve {
    pub sigma_grid: Vec<f64>,
    pub yields: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
    pub mean_collisions: Vec<f64>,
    pub trials: usize,
}

impl YieldCurve {
    pub fn points(&self) -> impl Iterator<Item = (f64, YieldEstimate)> + '_ {
        (0..self.sigma_grid.len()).map(move |i| {
            (
                self.sigma_grid[i],
                YieldEstimate {
                    yield_frac: self.yields[i],
                    ci: self.ci_halfwidth[i],
                    mean_collisions: self.mean_collisions[i],
                },
            )
        })
    }
}

pub fn binomial_ci(y: f64, trials: usize) -> f64 {
    1.96 * (y * (1.0 - y) / trials as f64).sqrt()
}

struct Indexed {
    edges: Vec<(usize, usize)>,
    base: Vec<f64>,
    anharm: Vec<f64>,
}

fn index_chip(chip: &ChipState, targets: &FreqMap) -> Result<Indexed> {
    let mut base = Vec::with_capacity(chip.len());
    let mut anharm = Vec::with_capacity(chip.len());
    for q in chip.qubits() {
        let f = targets
            .get(&q.id)
            .ok_or_else(|| Error::param(format!("no target frequency for qubit {}", q.id)))?;
        base.push(*f);
        anharm.push(q.anharmonicity);
    }
    let edges = chip
        .edges()
        .iter()
        .map(|&(c, t)| (chip.position(c).unwrap(), chip.position(t).unwrap()))
        .collect();
    Ok(Indexed {
        edges,
        base,
        anharm,
    })
}

fn run(
    ix: &Indexed,
    sigma_f: f64,
    bounds: &CollisionBounds,
    trials: usize,
    seed: u64,
) -> YieldEstimate {
    let (clean, total) = (0..trials as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; ix.base.len()],
            |freqs, trial| {
                let mut rng = stream_rng(substream(seed, trial));
                for (f, b) in freqs.iter_mut().zip(&ix.base) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *f = b + sigma_f * z;
                }
                let n = count_collisions_indexed(&ix.edges, freqs, &ix.anharm, bounds);
                (usize::from(n == 0), n)
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let y = clean as f64 / trials as f64;
    YieldEstimate {
        yield_frac: y,
        ci: binomial_ci(y, trials),
        mean_collisions: total as f64 / trials as f64,
    }
}

fn check_args(sigma_f: f64, trials: usize, bounds: &CollisionBounds) -> Result<()> {
    if trials == 0 {
        return Err(Error::param("trials must be ≥ 1"));
    }
    if !(sigma_f.is_finite() && sigma_f >= 0.0) {
        return Err(Error::param(format!("sigma_f must be ≥ 0, got {sigma_f}")));
    }
    bounds.validate()
}

pub fn yield_estimate(
    chip: &ChipState,
    targets: &FreqMap,
    sigma_f: f64,
    bounds: &CollisionBounds,
    trials: usize,
    seed: u64,
) -> Result<YieldEstimate> {
    check_args(sigma_f, trials, bounds)?;
    let ix = index_chip(chip, targets)?;
    Ok(run(&ix, sigma_f, bounds, trials, seed))
}

/// Yield at each σ; point `k` uses seed `substream(seed, k)`.
pub fn yield_curve(
    chip: &ChipState,
    targets: &FreqMap,
    sigma_grid: &[f64],
    bounds: &CollisionBounds,
    trials: usize,
    seed: u64,
) -> Result<YieldCurve> {
    if sigma_grid.is_empty() {
        return Err(Error::param("sigma grid is empty"));
    }
    if sigma_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("sigma grid must be strictly ascending"));
    }
    for &s in sigma_grid {
        check_args(s, trials, bounds)?;
    }
    let ix = index_chip(chip, targets)?;
    let mut curve = YieldCurve {
        sigma_grid: sigma_grid.to_vec(),
        yields: Vec::with_capacity(sigma_grid.len()),
        ci_halfwidth: Vec::with_capacity(sigma_grid.len()),
        mean_collisions: Vec::with_capacity(sigma_grid.len()),
        trials,
    };
    for (k, &s) in sigma_grid.iter().enumerate() {
        let e = run(&ix, s, bounds, trials, substream(seed, k as u64));
        curve.yields.push(e.yield_frac);
        curve.ci_halfwidth.push(e.ci);
        curve.mean_collisions.push(e.mean_collisions);
    }
    Ok(curve)
}
