//! Nearest-neighbor frequency collisions.
//!
//! With Δ = f_c − f_t, the four conditions are
//!
//! | type | condition                         |
//! |------|-----------------------------------|
//! | 1    | \|Δ\| < d1                        |
//! | 2    | \|f_c − (f_t + δ_t/2)\| < d2       |
//! | 3    | \|f_c − (f_t + δ_t)\| < d3         |
//! | 4    | \|Δ\| > d4                        |
//!
//! Types 2 and 3 are evaluated in both edge orientations. d1..d3 are scaled
//! by `multiplier`; d4 is not, since it is a limit rather than a tolerance.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ChipState, FreqMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CollisionType {
    Type1,
    Type2,
    Type3,
    Type4,
}

impl CollisionType {
    pub const ALL: [CollisionType; 4] = [Self::Type1, Self::Type2, Self::Type3, Self::Type4];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CollisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type-{}", self.number())
    }
}

fn default_multiplier() -> f64 {
    1.0
}

fn all_enabled() -> [bool; 4] {
    [true; 4]
}

fn is_all_enabled(e: &[bool; 4]) -> bool {
    e.iter().all(|&x| x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionBounds {
    #[serde(rename = "d1_mhz")]
    pub d1: f64,
    #[serde(rename = "d2_mhz")]
    pub d2: f64,
    #[serde(rename = "d3_mhz")]
    pub d3: f64,
    #[serde(rename = "d4_max_detuning_mhz")]
    pub d4_max_detuning: f64,
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    /// Per-type switch, indexed by type − 1. Disabled types never report.
    #[serde(default = "all_enabled", skip_serializing_if = "is_all_enabled")]
    pub enabled: [bool; 4],
}

impl Default for CollisionBounds {
    fn default() -> Self {
        CollisionBounds {
            d1: 17.0,
            d2: 4.0,
            d3: 30.0,
            d4_max_detuning: 330.0,
            multiplier: 1.0,
            enabled: [true; 4],
        }
    }
}

impl CollisionBounds {
    /// Doubled bounds used for plan generation.
    pub fn plan() -> Self {
        CollisionBounds {
            multiplier: 2.0,
            ..Default::default()
        }
    }

    pub fn with_multiplier(mut self, multiplier: f64) -> Self {
        self.multiplier = multiplier;
        self
    }

    pub fn only(mut self, kinds: &[CollisionType]) -> Self {
        self.enabled = [false; 4];
        for k in kinds {
            self.enabled[k.index()] = true;
        }
        self
    }

    pub fn is_enabled(&self, kind: CollisionType) -> bool {
        self.enabled[kind.index()]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4_max_detuning", self.d4_max_detuning),
            ("multiplier", self.multiplier),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!(
                    "collision bound {name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Effective half-width for types 1–3, or the detuning limit for type 4.
    pub fn width(&self, kind: CollisionType) -> f64 {
        match kind {
            CollisionType::Type1 => self.multiplier * self.d1,
            CollisionType::Type2 => self.multiplier * self.d2,
            CollisionType::Type3 => self.multiplier * self.d3,
            CollisionType::Type4 => self.d4_max_detuning,
        }
    }
}

/// Signed margin to each enabled collision condition, in type order.
/// Negative means inside the collision.
pub fn pair_margins(
    f_c: f64,
    f_t: f64,
    delta_c: f64,
    delta_t: f64,
    bounds: &CollisionBounds,
) -> Vec<(CollisionType, f64)> {
    let detuning = f_c - f_t;
    let mut out = Vec::with_capacity(4);
    for kind in CollisionType::ALL {
        if !bounds.is_enabled(kind) {
            continue;
        }
        let w = bounds.width(kind);
        let margin = match kind {
            CollisionType::Type1 => detuning.abs() - w,
            CollisionType::Type2 => {
                let fwd = (f_c - (f_t + delta_t / 2.0)).abs();
                let rev = (f_t - (f_c + delta_c / 2.0)).abs();
                fwd.min(rev) - w
            }
            CollisionType::Type3 => {
                let fwd = (f_c - (f_t + delta_t)).abs();
                let rev = (f_t - (f_c + delta_c)).abs();
                fwd.min(rev) - w
            }
            CollisionType::Type4 => w - detuning.abs(),
        };
        out.push((kind, margin));
    }
    out
}

/// Violated conditions only.
pub fn pair_collisions(
    f_c: f64,
    f_t: f64,
    delta_c: f64,
    delta_t: f64,
    bounds: &CollisionBounds,
) -> Vec<(CollisionType, f64)> {
    pair_margins(f_c, f_t, delta_c, delta_t, bounds)
        .into_iter()
        .filter(|&(_, m)| m < 0.0)
        .collect()
}

/// Smallest margin across enabled types; `f64::INFINITY` if none enabled.
pub fn pair_worst_margin(
    f_c: f64,
    f_t: f64,
    delta_c: f64,
    delta_t: f64,
    bounds: &CollisionBounds,
) -> f64 {
    pair_margins(f_c, f_t, delta_c, delta_t, bounds)
        .into_iter()
        .map(|(_, m)| m)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub edge: (usize, usize),
    pub kind: CollisionType,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CollisionReport {
    pub violations: Vec<Violation>,
    pub counts: [usize; 4],
}

impl CollisionReport {
    pub fn total(&self) -> usize {
        self.violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: CollisionType) -> usize {
        self.counts[kind.index()]
    }
}

fn lookup(freqs: &FreqMap, id: usize) -> Result<f64> {
    freqs
        .get(&id)
        .copied()
        .ok_or_else(|| Error::param(format!("no frequency for qubit {id}")))
}

/// Collisions on every edge. Each edge contributes at most one violation per
/// type, reported in edge order.
pub fn chip_collisions(
    chip: &ChipState,
    freqs: &FreqMap,
    bounds: &CollisionBounds,
) -> Result<CollisionReport> {
    let mut report = CollisionReport::default();
    for &(c, t) in chip.edges() {
        let (fc, ft) = (lookup(freqs, c)?, lookup(freqs, t)?);
        let dc = chip.qubit(c).expect("validated edge").anharmonicity;
        let dt = chip.qubit(t).expect("validated edge").anharmonicity;
        for (kind, margin) in pair_collisions(fc, ft, dc, dt, bounds) {
            report.counts[kind.index()] += 1;
            report.violations.push(Violation {
                edge: (c, t),
                kind,
                margin,
            });
        }
    }
    Ok(report)
}

/// Violation count only, with frequencies and anharmonicities indexed by
/// position rather than id. This is the inner loop of the yield estimator.
pub(crate) fn count_collisions_indexed(
    edges: &[(usize, usize)],
    freqs: &[f64],
    anharm: &[f64],
    bounds: &CollisionBounds,
) -> usize {
    edges
        .iter()
        .map(|&(c, t)| pair_collisions(freqs[c], freqs[t], anharm[c], anharm[t], bounds).len())
        .sum()
}

/// Per-type minimum margin over the chip, keyed by type.
pub fn chip_min_margins(
    chip: &ChipState,
    freqs: &FreqMap,
    bounds: &CollisionBounds,
) -> Result<BTreeMap<CollisionType, f64>> {
    let mut out = BTreeMap::new();
    for &(c, t) in chip.edges() {
        let (fc, ft) = (lookup(freqs, c)?, lookup(freqs, t)?);
        let dc = chip.qubit(c).expect("validated edge").anharmonicity;
        let dt = chip.qubit(t).expect("validated edge").anharmonicity;
        for (kind, m) in pair_margins(fc, ft, dc, dt, bounds) {
            let e = out.entry(kind).or_insert(f64::INFINITY);
            *e = f64::min(*e, m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::QubitRecord;
    use proptest::prelude::*;

    const D: f64 = -330.0;

    /// Direct transcription of the four inequalities, used as an oracle.
    fn naive(fc: f64, ft: f64, dc: f64, dt: f64, b: &CollisionBounds) -> [bool; 4] {
        let m = b.multiplier;
        [
            (fc - ft).abs() < m * b.d1,
            (fc - ft - dt / 2.0).abs() < m * b.d2 || (ft - fc - dc / 2.0).abs() < m * b.d2,
            (fc - ft - dt).abs() < m * b.d3 || (ft - fc - dc).abs() < m * b.d3,
            (fc - ft).abs() > b.d4_max_detuning,
        ]
    }

    fn chain(freqs: &[f64]) -> (ChipState, FreqMap) {
        let qubits = (0..freqs.len()).map(|i| QubitRecord::new(i, 1e4)).collect();
        let edges = (1..freqs.len()).map(|i| (i - 1, i)).collect();
        let chip = ChipState::new("chain", qubits, edges).unwrap();
        let map = freqs.iter().copied().enumerate().collect();
        (chip, map)
    }

    #[test]
    fn degeneracy_is_type1() {
        for mult in [1.0, 2.0] {
            let b = CollisionBounds::default().with_multiplier(mult);
            let v = pair_collisions(5000.0, 5000.0, D, D, &b);
            assert_eq!(v, vec![(CollisionType::Type1, -17.0 * mult)]);
        }
    }

    #[test]
    fn f01_on_f12_is_type3() {
        let b = CollisionBounds::default().with_multiplier(2.0);
        let v = pair_collisions(4670.0, 5000.0, D, D, &b);
        assert_eq!(v, vec![(CollisionType::Type3, -60.0)]);
    }

    #[test]
    fn hundred_mhz_is_clean() {
        let b = CollisionBounds::default();
        let m = pair_margins(5100.0, 5000.0, D, D, &b);
        assert!(pair_collisions(5100.0, 5000.0, D, D, &b).is_empty());
        let expect = [100.0 - 17.0, 65.0 - 4.0, 230.0 - 30.0, 230.0];
        for ((_, got), want) in m.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn disabled_types_are_silent() {
        let b = CollisionBounds::default().only(&[CollisionType::Type4]);
        assert!(pair_collisions(5000.0, 5000.0, D, D, &b).is_empty());
        assert_eq!(pair_collisions(5500.0, 5000.0, D, D, &b).len(), 1);
    }

    #[test]
    fn chip_cases() {
        let b = CollisionBounds::default();
        let (chip, f) = chain(&[5000.0, 5000.0]);
        let r = chip_collisions(&chip, &f, &b).unwrap();
        assert_eq!(r.total(), 1);
        assert_eq!(r.count(CollisionType::Type1), 1);

        let (chip, f) = chain(&[5000.0, 5100.0, 5000.0, 5100.0, 5000.0]);
        assert!(chip_collisions(&chip, &f, &b).unwrap().is_clean());

        let (chip, f) = chain(&[5000.0]);
        assert!(chip_collisions(&chip, &f, &b).unwrap().is_clean());

        let (chip, mut f) = chain(&[5000.0, 5100.0]);
        f.remove(&1);
        let err = chip_collisions(&chip, &f, &b).unwrap_err();
        assert!(err.to_string().contains("qubit 1"));
    }

    #[test]
    fn bounds_json_keys() {
        let b: CollisionBounds = serde_json::from_str(
            r#"{"d1_mhz":17,"d2_mhz":4,"d3_mhz":30,"d4_max_detuning_mhz":330,"multiplier":2}"#,
        )
        .unwrap();
        assert_eq!(b, CollisionBounds::plan());
        let text = serde_json::to_string(&b).unwrap();
        assert!(!text.contains("enabled"));
    }

    fn freq() -> impl Strategy<Value = f64> {
        4000.0f64..6000.0
    }

    proptest! {
        #[test]
        fn matches_naive_oracle(fc in freq(), ft in freq(), dc in -400.0f64..-250.0,
                                dt in -400.0f64..-250.0, mult in 0.5f64..3.0) {
            let b = CollisionBounds::default().with_multiplier(mult);
            let hit = naive(fc, ft, dc, dt, &b);
            let got = pair_collisions(fc, ft, dc, dt, &b);
            for kind in CollisionType::ALL {
                prop_assert_eq!(hit[kind.index()], got.iter().any(|v| v.0 == kind));
            }
        }

        #[test]
        fn type1_and_type4_are_swap_symmetric(fc in freq(), ft in freq(),
                                              dc in -400.0f64..-250.0, dt in -400.0f64..-250.0) {
            let b = CollisionBounds::default();
            let a = pair_margins(fc, ft, dc, dt, &b);
            let s = pair_margins(ft, fc, dt, dc, &b);
            prop_assert_eq!(a[0], s[0]);
            prop_assert_eq!(a[3], s[3]);
        }

        #[test]
        fn translation_invariance(fc in freq(), ft in freq(), shift in -500.0f64..500.0) {
            let b = CollisionBounds::default();
            let a = pair_margins(fc, ft, D, D, &b);
            let s = pair_margins(fc + shift, ft + shift, D, D, &b);
            for (x, y) in a.iter().zip(&s) {
                prop_assert!((x.1 - y.1).abs() < 1e-9);
            }
        }

        #[test]
        fn larger_multiplier_never_removes_violations(freqs in prop::collection::vec(freq(), 2..12)) {
            let (chip, f) = chain(&freqs);
            let one = chip_collisions(&chip, &f, &CollisionBounds::default()).unwrap();
            let two = chip_collisions(&chip, &f, &CollisionBounds::plan()).unwrap();
            prop_assert!(two.total() >= one.total());
        }

        #[test]
        fn type1_excludes_type4(fc in freq(), ft in freq()) {
            let v = pair_collisions(fc, ft, D, D, &CollisionBounds::default());
            let t1 = v.iter().any(|x| x.0 == CollisionType::Type1);
            let t4 = v.iter().any(|x| x.0 == CollisionType::Type4);
            prop_assert!(!(t1 && t4));
        }

        #[test]
        fn report_counts_match_list(freqs in prop::collection::vec(freq(), 1..12)) {
            let (chip, f) = chain(&freqs);
            let r = chip_collisions(&chip, &f, &CollisionBounds::plan()).unwrap();
            for kind in CollisionType::ALL {
                let n = r.violations.iter().filter(|v| v.kind == kind).count();
                prop_assert_eq!(n, r.count(kind));
            }
            prop_assert!(r.violations.iter().all(|v| v.margin < 0.0));
        }
    }
}
