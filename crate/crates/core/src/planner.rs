//! Collision-free frequency plans under downshift-only trimming.
//!
//! Planning runs in two phases:
//!
//! 1. Assignment. Every qubit gets a domain made of its untuned frequency
//!    (allowed only below the Purcell cutoff) and the rungs of a frequency
//!    ladder that it can reach by raising its resistance by at most
//!    `max_dr_rel`. A DSATUR-ordered backtracking search then picks one value
//!    per qubit so that every edge clears the doubled collision bounds and
//!    the spacing window. Values are tried untuned first, then rungs inside
//!    the preferred ΔR band, then the remaining rungs. Within a tier they are
//!    ordered by margin to already assigned neighbors, and the seed breaks
//!    ties.
//! 2. Refinement. Coordinate descent on a 1 MHz grid moves one tuned qubit
//!    at a time. A move is accepted only if it strictly raises the smallest
//!    margin among that qubit's edges, so the plan-wide worst margin never
//!    decreases.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::collision::{chip_collisions, pair_worst_margin, CollisionBounds};
use crate::error::{Error, Result};
use crate::freq_model::PowerLawModel;
use crate::lattice::{ChipState, FreqMap};
use crate::rng::{stream_rng, substream, StreamRng};

fn default_bounds() -> CollisionBounds {
    CollisionBounds::plan()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConstraints {
    #[serde(rename = "f_purcell_max_mhz")]
    pub f_purcell_max: f64,
    pub max_dr_rel: f64,
    #[serde(rename = "spacing_window_mhz")]
    pub spacing_window: [f64; 2],
    #[serde(default = "default_bounds")]
    pub bounds: CollisionBounds,
    /// Explicit candidate frequencies. When absent, a ladder descending from
    /// the Purcell cutoff in steps of `level_step_mhz` is used.
    #[serde(rename = "level_set_mhz")]
    pub level_set: Option<Vec<f64>>,
    pub level_step_mhz: f64,
    /// ΔR range with the best anneal success rate; preferred, not required.
    #[serde(rename = "preferred_dr_rel")]
    pub preferred_dr: [f64; 2],
}

impl Default for PlanConstraints {
    fn default() -> Self {
        PlanConstraints {
            f_purcell_max: 5200.0,
            max_dr_rel: 0.14,
            spacing_window: [50.0, 250.0],
            bounds: CollisionBounds::plan(),
            level_set: None,
            level_step_mhz: 10.0,
            preferred_dr: [0.01, 0.10],
        }
    }
}

impl PlanConstraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_dr_rel > 0.0 && self.max_dr_rel < 1.0) {
            return Err(Error::param(format!(
                "max_dr_rel must be in (0, 1), got {}",
                self.max_dr_rel
            )));
        }
        if !(self.spacing_window[0] < self.spacing_window[1]) {
            return Err(Error::param(format!(
                "spacing window min must be below max, got {:?}",
                self.spacing_window
            )));
        }
        if !(self.f_purcell_max > 0.0) {
            return Err(Error::param("f_purcell_max must be > 0"));
        }
        if !(self.level_step_mhz > 0.0) {
            return Err(Error::param("level_step_mhz must be > 0"));
        }
        if let Some(levels) = &self.level_set {
            if levels.is_empty() || levels.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(Error::param("level_set must hold positive frequencies"));
            }
        }
        self.bounds.validate()
    }

    /// Margin of one edge: doubled collision bounds and the spacing window.
    pub fn edge_margin(&self, fa: f64, fb: f64, da: f64, db: f64) -> f64 {
        let d = (fa - fb).abs();
        pair_worst_margin(fa, fb, da, db, &self.bounds)
            .min(d - self.spacing_window[0])
            .min(self.spacing_window[1] - d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitStatus {
    Tuned,
    Untuned,
    /// No reachable slot; left untuned in a best-effort plan.
    Blocked,
}

impl fmt::Display for QubitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QubitStatus::Tuned => "tuned",
            QubitStatus::Untuned => "untuned",
            QubitStatus::Blocked => "blocked",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrequencyPlan {
    /// Model-predicted f01 before trimming.
    pub current_f: FreqMap,
    pub current_r: FreqMap,
    pub targets_f: FreqMap,
    pub targets_r: FreqMap,
    /// current − target, ≥ 0.
    pub shifts_f: FreqMap,
    pub shifts_r_rel: FreqMap,
    /// Smallest edge margin; infinite when the chip has no edges.
    pub worst_margin: f64,
    pub skip_set: BTreeSet<usize>,
    pub blocked: BTreeSet<usize>,
}

impl FrequencyPlan {
    pub fn status(&self, id: usize) -> QubitStatus {
        if self.blocked.contains(&id) {
            QubitStatus::Blocked
        } else if self.skip_set.contains(&id) {
            QubitStatus::Untuned
        } else {
            QubitStatus::Tuned
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.targets_f.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockingQubit {
    pub id: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityReport {
    pub blocking: Vec<BlockingQubit>,
    pub best_effort: FrequencyPlan,
}

impl InfeasibilityReport {
    pub fn blocking_ids(&self) -> Vec<usize> {
        self.blocking.iter().map(|b| b.id).collect()
    }
}

// ---------------------------------------------------------------------------
// Assignment

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    f: f64,
    tier: u8,
}

struct Slot {
    id: usize,
    anharm: f64,
    f_now: f64,
    r_now: f64,
    /// Reachable tuned range [lo, hi]; lo > hi if empty.
    lo: f64,
    hi: f64,
    pref_lo: f64,
    pref_hi: f64,
    domain: Vec<Candidate>,
}

struct Problem<'a> {
    slots: Vec<Slot>,
    /// Edges by position.
    edges: Vec<(usize, usize)>,
    /// Adjacency used by the search; edges to blocked qubits are dropped.
    adj: Vec<Vec<usize>>,
    c: &'a PlanConstraints,
}

impl Problem<'_> {
    fn margin(&self, i: usize, fi: f64, j: usize, fj: f64) -> f64 {
        self.c
            .edge_margin(fi, fj, self.slots[i].anharm, self.slots[j].anharm)
    }

    fn incident_margin(&self, i: usize, fi: f64, assign: &[Option<f64>]) -> f64 {
        self.adj[i]
            .iter()
            .filter_map(|&j| assign[j].map(|fj| self.margin(i, fi, j, fj)))
            .fold(f64::INFINITY, f64::min)
    }

    fn consistent(&self, i: usize, fi: f64, assign: &[Option<f64>]) -> bool {
        self.incident_margin(i, fi, assign) >= 0.0
    }
}

fn ladder(c: &PlanConstraints, f_min: f64) -> Vec<f64> {
    match &c.level_set {
        Some(levels) => levels.clone(),
        None => {
            let mut v = Vec::new();
            let mut k = 0.0;
            loop {
                let f = c.f_purcell_max - k * c.level_step_mhz;
                if f < f_min {
                    break;
                }
                v.push(f);
                k += 1.0;
            }
            v
        }
    }
}

fn build_problem<'a>(
    chip: &ChipState,
    model: &PowerLawModel,
    c: &'a PlanConstraints,
) -> Result<Problem<'a>> {
    let mut slots = Vec::with_capacity(chip.len());
    for q in chip.qubits() {
        let f_now = model.predict_f01(q.r_n)?;
        let lo = model.predict_f01(q.r_n * (1.0 + c.max_dr_rel))?;
        let hi = f_now.min(c.f_purcell_max);
        let pref_lo = model
            .predict_f01(q.r_n * (1.0 + c.preferred_dr[1]))?
            .max(lo);
        let pref_hi = model
            .predict_f01(q.r_n * (1.0 + c.preferred_dr[0]))?
            .min(hi);
        slots.push(Slot {
            id: q.id,
            anharm: q.anharmonicity,
            f_now,
            r_now: q.r_n,
            lo,
            hi,
            pref_lo,
            pref_hi,
            domain: Vec::new(),
        });
    }
    let f_min = slots.iter().map(|s| s.lo).fold(f64::INFINITY, f64::min);
    let levels = ladder(c, f_min);
    for s in &mut slots {
        if s.f_now <= c.f_purcell_max {
            s.domain.push(Candidate {
                f: s.f_now,
                tier: 0,
            });
        }
        for &l in &levels {
            if l >= s.lo && l <= s.hi && l < s.f_now {
                let tier = if l >= s.pref_lo && l <= s.pref_hi {
                    1
                } else {
                    2
                };
                s.domain.push(Candidate { f: l, tier });
            }
        }
    }
    let edges: Vec<(usize, usize)> = chip
        .edges()
        .iter()
        .map(|&(a, b)| (chip.position(a).unwrap(), chip.position(b).unwrap()))
        .collect();
    let mut adj = vec![Vec::new(); chip.len()];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    Ok(Problem {
        slots,
        edges,
        adj,
        c,
    })
}

/// Cap on margin used for value ordering, so that beyond a comfortable
/// clearance the seeded order decides.
const ORDER_MARGIN_CAP: f64 = 40.0;

struct Search<'p, 'c> {
    p: &'p Problem<'c>,
    assign: Vec<Option<f64>>,
    /// Seeded rank per qubit and per domain entry, for tie-breaking.
    qubit_rank: Vec<usize>,
    value_rank: Vec<Vec<usize>>,
    nodes: usize,
    budget: usize,
}

impl Search<'_, '_> {
    fn new<'p, 'c>(
        p: &'p Problem<'c>,
        fixed: &[Option<f64>],
        rng: &mut StreamRng,
        budget: usize,
    ) -> Search<'p, 'c> {
        let n = p.slots.len();
        let mut qubit_rank: Vec<usize> = (0..n).collect();
        qubit_rank.shuffle(rng);
        let value_rank = p
            .slots
            .iter()
            .map(|s| {
                let mut r: Vec<usize> = (0..s.domain.len()).collect();
                r.shuffle(rng);
                r
            })
            .collect();
        Search {
            p,
            assign: fixed.to_vec(),
            qubit_rank,
            value_rank,
            nodes: 0,
            budget,
        }
    }

    fn live_values(&self, i: usize) -> usize {
        self.p.slots[i]
            .domain
            .iter()
            .filter(|cand| self.p.consistent(i, cand.f, &self.assign))
            .count()
    }

    /// Unassigned qubit with the fewest consistent values.
    fn pick(&self) -> Option<(usize, usize)> {
        (0..self.assign.len())
            .filter(|&i| self.assign[i].is_none())
            .map(|i| {
                let assigned_nbrs = self.p.adj[i]
                    .iter()
                    .filter(|&&j| self.assign[j].is_some())
                    .count();
                (i, self.live_values(i), assigned_nbrs)
            })
            .min_by(|a, b| {
                a.1.cmp(&b.1)
                    .then(b.2.cmp(&a.2))
                    .then(self.qubit_rank[a.0].cmp(&self.qubit_rank[b.0]))
            })
            .map(|(i, live, _)| (i, live))
    }

    fn ordered_values(&self, i: usize) -> Vec<f64> {
        let slot = &self.p.slots[i];
        let mut scored: Vec<(u8, f64, usize, f64)> = slot
            .domain
            .iter()
            .enumerate()
            .filter_map(|(k, cand)| {
                let m = self.p.incident_margin(i, cand.f, &self.assign);
                (m >= 0.0).then_some((
                    cand.tier,
                    m.min(ORDER_MARGIN_CAP),
                    self.value_rank[i][k],
                    cand.f,
                ))
            })
            .collect();
        scored.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        scored.into_iter().map(|s| s.3).collect()
    }

    /// Ok(true) solved, Ok(false) exhausted, Err(()) over budget.
    fn solve(&mut self) -> std::result::Result<bool, ()> {
        let Some((i, live)) = self.pick() else {
            return Ok(true);
        };
        if live == 0 {
            return Ok(false);
        }
        for f in self.ordered_values(i) {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(());
            }
            self.assign[i] = Some(f);
            if self.solve()? {
                return Ok(true);
            }
        }
        self.assign[i] = None;
        Ok(false)
    }
}

const SEARCH_BUDGET: usize = 50_000;
const RESTARTS: u64 = 8;

/// Full assignment plus the qubits that could not be placed consistently.
/// Unplaced qubits sit at their untuned frequency, or as close to it as
/// their reachable range allows.
fn assign(p: &Problem<'_>, fixed: &[Option<f64>], seed: u64) -> (Vec<f64>, Vec<usize>) {
    for attempt in 0..RESTARTS {
        let mut rng = stream_rng(substream(seed, attempt));
        let mut s = Search::new(p, fixed, &mut rng, SEARCH_BUDGET);
        match s.solve() {
            Ok(true) => {
                return (
                    s.assign.into_iter().map(Option::unwrap).collect(),
                    Vec::new(),
                )
            }
            Ok(false) => break,
            Err(()) => continue,
        }
    }
    let mut rng = stream_rng(substream(seed, RESTARTS));
    let mut s = Search::new(p, fixed, &mut rng, 0);
    let mut stuck = Vec::new();
    while let Some((i, _)) = s.pick() {
        let f = match s.ordered_values(i).first() {
            Some(&f) => f,
            None => {
                stuck.push(i);
                let slot = &p.slots[i];
                slot.f_now.min(slot.hi.max(slot.lo))
            }
        };
        s.assign[i] = Some(f);
    }
    (s.assign.into_iter().map(Option::unwrap).collect(), stuck)
}

// ---------------------------------------------------------------------------
// Refinement

const REFINE_GRID_MHZ: f64 = 1.0;
const REFINE_SWEEPS: usize = 50;
/// Gain needed before an untuned qubit is put on the anneal list.
const TUNE_GAIN_MHZ: f64 = 1.0;

impl Slot {
    fn untuned_allowed(&self, c: &PlanConstraints) -> bool {
        self.f_now <= c.f_purcell_max
    }

    /// Refinement candidates around the current value: the untuned
    /// frequency when allowed, plus a grid over the preferred band (or the
    /// whole reachable range if the qubit already sits outside the band).
    fn refine_candidates(&self, cur: f64, c: &PlanConstraints) -> Vec<f64> {
        let mut out = Vec::new();
        if self.untuned_allowed(c) {
            out.push(self.f_now);
        }
        let in_band = |f: f64| f >= self.pref_lo && f <= self.pref_hi;
        let (lo, hi) = if cur == self.f_now || in_band(cur) {
            (self.pref_lo, self.pref_hi)
        } else {
            (self.lo, self.hi)
        };
        if lo <= hi {
            let steps = ((hi - lo) / REFINE_GRID_MHZ).floor() as usize;
            out.extend((0..=steps).map(|k| lo + k as f64 * REFINE_GRID_MHZ));
            out.push(hi);
        }
        out.retain(|&f| f < self.f_now || f == self.f_now && self.untuned_allowed(c));
        out
    }
}

fn refine(p: &Problem<'_>, values: &mut [f64], movable: &[bool]) {
    let mut assign: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    for _ in 0..REFINE_SWEEPS {
        let mut improved = false;
        for i in 0..values.len() {
            if !movable[i] || p.adj[i].is_empty() {
                continue;
            }
            let s = &p.slots[i];
            let cur = values[i];
            let now = p.incident_margin(i, cur, &assign);
            let mut best = (now, cur);
            for f in s.refine_candidates(cur, p.c) {
                let gain = if cur == s.f_now && f != s.f_now {
                    TUNE_GAIN_MHZ
                } else {
                    1e-9
                };
                let m = p.incident_margin(i, f, &assign);
                if m > best.0 && m > now + gain {
                    best = (m, f);
                }
            }
            if best.1 != cur {
                values[i] = best.1;
                assign[i] = Some(best.1);
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
}

fn worst_margin(p: &Problem<'_>, values: &[f64]) -> f64 {
    p.edges
        .iter()
        .map(|&(i, j)| p.margin(i, values[i], j, values[j]))
        .fold(f64::INFINITY, f64::min)
}

fn assemble(
    p: &Problem<'_>,
    model: &PowerLawModel,
    values: &[f64],
    blocked: &BTreeSet<usize>,
) -> Result<FrequencyPlan> {
    let mut plan = FrequencyPlan {
        worst_margin: worst_margin(p, values),
        ..Default::default()
    };
    for (s, &f) in p.slots.iter().zip(values) {
        let untuned = f == s.f_now;
        let r = if untuned {
            s.r_now
        } else {
            model.predict_rn(f)?
        };
        plan.current_f.insert(s.id, s.f_now);
        plan.current_r.insert(s.id, s.r_now);
        plan.targets_f.insert(s.id, f);
        plan.targets_r.insert(s.id, r);
        plan.shifts_f.insert(s.id, s.f_now - f);
        plan.shifts_r_rel.insert(s.id, r / s.r_now - 1.0);
        if untuned || blocked.contains(&s.id) {
            plan.skip_set.insert(s.id);
        }
    }
    plan.blocked = blocked.clone();
    Ok(plan)
}

/// Generate a plan. On failure the error carries the blocking qubits and a
/// best-effort plan in which they are left untuned.
pub fn generate_plan(
    chip: &ChipState,
    model: &PowerLawModel,
    constraints: &PlanConstraints,
    seed: u64,
) -> Result<FrequencyPlan> {
    constraints.validate()?;
    model.validate()?;
    let mut p = build_problem(chip, model, constraints)?;
    let n = p.slots.len();

    let mut blocking = Vec::new();
    let mut fixed = vec![None; n];
    for (i, s) in p.slots.iter().enumerate() {
        if s.domain.is_empty() {
            let need = model.predict_rn(constraints.f_purcell_max)? / s.r_now - 1.0;
            blocking.push(BlockingQubit {
                id: s.id,
                reason: format!(
                    "f01 {:.1} MHz needs ΔR {:.1}% to reach {:.0} MHz, limit {:.1}%",
                    s.f_now,
                    100.0 * need,
                    constraints.f_purcell_max,
                    100.0 * constraints.max_dr_rel
                ),
            });
            fixed[i] = Some(s.f_now);
        }
    }
    // A qubit that cannot move should not drag its neighbors into the
    // blocking list as well.
    for i in 0..n {
        if fixed[i].is_some() {
            let nbrs = std::mem::take(&mut p.adj[i]);
            for j in nbrs {
                p.adj[j].retain(|&k| k != i);
            }
        }
    }

    // A chip that already satisfies every constraint needs no anneals.
    let untuned: Vec<f64> = p.slots.iter().map(|s| s.f_now).collect();
    if p.slots.iter().all(|s| s.untuned_allowed(constraints)) && worst_margin(&p, &untuned) >= 0.0 {
        return assemble(&p, model, &untuned, &BTreeSet::new());
    }

    let (mut values, stuck) = assign(&p, &fixed, seed);
    for i in stuck {
        blocking.push(BlockingQubit {
            id: p.slots[i].id,
            reason: "no reachable frequency clears all neighbors".into(),
        });
    }

    let movable: Vec<bool> = p
        .slots
        .iter()
        .zip(&fixed)
        .map(|(s, fx)| fx.is_none() && !s.domain.is_empty())
        .collect();
    if blocking.is_empty() {
        refine(&p, &mut values, &movable);
    }

    let blocked: BTreeSet<usize> = blocking.iter().map(|b| b.id).collect();
    let plan = assemble(&p, model, &values, &blocked)?;
    if blocking.is_empty() {
        Ok(plan)
    } else {
        blocking.sort_by_key(|b| b.id);
        Err(Error::Infeasible(Box::new(InfeasibilityReport {
            blocking,
            best_effort: plan,
        })))
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanCheck {
    Downshift,
    ResistanceLimit,
    Purcell,
    Collision,
    SpacingWindow,
    ModelConsistency,
}

impl PlanCheck {
    pub const ALL: [PlanCheck; 6] = [
        Self::Downshift,
        Self::ResistanceLimit,
        Self::Purcell,
        Self::Collision,
        Self::SpacingWindow,
        Self::ModelConsistency,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckFailure {
    pub check: PlanCheck,
    /// Qubit ids involved: one for per-qubit checks, two for edges.
    pub subject: Vec<usize>,
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanValidation {
    pub failures: Vec<CheckFailure>,
    /// Smallest margin observed per check; negative means failing.
    pub margins: BTreeMap<PlanCheck, f64>,
}

impl PlanValidation {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn check_passed(&self, check: PlanCheck) -> bool {
        !self.failures.iter().any(|f| f.check == check)
    }

    pub fn failures_of(&self, check: PlanCheck) -> impl Iterator<Item = &CheckFailure> {
        self.failures.iter().filter(move |f| f.check == check)
    }
}

const FREQ_TOL: f64 = 1e-6;
const REL_TOL: f64 = 1e-9;

pub fn validate_plan(
    chip: &ChipState,
    model: &PowerLawModel,
    plan: &FrequencyPlan,
    constraints: &PlanConstraints,
) -> PlanValidation {
    let mut v = PlanValidation {
        failures: Vec::new(),
        margins: PlanCheck::ALL.iter().map(|&c| (c, f64::INFINITY)).collect(),
    };
    let note = |check: PlanCheck,
                subject: Vec<usize>,
                margin: f64,
                fails: bool,
                detail: String,
                v: &mut PlanValidation| {
        let m = v.margins.get_mut(&check).unwrap();
        *m = m.min(margin);
        if fails {
            v.failures.push(CheckFailure {
                check,
                subject,
                margin,
                detail,
            });
        }
    };

    for q in chip.qubits() {
        let id = q.id;
        let Some(&target) = plan.targets_f.get(&id) else {
            note(
                PlanCheck::ModelConsistency,
                vec![id],
                f64::NEG_INFINITY,
                true,
                "qubit missing from plan".into(),
                &mut v,
            );
            continue;
        };
        let f_now = match model.predict_f01(q.r_n) {
            Ok(f) => f,
            Err(e) => {
                note(
                    PlanCheck::ModelConsistency,
                    vec![id],
                    f64::NEG_INFINITY,
                    true,
                    e.to_string(),
                    &mut v,
                );
                continue;
            }
        };
        let down = f_now - target;
        note(
            PlanCheck::Downshift,
            vec![id],
            down,
            down < -FREQ_TOL,
            format!("target {target:.3} MHz is above current {f_now:.3} MHz"),
            &mut v,
        );

        let dr = match model.predict_rn(target) {
            Ok(r) => r / q.r_n - 1.0,
            Err(e) => {
                note(
                    PlanCheck::ModelConsistency,
                    vec![id],
                    f64::NEG_INFINITY,
                    true,
                    e.to_string(),
                    &mut v,
                );
                continue;
            }
        };
        let untuned = plan.skip_set.contains(&id);
        if !untuned {
            let m = constraints.max_dr_rel - dr;
            note(
                PlanCheck::ResistanceLimit,
                vec![id],
                m,
                m < -REL_TOL,
                format!(
                    "ΔR {:.2}% exceeds {:.2}%",
                    100.0 * dr,
                    100.0 * constraints.max_dr_rel
                ),
                &mut v,
            );
        }
        let pm = constraints.f_purcell_max - target;
        note(
            PlanCheck::Purcell,
            vec![id],
            pm,
            pm < -FREQ_TOL,
            format!(
                "target {target:.1} MHz above Purcell cutoff {:.0} MHz",
                constraints.f_purcell_max
            ),
            &mut v,
        );

        let stored_r = plan.targets_r.get(&id).copied().unwrap_or(f64::NAN);
        let stored_dr = plan.shifts_r_rel.get(&id).copied().unwrap_or(f64::NAN);
        let stored_df = plan.shifts_f.get(&id).copied().unwrap_or(f64::NAN);
        let expect_r = q.r_n * (1.0 + dr);
        let r_err = (stored_r / expect_r - 1.0).abs();
        let inconsistent =
            !(r_err < 1e-9 && (stored_dr - dr).abs() < 1e-9 && (stored_df - down).abs() < 1e-6);
        note(
            PlanCheck::ModelConsistency,
            vec![id],
            if inconsistent {
                -r_err.max(1e-300)
            } else {
                0.0
            },
            inconsistent,
            format!("stored targets disagree with the model (r {stored_r}, expected {expect_r})"),
            &mut v,
        );
    }

    if let Ok(report) = chip_collisions(chip, &plan.targets_f, &constraints.bounds) {
        for viol in report.violations {
            note(
                PlanCheck::Collision,
                vec![viol.edge.0, viol.edge.1],
                viol.margin,
                true,
                format!("{} collision, margin {:.2} MHz", viol.kind, viol.margin),
                &mut v,
            );
        }
    }
    for &(a, b) in chip.edges() {
        let (Some(&fa), Some(&fb)) = (plan.targets_f.get(&a), plan.targets_f.get(&b)) else {
            continue;
        };
        let qa = chip.qubit(a).unwrap();
        let qb = chip.qubit(b).unwrap();
        let cm = pair_worst_margin(
            fa,
            fb,
            qa.anharmonicity,
            qb.anharmonicity,
            &constraints.bounds,
        );
        let m = v.margins.get_mut(&PlanCheck::Collision).unwrap();
        *m = m.min(cm);
        let d = (fa - fb).abs();
        let sm = (d - constraints.spacing_window[0]).min(constraints.spacing_window[1] - d);
        note(
            PlanCheck::SpacingWindow,
            vec![a, b],
            sm,
            sm < 0.0,
            format!(
                "|Δf| {d:.1} MHz outside [{:.0}, {:.0}]",
                constraints.spacing_window[0], constraints.spacing_window[1]
            ),
            &mut v,
        );
    }
    v
}

/// Resistance targets implied by the plan's frequency targets.
pub fn plan_to_resistance_targets(
    plan: &FrequencyPlan,
    model: &PowerLawModel,
) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (&id, &target) in &plan.targets_f {
        let shift = plan.shifts_f.get(&id).copied().unwrap_or(0.0);
        if shift < -FREQ_TOL {
            return Err(Error::ModelMismatch {
                qubit: id,
                message: format!("target is {:.3} MHz above the current frequency", -shift),
            });
        }
        let r = if shift == 0.0 {
            match plan.current_r.get(&id) {
                Some(&r) => r,
                None => model.predict_rn(target)?,
            }
        } else {
            model.predict_rn(target)?
        };
        if let Some(&r_now) = plan.current_r.get(&id) {
            if r < r_now * (1.0 - REL_TOL) {
                return Err(Error::ModelMismatch {
                    qubit: id,
                    message: format!("resistance target {r:.3} Ω is below current {r_now:.3} Ω"),
                });
            }
        }
        out.insert(id, r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_preset, Preset, QubitRecord};
    use crate::synth::{synth_chip, SynthConfig};
    use crate::yield_mc::yield_estimate;
    use proptest::prelude::*;

    fn model() -> PowerLawModel {
        PowerLawModel::new(5e5, -0.5, 0.0).unwrap()
    }

    fn chip_at(freqs: &[f64], edges: Vec<(usize, usize)>) -> ChipState {
        let m = model();
        let qubits = freqs
            .iter()
            .enumerate()
            .map(|(i, &f)| QubitRecord::new(i, m.predict_rn(f).unwrap()))
            .collect();
        ChipState::new("t", qubits, edges).unwrap()
    }

    /// Exhaustive 1 MHz scan: does any pair of reachable targets satisfy
    /// every constraint?
    fn pair_feasible_by_scan(f0: f64, f1: f64, c: &PlanConstraints) -> bool {
        let m = model();
        let range = |f: f64| {
            let lo = m
                .predict_f01(m.predict_rn(f).unwrap() * (1.0 + c.max_dr_rel))
                .unwrap();
            let hi = f.min(c.f_purcell_max);
            (lo.ceil() as i64..=hi.floor() as i64)
                .map(|x| x as f64)
                .collect::<Vec<_>>()
        };
        let (a, b) = (range(f0), range(f1));
        a.iter().any(|&x| {
            b.iter()
                .any(|&y| c.edge_margin(x, y, -330.0, -330.0) >= 0.0)
        })
    }

    #[test]
    fn near_degenerate_pair() {
        let c = PlanConstraints::default();
        assert!(pair_feasible_by_scan(5100.0, 5105.0, &c));
        let chip = chip_at(&[5100.0, 5105.0], vec![(0, 1)]);
        let plan = generate_plan(&chip, &model(), &c, 7).unwrap();
        let v = validate_plan(&chip, &model(), &plan, &c);
        assert!(v.passed(), "{:?}", v.failures);
        let d = (plan.targets_f[&0] - plan.targets_f[&1]).abs();
        assert!((50.0..=250.0).contains(&d));
        assert!(plan.shifts_f.values().all(|&s| s >= 0.0));
    }

    #[test]
    fn feasible_chip_is_left_alone() {
        let chip = chip_at(&[5100.0, 5000.0, 5100.0], vec![(0, 1), (1, 2)]);
        let plan = generate_plan(&chip, &model(), &PlanConstraints::default(), 1).unwrap();
        assert_eq!(plan.skip_set.len(), 3);
        assert!(plan.shifts_f.values().all(|&s| s == 0.0));
        for q in chip.qubits() {
            assert_eq!(plan.targets_r[&q.id], q.r_n);
        }
    }

    #[test]
    fn unreachable_qubit_is_reported() {
        // 5600 MHz needs (5600/5200)^2 − 1 = 16% more resistance.
        let chip = chip_at(&[5600.0, 5000.0], vec![(0, 1)]);
        let err = generate_plan(&chip, &model(), &PlanConstraints::default(), 1).unwrap_err();
        match err {
            Error::Infeasible(r) => {
                assert_eq!(r.blocking_ids(), vec![0]);
                assert_eq!(r.best_effort.status(0), QubitStatus::Blocked);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validation_flags_purcell_and_spacing() {
        let c = PlanConstraints::default();
        let chip = chip_at(&[5300.0, 5100.0], vec![(0, 1)]);
        let m = model();
        let mut plan = generate_plan(&chip, &m, &c, 3).unwrap();
        assert!(validate_plan(&chip, &m, &plan, &c).passed());

        // Untuned target above the cutoff.
        plan.targets_f.insert(0, 5300.0);
        plan.targets_r.insert(0, chip.qubit(0).unwrap().r_n);
        plan.shifts_f.insert(0, 0.0);
        plan.shifts_r_rel.insert(0, 0.0);
        plan.skip_set.insert(0);
        let v = validate_plan(&chip, &m, &plan, &c);
        assert!(!v.check_passed(PlanCheck::Purcell));
        assert_eq!(
            v.failures_of(PlanCheck::Purcell).next().unwrap().subject,
            vec![0]
        );

        // Two targets 10 MHz apart.
        let chip = chip_at(&[5110.0, 5100.0], vec![(0, 1)]);
        let mut plan = FrequencyPlan::default();
        for q in chip.qubits() {
            let f = m.predict_f01(q.r_n).unwrap();
            plan.targets_f.insert(q.id, f);
            plan.targets_r.insert(q.id, q.r_n);
            plan.shifts_f.insert(q.id, 0.0);
            plan.shifts_r_rel.insert(q.id, 0.0);
            plan.skip_set.insert(q.id);
        }
        let v = validate_plan(&chip, &m, &plan, &c);
        assert!(!v.check_passed(PlanCheck::SpacingWindow));
        let col = v.failures_of(PlanCheck::Collision).next().unwrap();
        // Type-1 with doubled bounds: 10 − 34 = −24 MHz.
        assert!((col.margin + 24.0).abs() < 1e-6, "{}", col.margin);
    }

    #[test]
    fn resistance_conversion() {
        let m = model();
        // −1% in frequency needs (0.99)^(−2) − 1 = 2.03% in resistance.
        let r0 = 10_000.0;
        let f0 = m.predict_f01(r0).unwrap();
        let r1 = m.predict_rn(0.99 * f0).unwrap();
        assert!((r1 / r0 - 1.0 - 0.020304).abs() < 1e-6);

        // A shift implying 14.2% resistance growth violates the 14% cap.
        let chip = chip_at(&[5000.0], vec![]);
        let target = m.predict_f01(chip.qubit(0).unwrap().r_n * 1.142).unwrap();
        let mut plan = FrequencyPlan::default();
        plan.targets_f.insert(0, target);
        plan.targets_r.insert(0, m.predict_rn(target).unwrap());
        plan.shifts_f.insert(0, 5000.0 - target);
        plan.shifts_r_rel.insert(0, 0.142);
        plan.current_r.insert(0, chip.qubit(0).unwrap().r_n);
        let v = validate_plan(&chip, &m, &plan, &PlanConstraints::default());
        assert!(!v.check_passed(PlanCheck::ResistanceLimit));

        let targets = plan_to_resistance_targets(&plan, &m).unwrap();
        assert!((targets[&0] / chip.qubit(0).unwrap().r_n - 1.142).abs() < 1e-9);

        plan.shifts_f.insert(0, -5.0);
        assert!(matches!(
            plan_to_resistance_targets(&plan, &m),
            Err(Error::ModelMismatch { qubit: 0, .. })
        ));
    }

    #[test]
    fn falcon_plans_validate_and_hold_at_zero_sigma() {
        let topo = build_preset(Preset::Falcon);
        let c = PlanConstraints::default();
        for seed in 0..10 {
            let chip = synth_chip(&topo, &SynthConfig::default(), seed).unwrap();
            let plan = match generate_plan(&chip, &model(), &c, seed) {
                Ok(p) => p,
                Err(Error::Infeasible(_)) => continue,
                Err(e) => panic!("{e}"),
            };
            let v = validate_plan(&chip, &model(), &plan, &c);
            assert!(v.passed(), "seed {seed}: {:?}", v.failures);
            assert!(plan.worst_margin >= 0.0);
            let y = yield_estimate(&chip, &plan.targets_f, 0.0, &c.bounds, 1, 0).unwrap();
            assert_eq!(y.yield_frac, 1.0);
        }
    }

    #[test]
    fn refinement_never_lowers_worst_margin() {
        let topo = build_preset(Preset::Falcon);
        let c = PlanConstraints::default();
        let chip = synth_chip(&topo, &SynthConfig::default(), 4).unwrap();
        let p = build_problem(&chip, &model(), &c).unwrap();
        let fixed = vec![None; p.slots.len()];
        let (mut values, stuck) = assign(&p, &fixed, 4);
        assert!(stuck.is_empty());
        let before = worst_margin(&p, &values);
        let movable = vec![true; values.len()];
        refine(&p, &mut values, &movable);
        assert!(worst_margin(&p, &values) >= before);
    }

    #[test]
    fn deterministic_under_seed() {
        let topo = build_preset(Preset::Falcon);
        let chip = synth_chip(&topo, &SynthConfig::default(), 2).unwrap();
        let c = PlanConstraints::default();
        let a = generate_plan(&chip, &model(), &c, 11).unwrap();
        let b = generate_plan(&chip, &model(), &c, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constraints_json_defaults() {
        let c: PlanConstraints = serde_json::from_str(r#"{"max_dr_rel": 0.12}"#).unwrap();
        assert_eq!(c.max_dr_rel, 0.12);
        assert_eq!(c.f_purcell_max, 5200.0);
        assert_eq!(c.bounds.multiplier, 2.0);
        assert!(serde_json::from_str::<PlanConstraints>(r#"{"bogus": 1}"#).is_err());
        let bad = PlanConstraints {
            spacing_window: [250.0, 50.0],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_pairs_agree_with_scan(f0 in 4900.0f64..5650.0, f1 in 4900.0f64..5650.0, seed in 0u64..100) {
            let c = PlanConstraints::default();
            let chip = chip_at(&[f0, f1], vec![(0, 1)]);
            let feasible = pair_feasible_by_scan(f0, f1, &c);
            match generate_plan(&chip, &model(), &c, seed) {
                Ok(plan) => {
                    prop_assert!(validate_plan(&chip, &model(), &plan, &c).passed());
                }
                Err(Error::Infeasible(_)) => prop_assert!(!feasible),
                Err(e) => prop_assert!(false, "{}", e),
            }
        }
    }
}
