//! Chip topologies and per-qubit physical records.
//!
//! Frequencies are held in MHz and resistances in Ω. The chip-spec JSON file
//! carries `f01_ghz`; conversion happens at the file boundary only.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qubit id → frequency in MHz.
pub type FreqMap = BTreeMap<usize, f64>;

pub const DEFAULT_ANHARMONICITY_MHZ: f64 = -330.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QubitRecord {
    pub id: usize,
    /// Room-temperature junction resistance, Ω.
    pub r_n: f64,
    /// Measured or predicted f01, MHz.
    pub f01: Option<f64>,
    /// δ = f12 − f01, MHz.
    pub anharmonicity: f64,
    pub tuned: bool,
}

impl QubitRecord {
    pub fn new(id: usize, r_n: f64) -> Self {
        QubitRecord {
            id,
            r_n,
            f01: None,
            anharmonicity: DEFAULT_ANHARMONICITY_MHZ,
            tuned: false,
        }
    }

    pub fn with_f01(mut self, f01_mhz: f64) -> Self {
        self.f01 = Some(f01_mhz);
        self
    }
}

/// Sanity window applied to any recorded f01.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationLimits {
    pub f01_min_mhz: f64,
    pub f01_max_mhz: f64,
}

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            f01_min_mhz: 3000.0,
            f01_max_mhz: 7000.0,
        }
    }
}

/// A validated chip: qubit records plus directed (control, target) edges.
///
/// Immutable once built; every constructor enforces the invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipState {
    name: String,
    qubits: Vec<QubitRecord>,
    edges: Vec<(usize, usize)>,
    index: BTreeMap<usize, usize>,
}

impl ChipState {
    pub fn new(
        name: impl Into<String>,
        qubits: Vec<QubitRecord>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        Self::with_limits(name, qubits, edges, ValidationLimits::default())
    }

    pub fn with_limits(
        name: impl Into<String>,
        qubits: Vec<QubitRecord>,
        edges: Vec<(usize, usize)>,
        limits: ValidationLimits,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (pos, q) in qubits.iter().enumerate() {
            if index.insert(q.id, pos).is_some() {
                return Err(Error::Validation(format!("duplicate qubit id {}", q.id)));
            }
            if !(q.r_n.is_finite() && q.r_n > 0.0) {
                return Err(Error::Validation(format!(
                    "qubit {}: r_n must be positive, got {}",
                    q.id, q.r_n
                )));
            }
            if !(q.anharmonicity.is_finite() && q.anharmonicity < 0.0) {
                return Err(Error::Validation(format!(
                    "qubit {}: anharmonicity must be negative, got {}",
                    q.id, q.anharmonicity
                )));
            }
            if let Some(f) = q.f01 {
                if !(f > limits.f01_min_mhz && f < limits.f01_max_mhz) {
                    return Err(Error::Validation(format!(
                        "qubit {}: f01 {} MHz outside ({}, {}) MHz",
                        q.id, f, limits.f01_min_mhz, limits.f01_max_mhz
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for (k, &(c, t)) in edges.iter().enumerate() {
            for end in [c, t] {
                if !index.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "edge {k} ({c}, {t}) references unknown qubit {end}"
                    )));
                }
            }
            if c == t {
                return Err(Error::Validation(format!(
                    "edge {k} is a self-loop on qubit {c}"
                )));
            }
            if !seen.insert((c.min(t), c.max(t))) {
                return Err(Error::Validation(format!(
                    "edge {k} ({c}, {t}) duplicates an earlier pair"
                )));
            }
        }
        Ok(ChipState {
            name: name.into(),
            qubits,
            edges,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn qubits(&self) -> &[QubitRecord] {
        &self.qubits
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn qubit(&self, id: usize) -> Option<&QubitRecord> {
        self.index.get(&id).map(|&pos| &self.qubits[pos])
    }

    /// Dense position of a qubit id in `qubits()`.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.qubits.iter().map(|q| q.id)
    }

    /// Undirected neighbours of `id`, ascending.
    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(c, t)| {
                if c == id {
                    Some(t)
                } else if t == id {
                    Some(c)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn degree(&self, id: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(c, t)| c == id || t == id)
            .count()
    }

    pub fn max_degree(&self) -> usize {
        self.ids().map(|id| self.degree(id)).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let Some(first) = self.qubits.first() else {
            return true;
        };
        let mut seen = BTreeSet::from([first.id]);
        let mut queue = VecDeque::from([first.id]);
        while let Some(id) = queue.pop_front() {
            for n in self.neighbors(id) {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen.len() == self.qubits.len()
    }

    /// Recorded f01 values; errors if any qubit lacks one.
    pub fn f01_map(&self) -> Result<FreqMap> {
        self.qubits
            .iter()
            .map(|q| {
                q.f01
                    .map(|f| (q.id, f))
                    .ok_or_else(|| Error::param(format!("qubit {} has no f01", q.id)))
            })
            .collect()
    }

    /// Copy of this chip with qubit records replaced through `f`.
    pub fn map_qubits(&self, f: impl FnMut(&QubitRecord) -> QubitRecord) -> Result<Self> {
        let qubits = self.qubits.iter().map(f).collect();
        ChipState::new(self.name.clone(), qubits, self.edges.clone())
    }
}

// ---------------------------------------------------------------------------
// Chip-spec JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QubitSpec {
    id: usize,
    r_n_ohm: f64,
    f01_ghz: Option<f64>,
    #[serde(default = "default_anharmonicity")]
    anharmonicity_mhz: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    tuned: bool,
}

fn default_anharmonicity() -> f64 {
    DEFAULT_ANHARMONICITY_MHZ
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChipSpec {
    name: String,
    qubits: Vec<QubitSpec>,
    edges: Vec<[usize; 2]>,
}

impl From<&ChipState> for ChipSpec {
    fn from(chip: &ChipState) -> Self {
        ChipSpec {
            name: chip.name.clone(),
            qubits: chip
                .qubits
                .iter()
                .map(|q| QubitSpec {
                    id: q.id,
                    r_n_ohm: q.r_n,
                    f01_ghz: q.f01.map(|f| f / 1000.0),
                    anharmonicity_mhz: q.anharmonicity,
                    tuned: q.tuned,
                })
                .collect(),
            edges: chip.edges.iter().map(|&(c, t)| [c, t]).collect(),
        }
    }
}

impl ChipState {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let spec: ChipSpec = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let qubits = spec
            .qubits
            .into_iter()
            .map(|q| QubitRecord {
                id: q.id,
                r_n: q.r_n_ohm,
                f01: q.f01_ghz.map(|g| g * 1000.0),
                anharmonicity: q.anharmonicity_mhz,
                tuned: q.tuned,
            })
            .collect();
        let edges = spec.edges.into_iter().map(|[c, t]| (c, t)).collect();
        ChipState::new(spec.name, qubits, edges)
    }

    pub fn to_json_string(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&ChipSpec::from(self)).expect("chip spec serializes");
        s.push('\n');
        s
    }
}

pub fn load_chip(path: impl AsRef<Path>) -> Result<ChipState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ChipState::from_json_str(&text, path)
}

pub fn save_chip(chip: &ChipState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, chip.to_json_string()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Heavy-hex construction
// ---------------------------------------------------------------------------

/// Nominal junction resistance assigned by the topology builders.
pub const NOMINAL_RN_OHM: f64 = 10_000.0;

/// Heavy-hex lattice with `rows` rows of `cols` heavy hexagons.
///
/// Horizontal qubit lines are joined by bridge qubits every four columns,
/// alternating offset between successive gaps. Ids run line by line, top to
/// bottom, with each gap's bridges numbered between the lines they join.
pub fn build_heavy_hex(rows: usize, cols: usize) -> Result<ChipState> {
    if rows == 0 || cols == 0 {
        return Err(Error::param(format!(
            "heavy-hex dimensions must be ≥ 1, got rows={rows} cols={cols}"
        )));
    }
    let (n, edges) = heavy_hex_edges(rows, cols, false);
    chip_from_topology(format!("heavy-hex-{rows}x{cols}"), n, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 27 qubits: one hexagon row with boundary stubs.
    Falcon,
    /// 65 qubits: four hexagon rows.
    Hummingbird,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "falcon" => Ok(Preset::Falcon),
            "hummingbird" => Ok(Preset::Hummingbird),
            other => Err(Error::param(format!("unknown preset {other:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Falcon => "falcon",
            Preset::Hummingbird => "hummingbird",
        })
    }
}

pub fn build_preset(preset: Preset) -> ChipState {
    let (n, edges) = match preset {
        Preset::Falcon => heavy_hex_edges(1, 2, true),
        Preset::Hummingbird => heavy_hex_edges(4, 2, false),
    };
    chip_from_topology(preset.to_string(), n, edges).expect("preset topology is valid")
}

fn chip_from_topology(name: String, n: usize, edges: Vec<(usize, usize)>) -> Result<ChipState> {
    let qubits = (0..n)
        .map(|id| QubitRecord::new(id, NOMINAL_RN_OHM))
        .collect();
    ChipState::new(name, qubits, edges)
}

/// Bridge columns of gap `gap`; virtual gaps outside the lattice are allowed.
fn bridge_columns(gap: i64, cols: usize) -> impl Iterator<Item = i64> {
    let offset = 2 * gap.rem_euclid(2);
    (0..=cols as i64).map(move |k| offset + 4 * k)
}

fn heavy_hex_edges(rows: usize, cols: usize, stubs: bool) -> (usize, Vec<(usize, usize)>) {
    let rows = rows as i64;
    let last_col = 4 * cols as i64 + 2;
    // Each line extends one column past the bridge spans of its gaps.
    let line_range = |line: i64| {
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for gap in [line - 1, line] {
            if (0..rows).contains(&gap) {
                let start = 2 * gap.rem_euclid(2);
                lo = lo.min(start - 1);
                hi = hi.max(start + 4 * cols as i64 + 1);
            }
        }
        (lo.max(0), hi.min(last_col))
    };
    // Stubs are half-bridges toward the virtual gap beyond a boundary line.
    let stub_columns = |line: i64, gap: i64| {
        let (lo, hi) = line_range(line);
        bridge_columns(gap, cols).filter(move |&c| c > lo && c < hi)
    };

    let mut next = 0usize;
    let mut alloc = || {
        next += 1;
        next - 1
    };
    let mut edges = Vec::new();

    let top_stubs: Vec<(i64, usize)> = if stubs {
        stub_columns(0, -1).map(|c| (c, alloc())).collect()
    } else {
        Vec::new()
    };
    let mut prev: BTreeMap<i64, usize> = BTreeMap::new();
    let mut bridges: Vec<(i64, usize)> = Vec::new();
    for line in 0..=rows {
        let (lo, hi) = line_range(line);
        let ids: BTreeMap<i64, usize> = (lo..=hi).map(|c| (c, alloc())).collect();
        for c in lo..hi {
            edges.push((ids[&c], ids[&(c + 1)]));
        }
        if line == 0 {
            for &(c, s) in &top_stubs {
                edges.push((s, ids[&c]));
            }
        }
        for (c, b) in bridges.drain(..) {
            edges.push((prev[&c], b));
            edges.push((b, ids[&c]));
        }
        if line < rows {
            bridges = bridge_columns(line, cols).map(|c| (c, alloc())).collect();
        }
        prev = ids;
    }
    if stubs {
        for c in stub_columns(rows, rows) {
            let s = alloc();
            edges.push((prev[&c], s));
        }
    }

    let mut edges: Vec<(usize, usize)> = edges
        .into_iter()
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    (next, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falcon_has_27_qubits_and_28_edges() {
        let chip = build_preset(Preset::Falcon);
        assert_eq!(chip.len(), 27);
        assert_eq!(chip.edges().len(), 28);
        assert_eq!(chip.max_degree(), 3);
        assert!(chip.is_connected());
    }

    #[test]
    fn hummingbird_has_65_qubits_and_72_edges() {
        let chip = build_preset(Preset::Hummingbird);
        assert_eq!(chip.len(), 65);
        assert_eq!(chip.edges().len(), 72);
        assert_eq!(chip.max_degree(), 3);
        assert!(chip.is_connected());
        // First line 0..=9, bridge 10 joins qubits 0 and 13.
        assert_eq!(chip.neighbors(10), vec![0, 13]);
        assert_eq!(chip.neighbors(12), vec![8, 21]);
        assert_eq!(chip.neighbors(54), vec![51, 64]);
    }

    #[test]
    fn unit_cell_is_connected() {
        let chip = build_heavy_hex(1, 1).unwrap();
        assert_eq!(chip.len(), 14);
        assert!(chip.is_connected());
        assert!(chip.max_degree() <= 3);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(build_heavy_hex(0, 2), Err(Error::Parameter(_))));
        assert!(matches!(build_heavy_hex(2, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn builder_is_deterministic() {
        assert_eq!(
            build_heavy_hex(3, 4).unwrap(),
            build_heavy_hex(3, 4).unwrap()
        );
    }

    #[test]
    fn rejects_bad_records() {
        let q = |id, r| QubitRecord::new(id, r);
        let err = ChipState::new("x", vec![q(0, 1.0), q(1, -100.0)], vec![(0, 1)]).unwrap_err();
        assert!(err.to_string().contains("qubit 1"), "{err}");
        let err = ChipState::new("x", vec![q(0, 1.0), q(1, 1.0)], vec![(0, 99)]).unwrap_err();
        assert!(err.to_string().contains("99"), "{err}");
        assert!(ChipState::new("x", vec![q(0, 1.0)], vec![(0, 0)]).is_err());
        assert!(ChipState::new("x", vec![q(0, 1.0), q(1, 1.0)], vec![(0, 1), (1, 0)]).is_err());
        let hot = q(0, 1.0).with_f01(8000.0);
        assert!(ChipState::new("x", vec![hot], vec![]).is_err());
    }

    #[test]
    fn parse_error_carries_line() {
        let text = "{\n  \"name\": \"x\",\n  \"qubits\": [,]\n}";
        match ChipState::from_json_str(text, Path::new("chip.json")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
