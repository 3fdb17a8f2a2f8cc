//! Static Duffing Hamiltonian of a coupled transmon pair and its dressed
//! eigenbasis.
//!
//! The product basis index is `c * levels + t` (control major).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::TransmonPair;
use crate::error::{Error, Result};

/// Dressed states whose largest bare overlap falls below this are reported
/// as ambiguous.
pub const MIN_LABEL_OVERLAP: f64 = 0.9;

pub(crate) fn index(levels: usize, c: usize, t: usize) -> usize {
    c * levels + t
}

/// Bare energy of |c, t⟩.
pub(crate) fn bare_energy(pair: &TransmonPair, c: usize, t: usize) -> f64 {
    let (c, t) = (c as f64, t as f64);
    pair.f_c * c
        + 0.5 * pair.delta_c * c * (c - 1.0)
        + pair.f_t * t
        + 0.5 * pair.delta_t * t * (t - 1.0)
}

/// Exchange matrix elements ⟨c+1, t−1| a_c† a_t |c, t⟩ as (row, col, value).
pub(crate) fn exchange_elements(levels: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for c in 0..levels - 1 {
        for t in 1..levels {
            let v = ((c + 1) as f64 * t as f64).sqrt();
            out.push((index(levels, c + 1, t - 1), index(levels, c, t), v));
        }
    }
    out
}

fn dense(pair: &TransmonPair, j: f64) -> DMatrix<f64> {
    let l = pair.levels;
    let mut h = DMatrix::zeros(l * l, l * l);
    for c in 0..l {
        for t in 0..l {
            let k = index(l, c, t);
            h[(k, k)] = bare_energy(pair, c, t);
        }
    }
    for (r, col, v) in exchange_elements(l) {
        h[(r, col)] += j * v;
        h[(col, r)] += j * v;
    }
    h
}

/// H0 = Σ_q [f_q n_q + (δ_q/2) n_q(n_q−1)] + J(a_c†a_t + a_c a_t†), in MHz.
pub fn build_hamiltonian(pair: &TransmonPair) -> Result<DMatrix<f64>> {
    pair.validate()?;
    Ok(dense(pair, pair.j_coupling))
}

/// Eigendecomposition of H0 with each bare state mapped to the dressed
/// state it overlaps most.
#[derive(Debug, Clone)]
pub struct DressedPair {
    pub pair: TransmonPair,
    /// Eigenvalues in ascending order.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors, ordered like `energies`.
    pub vectors: DMatrix<f64>,
    /// `labels[k]` is the dressed column assigned to bare state `k`.
    pub labels: Vec<usize>,
    /// Squared overlap of bare state `k` with its assigned dressed state.
    pub overlaps: Vec<f64>,
}

impl DressedPair {
    pub fn new(pair: &TransmonPair) -> Result<Self> {
        pair.validate()?;
        Ok(Self::from_matrix(pair, dense(pair, pair.j_coupling)))
    }

    fn from_matrix(pair: &TransmonPair, h: DMatrix<f64>) -> Self {
        let n = h.nrows();
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let mut labels = Vec::with_capacity(n);
        let mut overlaps = Vec::with_capacity(n);
        for k in 0..n {
            let (j, w) = (0..n)
                .map(|j| (j, vectors[(k, j)].powi(2)))
                .fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best });
            labels.push(j);
            overlaps.push(w);
        }
        // Fix each eigenvector's sign by its labelled bare component, so
        // dressed ladder operators follow the bare ones.
        for (k, &j) in labels.iter().enumerate() {
            if vectors[(k, j)] < 0.0 {
                vectors.column_mut(j).neg_mut();
            }
        }
        DressedPair {
            pair: *pair,
            energies,
            vectors,
            labels,
            overlaps,
        }
    }

    pub fn levels(&self) -> usize {
        self.pair.levels
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Dressed column for bare |c, t⟩.
    pub fn label(&self, c: usize, t: usize) -> usize {
        self.labels[index(self.levels(), c, t)]
    }

    pub fn energy(&self, c: usize, t: usize) -> f64 {
        self.energies[self.label(c, t)]
    }

    /// Dressed columns of |00⟩, |01⟩, |10⟩, |11⟩.
    pub fn computational(&self) -> [usize; 4] {
        [
            self.label(0, 0),
            self.label(0, 1),
            self.label(1, 0),
            self.label(1, 1),
        ]
    }

    pub fn target_freq(&self) -> f64 {
        self.energy(0, 1) - self.energy(0, 0)
    }

    pub fn control_freq(&self) -> f64 {
        self.energy(1, 0) - self.energy(0, 0)
    }

    /// Smallest labelling overlap over the computational states.
    pub fn min_computational_overlap(&self) -> f64 {
        let l = self.levels();
        [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|&(c, t)| self.overlaps[index(l, c, t)])
            .fold(f64::INFINITY, f64::min)
    }

    /// True when two computational states share a dressed label or one of
    /// them is strongly hybridized.
    pub fn ambiguous(&self) -> bool {
        let c = self.computational();
        let distinct = (0..4).all(|i| (i + 1..4).all(|j| c[i] != c[j]));
        !distinct || self.min_computational_overlap() < MIN_LABEL_OVERLAP
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZzResult {
    pub zz_khz: f64,
    pub min_overlap: f64,
    /// Level identification is unreliable; `zz_khz` is not meaningful.
    pub ambiguous: bool,
}

/// ζ = E11 − E10 − E01 + E00 from exact diagonalization, in kHz.
pub fn static_zz(pair: &TransmonPair) -> Result<ZzResult> {
    pair.validate()?;
    if pair.j_coupling == 0.0 {
        // Decoupled levels are additive; skip the rounding of the sum.
        return Ok(ZzResult {
            zz_khz: 0.0,
            min_overlap: 1.0,
            ambiguous: false,
        });
    }
    Ok(zz_of(&DressedPair::new(pair)?))
}

pub(crate) fn zz_of(d: &DressedPair) -> ZzResult {
    let zz = d.energy(1, 1) - d.energy(1, 0) - d.energy(0, 1) + d.energy(0, 0);
    ZzResult {
        zz_khz: zz * 1e3,
        min_overlap: d.min_computational_overlap(),
        ambiguous: d.ambiguous(),
    }
}

/// Second-order dispersive ζ = 2J²(δc+δt)/((Δ+δc)(Δ−δt)) in kHz, Δ = f_c − f_t.
///
/// Valid when |Δ|, |Δ+δc| and |Δ−δt| all greatly exceed J.
pub fn static_zz_perturbative(pair: &TransmonPair) -> Result<f64> {
    pair.validate()?;
    let d = pair.detuning();
    let (a, b) = (d + pair.delta_c, d - pair.delta_t);
    const POLE_EPS: f64 = 1e-9;
    if a.abs() < POLE_EPS || b.abs() < POLE_EPS {
        return Err(Error::Pole(format!(
            "Δ = {d} MHz hits a two-excitation resonance (Δ+δc = {a}, Δ−δt = {b})"
        )));
    }
    let j2 = pair.j_coupling * pair.j_coupling;
    Ok(2.0 * j2 * (pair.delta_c + pair.delta_t) / (a * b) * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(d: f64, j: f64, levels: usize) -> TransmonPair {
        TransmonPair {
            f_c: 5000.0 + d,
            f_t: 5000.0,
            j_coupling: j,
            levels,
            ..TransmonPair::default()
        }
    }

    /// Cyclic Jacobi eigenvalues, independent of nalgebra's solver.
    fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum();
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn hermitian_and_decoupled_levels() {
        let p = pair(100.0, 0.0, 4);
        let h = build_hamiltonian(&p).unwrap();
        assert_eq!(h, h.transpose());
        let d = DressedPair::new(&p).unwrap();
        for c in 0..4 {
            for t in 0..4 {
                assert!((d.energy(c, t) - bare_energy(&p, c, t)).abs() < 1e-9);
            }
        }
        let h = build_hamiltonian(&pair(37.0, 2.5, 5)).unwrap();
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn eigenvalues_match_jacobi_oracle() {
        let p = TransmonPair {
            f_c: 5000.0,
            f_t: 4900.0,
            j_coupling: 2.0,
            levels: 3,
            ..TransmonPair::default()
        };
        let h = build_hamiltonian(&p).unwrap();
        let rows = (0..9)
            .map(|i| (0..9).map(|j| h[(i, j)]).collect())
            .collect();
        let oracle = jacobi_eigenvalues(rows);
        let d = DressedPair::new(&p).unwrap();
        for (a, b) in d.energies.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn levels_below_three_rejected() {
        assert!(build_hamiltonian(&pair(100.0, 1.0, 2)).is_err());
    }

    #[test]
    fn zz_zero_without_coupling() {
        let z = static_zz(&pair(123.4, 0.0, 4)).unwrap();
        assert_eq!(z.zz_khz, 0.0);
        assert_eq!(static_zz_perturbative(&pair(123.4, 0.0, 4)).unwrap(), 0.0);
    }

    #[test]
    fn zz_reference_point() {
        let p = pair(100.0, 2.25, 4);
        let pert = static_zz_perturbative(&p).unwrap();
        assert!((pert - 67.57).abs() < 0.05, "{pert}");
        let exact = static_zz(&p).unwrap();
        assert!(!exact.ambiguous);
        assert!(
            (exact.zz_khz / pert - 1.0).abs() < 0.1,
            "{} vs {pert}",
            exact.zz_khz
        );
    }

    #[test]
    fn zz_even_in_coupling_sign() {
        for d in [-250.0, 60.0, 140.0] {
            let p = pair(d, 2.0, 4);
            let plus = zz_of(&DressedPair::from_matrix(&p, dense(&p, 2.0)));
            let minus = zz_of(&DressedPair::from_matrix(&p, dense(&p, -2.0)));
            assert!((plus.zz_khz - minus.zz_khz).abs() <= 1e-6 * plus.zz_khz.abs());
        }
    }

    #[test]
    fn collisions_flag_ambiguity_and_poles() {
        // Type-1 and type-3 resonances.
        assert!(static_zz(&pair(0.0, 2.0, 4)).unwrap().ambiguous);
        assert!(static_zz(&pair(330.0, 2.0, 4)).unwrap().ambiguous);
        assert!(static_zz(&pair(-330.0, 2.0, 4)).unwrap().ambiguous);
        assert!(matches!(
            static_zz_perturbative(&pair(330.0, 2.0, 4)),
            Err(Error::Pole(_))
        ));
        assert!(matches!(
            static_zz_perturbative(&pair(-330.0, 2.0, 4)),
            Err(Error::Pole(_))
        ));
        assert!(!static_zz(&pair(150.0, 2.0, 4)).unwrap().ambiguous);
    }
}
