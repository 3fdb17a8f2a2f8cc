//! Average gate error against exp(−iπ/4 ZX), up to local Z phases.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hamiltonian::DressedPair;
use crate::error::{Error, Result};

type M4 = [[Complex64; 4]; 4];

/// exp(−iπ/4 ZX) with Z on the control; index 2c + t.
pub fn target_zx() -> M4 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut u = [[Complex64::default(); 4]; 4];
    for c in 0..2 {
        let z = if c == 0 { 1.0 } else { -1.0 };
        for t in 0..2 {
            u[2 * c + t][2 * c + t] = Complex64::new(s, 0.0);
            u[2 * c + t][2 * c + 1 - t] = Complex64::new(0.0, -s * z);
        }
    }
    u
}

/// Phases (a, b, g, e): output rows carry e^{i(a·c + b·t)}, input columns
/// e^{i(g·c + e·t)}.
fn phase_vectors(ph: &[f64; 4]) -> ([Complex64; 4], [Complex64; 4]) {
    let v = |x: f64, y: f64| {
        [
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, y),
            Complex64::from_polar(1.0, x),
            Complex64::from_polar(1.0, x + y),
        ]
    };
    (v(ph[0], ph[1]), v(ph[2], ph[3]))
}

fn overlap(m: &M4, ph: &[f64; 4]) -> Complex64 {
    let (d1, d2) = phase_vectors(ph);
    let mut s = Complex64::default();
    for j in 0..4 {
        for k in 0..4 {
            s += m[j][k] * d1[j] * d2[k];
        }
    }
    s
}

/// max over local Z phases of |Tr(U_target† D1 U D2)|.
///
/// The overlap is affine in each e^{iφ}, S = A + e^{iφ}B, so each coordinate
/// has the closed-form optimum φ = arg A − arg B. Coordinate ascent runs from
/// all sixteen corners of {0, π}⁴.
fn best_overlap(m: &M4) -> f64 {
    let pi = std::f64::consts::PI;
    let mut best: f64 = 0.0;
    for start in 0..16u32 {
        let mut ph = [0.0; 4];
        for (i, p) in ph.iter_mut().enumerate() {
            if start >> i & 1 == 1 {
                *p = pi;
            }
        }
        let mut cur = overlap(m, &ph).norm();
        for _ in 0..200 {
            for i in 0..4 {
                ph[i] = 0.0;
                let s0 = overlap(m, &ph);
                ph[i] = pi;
                let s1 = overlap(m, &ph);
                let (a, b) = ((s0 + s1) * 0.5, (s0 - s1) * 0.5);
                ph[i] = if b.norm() > 0.0 {
                    a.arg() - b.arg()
                } else {
                    0.0
                };
            }
            let next = overlap(m, &ph).norm();
            let done = next - cur <= 1e-15 * next.max(1.0);
            cur = next.max(cur);
            if done {
                break;
            }
        }
        best = best.max(cur);
    }
    best
}

/// Error of a 4×4 computational-subspace block indexed 2c + t.
pub fn error_from_projection(up: &M4) -> f64 {
    let ut = target_zx();
    let mut m = [[Complex64::default(); 4]; 4];
    for j in 0..4 {
        for k in 0..4 {
            m[j][k] = ut[j][k].conj() * up[j][k];
        }
    }
    let f = best_overlap(&m);
    const D: f64 = 4.0;
    (1.0 - (f * f + D) / (D * (D + 1.0))).clamp(0.0, 1.0)
}

/// Project `u` onto the dressed computational states and score it.
pub fn gate_error(u: &DMatrix<Complex64>, dressed: &DressedPair) -> Result<f64> {
    let n = dressed.dim();
    if u.nrows() != n || u.ncols() != n {
        return Err(Error::param(format!(
            "operator is {}×{} but the pair has dimension {n}",
            u.nrows(),
            u.ncols()
        )));
    }
    let comp = dressed.computational();
    let mut cols = Vec::with_capacity(4 * n);
    for &k in &comp {
        let v = dressed.vectors.column(k);
        for r in 0..n {
            cols.push((0..n).map(|s| u[(r, s)] * v[s]).sum::<Complex64>());
        }
    }
    Ok(error_from_columns(&cols, dressed))
}

/// Score propagated images of the four dressed computational states.
pub(crate) fn error_from_columns(cols: &[Complex64], dressed: &DressedPair) -> f64 {
    let n = dressed.dim();
    let comp = dressed.computational();
    let mut up = [[Complex64::default(); 4]; 4];
    for (j, &row) in comp.iter().enumerate() {
        let v = dressed.vectors.column(row);
        for k in 0..4 {
            up[j][k] = (0..n).map(|i| cols[k * n + i] * v[i]).sum();
        }
    }
    error_from_projection(&up)
}
