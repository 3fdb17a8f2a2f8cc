//! Time evolution under the echoed cross-resonance drive.
//!
//! The frame rotates at the dressed target frequency ω_t on both transmons,
//! H_rot = H0 − ω_t (n_c + n_t). Writing H_rot = D + V with D the bare
//! diagonal, the solver integrates ψ_I = e^{iDt} ψ_rot, whose generator has
//! only the coupling and drive elements, each carrying a phase e^{i(D_k−D_l)t}.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hamiltonian::{bare_energy, exchange_elements, index, DressedPair};
use super::ode::{dopri5, OdeOptions};
use super::{gaussian_square, CRPulseSpec, TransmonPair, RAD_PER_NS};
use crate::error::Result;

/// `solver_tol` bounds the accumulated error of a whole gate. Local step
/// errors add up over ~10⁴ steps, so the step controller runs two decades
/// tighter.
const LOCAL_TOL_FACTOR: f64 = 1e-2;

/// One symmetric off-diagonal element of the rotating-frame generator.
struct Term {
    k: usize,
    l: usize,
    j: f64,
    xc: f64,
    xt: f64,
    /// κ(D_k − D_l), rad/ns.
    omega: f64,
}

pub(crate) struct Propagator<'a> {
    dressed: &'a DressedPair,
    spec: CRPulseSpec,
    diag: Vec<f64>,
    terms: Vec<Term>,
    opts: OdeOptions,
}

impl<'a> Propagator<'a> {
    pub(crate) fn new(
        dressed: &'a DressedPair,
        spec: &CRPulseSpec,
        solver_tol: f64,
    ) -> Result<Self> {
        spec.validate()?;
        if !(solver_tol > 0.0 && solver_tol < 1e-2) {
            return Err(crate::Error::param(format!(
                "solver_tol must be in (0, 1e-2), got {solver_tol}"
            )));
        }
        let pair: &TransmonPair = &dressed.pair;
        let l = pair.levels;
        let wt = dressed.target_freq();
        let mut diag = vec![0.0; l * l];
        for c in 0..l {
            for t in 0..l {
                diag[index(l, c, t)] = bare_energy(pair, c, t) - wt * (c + t) as f64;
            }
        }
        let mut terms = Vec::new();
        let mut push = |k: usize, l: usize, j: f64, xc: f64, xt: f64| {
            terms.push(Term {
                k,
                l,
                j,
                xc,
                xt,
                omega: RAD_PER_NS * (diag[k] - diag[l]),
            })
        };
        if pair.j_coupling != 0.0 {
            for (r, c, v) in exchange_elements(l) {
                push(r, c, pair.j_coupling * v, 0.0, 0.0);
            }
        }
        for a in 0..l - 1 {
            let x = 0.5 * ((a + 1) as f64).sqrt();
            for b in 0..l {
                push(index(l, a + 1, b), index(l, a, b), 0.0, x, 0.0);
                push(index(l, b, a + 1), index(l, b, a), 0.0, 0.0, x);
            }
        }
        Ok(Propagator {
            dressed,
            spec: *spec,
            diag,
            terms,
            opts: OdeOptions::with_tol(solver_tol * LOCAL_TOL_FACTOR),
        })
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Integrate one drive segment starting at `t0` with envelope sign `sign`.
    fn segment(&self, y: &mut [Complex64], t0: f64, sign: f64) -> Result<()> {
        let n = self.dim();
        let cols = y.len() / n;
        let seg = self.spec.segment_time();
        let (amp, rot, rf) = (
            self.spec.amplitude,
            self.spec.rotary_amplitude,
            self.spec.rise_fall,
        );
        let mut coef = vec![(Complex64::default(), Complex64::default()); self.terms.len()];
        let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            let e = sign * gaussian_square(t - t0, seg, rf);
            for (c, term) in coef.iter_mut().zip(&self.terms) {
                let h = RAD_PER_NS * (term.j + e * (amp * term.xc + rot * term.xt));
                let ph = Complex64::from_polar(h, term.omega * t);
                // −i h e^{iωt} and its Hermitian partner.
                *c = (
                    Complex64::new(ph.im, -ph.re),
                    Complex64::new(-ph.im, -ph.re),
                );
            }
            dy.fill(Complex64::default());
            for col in 0..cols {
                let (ys, ds) = (&y[col * n..(col + 1) * n], &mut dy[col * n..(col + 1) * n]);
                for (term, &(up, down)) in self.terms.iter().zip(coef.iter()) {
                    ds[term.k] += up * ys[term.l];
                    ds[term.l] += down * ys[term.k];
                }
            }
        };
        dopri5(rhs, t0, t0 + seg, y, &self.opts)?;
        Ok(())
    }

    /// ψ ← e^{∓iDt} ψ between interaction and rotating frames.
    fn change_frame(&self, y: &mut [Complex64], t: f64, to_rotating: bool) {
        let n = self.dim();
        let s = if to_rotating { -1.0 } else { 1.0 };
        for (i, v) in y.iter_mut().enumerate() {
            *v *= Complex64::from_polar(1.0, s * RAD_PER_NS * self.diag[i % n] * t);
        }
    }

    /// Ideal π pulse on the dressed control transition at time `t`, in the
    /// rotating frame.
    fn pi_pulse(&self, y: &mut [Complex64], t: f64) {
        let n = self.dim();
        let d = self.dressed;
        let theta = RAD_PER_NS * (d.control_freq() - d.target_freq()) * t;
        let (fwd, back) = (
            Complex64::from_polar(1.0, -theta),
            Complex64::from_polar(1.0, theta),
        );
        for col in y.chunks_mut(n) {
            for tt in 0..2 {
                let v0 = d.vectors.column(d.label(0, tt));
                let v1 = d.vectors.column(d.label(1, tt));
                let mut o0 = Complex64::default();
                let mut o1 = Complex64::default();
                for i in 0..n {
                    o0 += col[i] * v0[i];
                    o1 += col[i] * v1[i];
                }
                let (a1, a0) = (fwd * o0 - o1, back * o1 - o0);
                for i in 0..n {
                    col[i] += a1 * v1[i] + a0 * v0[i];
                }
            }
        }
    }

    /// Evolve rotating-frame states given at t = 0 to the end of the gate.
    pub(crate) fn evolve(&self, y: &mut [Complex64]) -> Result<()> {
        let total = self.spec.gate_time;
        if self.spec.echo {
            let half = 0.5 * total;
            self.segment(y, 0.0, 1.0)?;
            self.change_frame(y, half, true);
            self.pi_pulse(y, half);
            self.change_frame(y, half, false);
            self.segment(y, half, -1.0)?;
            self.change_frame(y, total, true);
            self.pi_pulse(y, total);
        } else {
            self.segment(y, 0.0, 1.0)?;
            self.change_frame(y, total, true);
        }
        Ok(())
    }

    /// Evolve the given dressed eigenvectors; returns the flattened columns.
    pub(crate) fn evolve_dressed(&self, columns: &[usize]) -> Result<Vec<Complex64>> {
        let n = self.dim();
        let mut y = Vec::with_capacity(n * columns.len());
        for &j in columns {
            y.extend(
                self.dressed
                    .vectors
                    .column(j)
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0)),
            );
        }
        self.evolve(&mut y)?;
        Ok(y)
    }

    pub(crate) fn unitary(&self) -> Result<DMatrix<Complex64>> {
        let n = self.dim();
        let mut y = vec![Complex64::default(); n * n];
        for k in 0..n {
            y[k * n + k] = Complex64::new(1.0, 0.0);
        }
        self.evolve(&mut y)?;
        Ok(DMatrix::from_column_slice(n, n, &y))
    }
}

/// Full propagator over the truncated space, in the frame rotating at the
/// dressed target frequency.
pub fn propagate_unitary(
    pair: &TransmonPair,
    spec: &CRPulseSpec,
    solver_tol: f64,
) -> Result<DMatrix<Complex64>> {
    let dressed = DressedPair::new(pair)?;
    Propagator::new(&dressed, spec, solver_tol)?.unitary()
}

/// max |(U†U − I)_ij|.
pub fn unitarity_defect(u: &DMatrix<Complex64>) -> f64 {
    let g = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Same measure over a set of propagated columns.
pub(crate) fn column_defect(y: &[Complex64], n: usize) -> f64 {
    let cols: Vec<&[Complex64]> = y.chunks(n).collect();
    let mut worst: f64 = 0.0;
    for i in 0..cols.len() {
        for j in i..cols.len() {
            let dot: Complex64 = cols[i].iter().zip(cols[j]).map(|(a, b)| a.conj() * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).norm());
        }
    }
    worst
}
