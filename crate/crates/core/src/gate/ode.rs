//! Dormand–Prince 5(4) with FSAL and a standard step controller, for complex
//! state vectors updated in place.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step, ns.
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    /// Per-step tolerances equal to `tol`.
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions {
            rtol: tol,
            atol: tol,
            h_max: 1.0,
            h_min: 1e-9,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate y' = f(t, y) from `t0` to `t1` in place.
pub fn dopri5<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [Complex64],
    opts: &OdeOptions,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len();
    let mut stats = OdeStats::default();
    if t1 <= t0 || n == 0 {
        return Ok(stats);
    }
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::default(); n]; 7];
    let mut tmp = vec![Complex64::default(); n];
    let mut y_new = vec![Complex64::default(); n];
    let mut t = t0;
    let mut h = (0.01 * (t1 - t0)).min(opts.h_max).min(0.05);
    f(t, y, &mut k[0]);
    while t < t1 {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::Solver(format!(
                "step budget exhausted at t = {t:.3} ns"
            )));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s][..s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += k[j][i] * (h * a);
                    }
                }
                tmp[i] = acc;
            }
            f(t + C[s] * h, &tmp, &mut k[s]);
            if s == 6 {
                y_new.copy_from_slice(&tmp);
            }
        }
        let mut err = 0.0;
        for i in 0..n {
            let mut e = Complex64::default();
            for (j, w) in E.iter().enumerate() {
                if *w != 0.0 {
                    e += k[j][i] * w;
                }
            }
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            err += (e.norm() * h / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            stats.accepted += 1;
            h = (h * fac).min(opts.h_max);
        } else {
            stats.rejected += 1;
            h *= fac.min(1.0);
        }
        if h < opts.h_min && t < t1 {
            return Err(Error::Solver(format!(
                "step size underflow at t = {t:.3} ns"
            )));
        }
    }
    Ok(stats)
}
