//! Dormand–Prince 5(4) stepping with a scaled max-norm error estimate.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const ERR_W: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Reusable stage storage for one state dimension.
#[derive(Clone, Debug)]
pub struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Dopri5 {
    pub fn new(dim: usize) -> Self {
        Dopri5 { k: core::array::from_fn(|_| vec![0.0; dim]), tmp: vec![0.0; dim] }
    }

    /// One step of size `h` from `(t, y)`; writes the fifth-order solution to
    /// `out` and returns the error norm (accept when `<= 1`).
    pub fn step<E, F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64, out: &mut [f64], tol: Tolerance) -> Result<f64, E>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    {
        let d = y.len();
        f(t, y, &mut self.k[0])?;
        for s in 1..7 {
            for i in 0..d {
                let mut acc = 0.0;
                for (r, a) in A[s].iter().enumerate().take(s) {
                    acc += a * self.k[r][i];
                }
                self.tmp[i] = y[i] + h * acc;
            }
            if s == 6 {
                out.copy_from_slice(&self.tmp);
            }
            f(t + C[s] * h, &self.tmp, &mut self.k[s])?;
        }
        let mut err: f64 = 0.0;
        for i in 0..d {
            let mut e = 0.0;
            for (s, w) in ERR_W.iter().enumerate() {
                e += w * self.k[s][i];
            }
            let sc = tol.abs + tol.rel * y[i].abs().max(out[i].abs());
            err = err.max((h * e).abs() / sc);
        }
        if err.is_nan() {
            err = f64::INFINITY;
        }
        Ok(err)
    }
}

/// Standard step-size update from the error norm of the last step.
pub fn next_step(h: f64, err: f64) -> f64 {
    let factor = if err == 0.0 { 5.0 } else { (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0) };
    h * factor
}
