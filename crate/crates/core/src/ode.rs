//! Fixed-step explicit integrators on flat state slices.
#![allow(clippy::needless_range_loop)] // indexed stencils over parallel slices

//!
//! Used both for the reference-model simulators and for constructing the
//! fundamental matrix of the observer error dynamics (the matrix state is
//! flattened column-major into the slice).

use crate::error::{Error, Result};

/// Explicit fixed-step methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Forward Euler, order 1. Kept as the direct-integration baseline for
    /// the benchmark harness.
    Euler,
    /// Heun's method (explicit trapezoidal), order 2.
    ImprovedEuler,
    /// Classic Runge-Kutta, order 4.
    Rk4,
    /// Dormand-Prince 5(4) propagation weights run at a fixed step, order 5.
    Dopri5,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "euler" => Ok(Method::Euler),
            "improved_euler" => Ok(Method::ImprovedEuler),
            "rk4" => Ok(Method::Rk4),
            "dopri_fixed" | "dopri5" => Ok(Method::Dopri5),
            other => Err(Error::Config(format!(
                "unknown integration method {other:?} (expected improved_euler, rk4 or dopri_fixed)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::ImprovedEuler => "improved_euler",
            Method::Rk4 => "rk4",
            Method::Dopri5 => "dopri_fixed",
        }
    }

    fn stages(&self) -> usize {
        match self {
            Method::Euler => 1,
            Method::ImprovedEuler => 2,
            Method::Rk4 => 4,
            Method::Dopri5 => 6,
        }
    }
}

// Dormand-Prince coefficients (propagation row only; the embedded error
// estimate is not used at a fixed step, and the FSAL stage drops out).
const DP_C: [f64; 6] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0];
const DP_A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
];
const DP_B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];

/// Reusable stage buffers for one state dimension.
pub struct Stepper {
    method: Method,
    k: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Stepper {
    pub fn new(method: Method, dim: usize) -> Self {
        Self {
            method,
            k: (0..method.stages()).map(|_| vec![0.0; dim]).collect(),
            tmp: vec![0.0; dim],
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Advances `y` in place from `t` to `t + h`.
    pub fn step<F>(&mut self, rhs: &mut F, t: f64, h: f64, y: &mut [f64])
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let dim = y.len();
        debug_assert_eq!(self.tmp.len(), dim);
        match self.method {
            Method::Euler => {
                let k1 = &mut self.k[0];
                rhs(t, y, k1);
                for i in 0..dim {
                    y[i] += h * k1[i];
                }
            }
            Method::ImprovedEuler => {
                let (k1, rest) = self.k.split_at_mut(1);
                let k1 = &mut k1[0];
                let k2 = &mut rest[0];
                rhs(t, y, k1);
                for i in 0..dim {
                    self.tmp[i] = y[i] + h * k1[i];
                }
                rhs(t + h, &self.tmp, k2);
                for i in 0..dim {
                    y[i] += 0.5 * h * (k1[i] + k2[i]);
                }
            }
            Method::Rk4 => {
                {
                    let k1 = &mut self.k[0];
                    rhs(t, y, k1);
                }
                for i in 0..dim {
                    self.tmp[i] = y[i] + 0.5 * h * self.k[0][i];
                }
                {
                    let (head, tail) = self.k.split_at_mut(1);
                    let _ = head;
                    rhs(t + 0.5 * h, &self.tmp, &mut tail[0]);
                }
                for i in 0..dim {
                    self.tmp[i] = y[i] + 0.5 * h * self.k[1][i];
                }
                {
                    let (_, tail) = self.k.split_at_mut(2);
                    rhs(t + 0.5 * h, &self.tmp, &mut tail[0]);
                }
                for i in 0..dim {
                    self.tmp[i] = y[i] + h * self.k[2][i];
                }
                {
                    let (_, tail) = self.k.split_at_mut(3);
                    rhs(t + h, &self.tmp, &mut tail[0]);
                }
                for i in 0..dim {
                    y[i] += h / 6.0
                        * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
                }
            }
            Method::Dopri5 => {
                for s in 0..6 {
                    if s == 0 {
                        self.tmp.copy_from_slice(y);
                    } else {
                        for i in 0..dim {
                            let mut acc = y[i];
                            for (j, kj) in self.k[..s].iter().enumerate() {
                                let a = DP_A[s][j];
                                if a != 0.0 {
                                    acc += h * a * kj[i];
                                }
                            }
                            self.tmp[i] = acc;
                        }
                    }
                    let (_, tail) = self.k.split_at_mut(s);
                    rhs(t + DP_C[s] * h, &self.tmp, &mut tail[0]);
                }
                for i in 0..dim {
                    let mut acc = 0.0;
                    for (j, kj) in self.k.iter().enumerate() {
                        if DP_B[j] != 0.0 {
                            acc += DP_B[j] * kj[i];
                        }
                    }
                    y[i] += h * acc;
                }
            }
        }
    }
}
