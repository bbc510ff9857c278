//! Predator-prey system with saturating (Holling type II) predation:
//!
//! ```text
//! x' = p1 x (1 - x/p2) - p3 z x / (p4 + x)
//! z' = p5 z x / (p4 + x) - p6 z
//! ```
//!
//! The prey density `x` is the measured output. Substituting
//! `q = x + (p3/p5) z` decouples a one-dimensional linear subsystem
//! `q' = -p6 q + p1 x (1 - x/p2) + p6 x`, leaving a scalar reduced model in
//! which `p3` no longer appears: the estimation problem has the five
//! nonlinear parameters `(p1, p2, p4, p5, p6)` and no linear block.

use super::Trajectory;
use crate::canonical::{CanonicalSystem, SystemDims};
use crate::error::{Error, Result};
use crate::ode::{Method, Stepper};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredatorPreyParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
}

impl Default for PredatorPreyParams {
    /// The classic limit-cycle parameter set used throughout the tests.
    fn default() -> Self {
        Self {
            p1: 1.0,
            p2: 1.3,
            p3: 1.0,
            p4: 1.0,
            p5: 3.0,
            p6: 0.1,
        }
    }
}

/// Initial condition on the limit cycle for the default parameters.
pub const DEFAULT_IC: (f64, f64) = (0.0053, 0.2536);

/// Cycle period for the default parameters.
pub const DEFAULT_PERIOD: f64 = 34.05;

impl PredatorPreyParams {
    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 6 {
            return Err(Error::Config(format!(
                "expected 6 parameters p1..p6, got {}",
                p.len()
            )));
        }
        let params = Self {
            p1: p[0],
            p2: p[1],
            p3: p[2],
            p4: p[3],
            p5: p[4],
            p6: p[5],
        };
        params.validate()?;
        Ok(params)
    }

    /// The reduction requires p2, p3, p5, p6 nonzero.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p2", self.p2),
            ("p3", self.p3),
            ("p5", self.p5),
            ("p6", self.p6),
        ] {
            if v == 0.0 {
                return Err(Error::Config(format!("{name} must be nonzero")));
            }
        }
        Ok(())
    }

    /// Nonlinear parameter vector of the reduced model: `(p1, p2, p4, p5, p6)`.
    pub fn lambda(&self) -> Vec<f64> {
        vec![self.p1, self.p2, self.p4, self.p5, self.p6]
    }

    pub fn rhs(&self, x: f64, z: f64) -> (f64, f64) {
        let hold = x / (self.p4 + x);
        (
            self.p1 * x * (1.0 - x / self.p2) - self.p3 * z * hold,
            self.p5 * z * hold - self.p6 * z,
        )
    }
}

/// Fixed-step simulation of the full two-state system from `(x0, z0)`.
/// The trajectory carries `n_steps + 1` points including the initial state.
pub fn simulate(
    params: &PredatorPreyParams,
    x0: f64,
    z0: f64,
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<Trajectory> {
    params.validate()?;
    if x0 < 0.0 || z0 < 0.0 {
        return Err(Error::Config(
            "initial densities must be non-negative".into(),
        ));
    }
    let mut stepper = Stepper::new(method, 2);
    let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (dx, dz) = params.rhs(s[0], s[1]);
        ds[0] = dx;
        ds[1] = dz;
    };
    let mut state = [x0, z0];
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut zs = Vec::with_capacity(n_steps + 1);
    xs.push(x0);
    zs.push(z0);
    for i in 0..n_steps {
        stepper.step(&mut rhs, i as f64 * dt, dt, &mut state);
        if !state.iter().all(|v| v.is_finite()) || state[0] < -1e-6 || state[1] < -1e-6 {
            return Err(Error::Numeric {
                index: Some(i + 1),
                msg: "simulation blew up or crossed negative density".into(),
            });
        }
        xs.push(state[0]);
        zs.push(state[1]);
    }
    Ok(Trajectory {
        dt,
        primary: xs,
        secondary: zs,
    })
}

/// Reduced scalar model over `lambda = (p1, p2, p4, p5, p6)`:
/// no regressor, one eliminated component with `alpha = -p6` and
/// `w = p1 y (1 - y/p2) + p6 y`, and
/// `g = p1 y - (p1/p2) y^2 + p5 y^2/(p4+y) - p5 y/(p4+y) q`.
pub struct PredatorPreyReduced;

#[inline]
fn unpack(lambda: &[f64]) -> (f64, f64, f64, f64, f64) {
    (lambda[0], lambda[1], lambda[2], lambda[3], lambda[4])
}

impl CanonicalSystem for PredatorPreyReduced {
    fn dims(&self) -> SystemDims {
        SystemDims {
            n: 1,
            r: 0,
            k_lambda: 5,
            q_dim: 1,
        }
    }

    fn phi(&self, _y: f64, _t: f64, _out: &mut [f64]) {}

    fn g(
        &self,
        y: f64,
        lambda: &[f64],
        q: &[f64],
        _t: f64,
        out: &mut [f64],
    ) -> std::result::Result<(), String> {
        let (p1, p2, p4, p5, _p6) = unpack(lambda);
        if p2 == 0.0 {
            return Err("carrying capacity p2 is zero".into());
        }
        let denom = p4 + y;
        if denom.abs() < 1e-12 {
            return Err(format!(
                "predation denominator p4 + x vanished (p4 = {p4}, x = {y})"
            ));
        }
        let hold = y / denom;
        out[0] = p1 * y - (p1 / p2) * y * y + p5 * y * hold - p5 * hold * q[0];
        Ok(())
    }

    fn q_alpha(&self, _idx: usize, _y: f64, lambda: &[f64], _t: f64) -> f64 {
        -lambda[4]
    }

    fn q_w(&self, _idx: usize, y: f64, lambda: &[f64], _t: f64) -> f64 {
        let (p1, p2, _p4, _p5, p6) = unpack(lambda);
        p1 * y * (1.0 - y / p2) + p6 * y
    }
}
