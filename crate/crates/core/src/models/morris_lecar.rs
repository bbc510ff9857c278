//! Morris-Lecar voltage oscillator (barnacle giant muscle fiber), in the
//! sign convention with `E_Ca = -100`, `E_K = 70`, `E_L = 50` and negative
//! conductances `g_Ca`, `g_K`:
//!
//! ```text
//! x' = g_Ca m_inf(x)(x + E_Ca) + g_K q (x + E_K) + g_L (x + E_L) + I
//! q' = -q / tau(x) + w_inf(x) / tau(x)
//! ```
//!
//! with `m_inf(x) = 0.5 (1 + tanh((x - V1)/V2))`,
//! `w_inf(x) = 0.5 (1 + tanh((x + V3)/V4))` and
//! `tau(x) = T0 / cosh((x + V3)/(2 V4))`.
//!
//! The recovery variable `q` is eliminated through its closed-form integral
//! against the measured voltage; the linear block enters through the
//! regressor `phi(y) = (y, 1)` with `theta = (g_L, E_L g_L + I)`, so the
//! injected current is recovered as `I = theta_2 - E_L theta_1`.

use super::Trajectory;
use crate::canonical::{CanonicalSystem, SearchSpace, SystemDims};
use crate::error::{Error, Result};
use crate::ode::{Method, Stepper};

pub const E_CA: f64 = -100.0;
pub const E_K: f64 = 70.0;
pub const E_L: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorrisLecarParams {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
    /// Time-constant scale of the recovery variable.
    pub tau0: f64,
    pub g_ca: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub i_app: f64,
}

impl Default for MorrisLecarParams {
    /// Oscillatory reference parameter set used throughout the tests.
    fn default() -> Self {
        Self {
            v1: -1.0,
            v2: 15.0,
            v3: -10.0,
            v4: 14.5,
            tau0: 3.0,
            g_ca: -1.1,
            g_k: -2.0,
            g_l: -0.5,
            i_app: 10.0,
        }
    }
}

impl MorrisLecarParams {
    /// Builds from the CLI packing `(V1, V2, V3, V4, T0, g_Ca, g_K, g_L, I)`.
    pub fn from_slice(p: &[f64]) -> Result<Self> {
        if p.len() != 9 {
            return Err(Error::Config(format!(
                "expected 9 parameters (V1, V2, V3, V4, T0, g_Ca, g_K, g_L, I), got {}",
                p.len()
            )));
        }
        let params = Self {
            v1: p[0],
            v2: p[1],
            v3: p[2],
            v4: p[3],
            tau0: p[4],
            g_ca: p[5],
            g_k: p[6],
            g_l: p[7],
            i_app: p[8],
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v2 == 0.0 || self.v4 == 0.0 {
            return Err(Error::Config("V2 and V4 must be nonzero".into()));
        }
        if self.tau0.is_nan() || self.tau0 <= 0.0 {
            return Err(Error::Config(format!(
                "T0 must be positive, got {}",
                self.tau0
            )));
        }
        Ok(())
    }

    /// Nonlinear parameter vector `(V1, V2, V3, V4, T0, g_Ca, g_K)`.
    pub fn lambda(&self) -> Vec<f64> {
        vec![
            self.v1, self.v2, self.v3, self.v4, self.tau0, self.g_ca, self.g_k,
        ]
    }

    /// Linear block in regressor coordinates: `(g_L, E_L g_L + I)`.
    pub fn theta(&self) -> Vec<f64> {
        vec![self.g_l, E_L * self.g_l + self.i_app]
    }

    pub fn m_inf(&self, x: f64) -> f64 {
        0.5 * (1.0 + ((x - self.v1) / self.v2).tanh())
    }

    pub fn w_inf(&self, x: f64) -> f64 {
        0.5 * (1.0 + ((x + self.v3) / self.v4).tanh())
    }

    pub fn tau(&self, x: f64) -> f64 {
        self.tau0 / ((x + self.v3) / (2.0 * self.v4)).cosh()
    }

    pub fn rhs(&self, x: f64, q: f64) -> (f64, f64) {
        let dx = self.g_ca * self.m_inf(x) * (x + E_CA)
            + self.g_k * q * (x + E_K)
            + self.g_l * (x + E_L)
            + self.i_app;
        let tau = self.tau(x);
        (dx, (self.w_inf(x) - q) / tau)
    }
}

/// Injected current from the recovered linear block.
pub fn injected_current(theta: &[f64]) -> f64 {
    theta[1] - E_L * theta[0]
}

/// Fixed-step simulation of the full voltage/recovery system.
pub fn simulate(
    params: &MorrisLecarParams,
    x0: f64,
    q0: f64,
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<Trajectory> {
    params.validate()?;
    let mut stepper = Stepper::new(method, 2);
    let mut rhs = |_t: f64, s: &[f64], ds: &mut [f64]| {
        let (dx, dq) = params.rhs(s[0], s[1]);
        ds[0] = dx;
        ds[1] = dq;
    };
    let mut state = [x0, q0];
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut qs = Vec::with_capacity(n_steps + 1);
    xs.push(x0);
    qs.push(q0);
    for i in 0..n_steps {
        stepper.step(&mut rhs, i as f64 * dt, dt, &mut state);
        if !state.iter().all(|v| v.is_finite()) || state[0].abs() > 1e4 {
            return Err(Error::Numeric {
                index: Some(i + 1),
                msg: "simulation blew up".into(),
            });
        }
        xs.push(state[0]);
        qs.push(state[1]);
    }
    Ok(Trajectory {
        dt,
        primary: xs,
        secondary: qs,
    })
}

/// Reduced model over `lambda = (V1, V2, V3, V4, T0, g_Ca, g_K)` with
/// regressor `phi(y) = (y, 1)` and the recovery variable eliminated.
pub struct MorrisLecarReduced;

#[inline]
fn lam(lambda: &[f64]) -> (f64, f64, f64, f64, f64, f64, f64) {
    (
        lambda[0], lambda[1], lambda[2], lambda[3], lambda[4], lambda[5], lambda[6],
    )
}

impl CanonicalSystem for MorrisLecarReduced {
    fn dims(&self) -> SystemDims {
        SystemDims {
            n: 1,
            r: 2,
            k_lambda: 7,
            q_dim: 1,
        }
    }

    fn phi(&self, y: f64, _t: f64, out: &mut [f64]) {
        out[0] = y;
        out[1] = 1.0;
    }

    fn g(
        &self,
        y: f64,
        lambda: &[f64],
        q: &[f64],
        _t: f64,
        out: &mut [f64],
    ) -> std::result::Result<(), String> {
        let (v1, v2, _v3, _v4, _tau0, g_ca, g_k) = lam(lambda);
        if v2 == 0.0 {
            return Err("activation slope V2 is zero".into());
        }
        let m_inf = 0.5 * (1.0 + ((y - v1) / v2).tanh());
        out[0] = g_ca * m_inf * (y + E_CA) + g_k * q[0] * (y + E_K);
        Ok(())
    }

    fn q_alpha(&self, _idx: usize, y: f64, lambda: &[f64], _t: f64) -> f64 {
        let (_, _, v3, v4, tau0, _, _) = lam(lambda);
        -((y + v3) / (2.0 * v4)).cosh() / tau0
    }

    fn q_w(&self, _idx: usize, y: f64, lambda: &[f64], _t: f64) -> f64 {
        let (_, _, v3, v4, tau0, _, _) = lam(lambda);
        let w_inf = 0.5 * (1.0 + ((y + v3) / v4).tanh());
        w_inf * ((y + v3) / (2.0 * v4)).cosh() / tau0
    }
}

/// Search parametrization `(V1/V2, 1/V2, V3, V4, T0, g_Ca, g_K)`: the two
/// activation parameters are replaced by the ratios that enter
/// `tanh((y - V1)/V2) = tanh(y/V2 - V1/V2)` linearly.
pub struct RatioSearch;

impl SearchSpace for RatioSearch {
    fn dim(&self) -> usize {
        7
    }

    fn to_physical(&self, s: &[f64]) -> Vec<f64> {
        let v2 = 1.0 / s[1];
        vec![s[0] * v2, v2, s[2], s[3], s[4], s[5], s[6]]
    }

    fn from_physical(&self, p: &[f64]) -> Vec<f64> {
        vec![p[0] / p[1], 1.0 / p[1], p[2], p[3], p[4], p[5], p[6]]
    }

    fn names(&self) -> Vec<&'static str> {
        vec!["V1/V2", "1/V2", "V3", "V4", "T0", "g_Ca", "g_K"]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::detect_period;
    use approx::assert_relative_eq;

    #[test]
    fn tau_at_centered_argument() {
        let p = MorrisLecarParams::default();
        assert_relative_eq!(p.tau(-p.v3), p.tau0, max_relative = 1e-14);
    }

    #[test]
    fn linear_limit_relaxes_to_equilibrium() {
        let p = MorrisLecarParams {
            g_ca: 0.0,
            g_k: 0.0,
            ..Default::default()
        };
        let eq = -E_L - p.i_app / p.g_l; // -50 + 20 = -30
        let traj = simulate(&p, 5.0, 0.2, 0.001, 100_000, Method::Rk4).unwrap();
        assert_relative_eq!(*traj.primary.last().unwrap(), eq, max_relative = 1e-6);
    }

    #[test]
    fn reference_parameters_oscillate() {
        let p = MorrisLecarParams::default();
        let traj = simulate(&p, 0.0, 0.1, 0.001, 300_000, Method::Rk4).unwrap();
        // Discard transient, detect the period on the tail.
        let tail = 150_000;
        let ts: Vec<f64> = (tail..traj.primary.len())
            .map(|i| i as f64 * traj.dt)
            .collect();
        let est = detect_period(&ts, &traj.primary[tail..]).unwrap();
        assert!(
            est.period > 5.0 && est.period < 60.0,
            "implausible oscillation period {}",
            est.period
        );
        let range = traj.primary[tail..]
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
            - traj.primary[tail..]
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(range > 10.0, "oscillation amplitude too small: {range}");
    }

    #[test]
    fn reduction_matches_original_rhs() {
        let p = MorrisLecarParams::default();
        let lambda = p.lambda();
        let theta = p.theta();
        let sys = MorrisLecarReduced;
        let mut g = [0.0];
        let mut phi = [0.0, 0.0];
        for k in 0..200 {
            let x = -60.0 + k as f64; // sweep a voltage range
            let q = 0.3 + 0.002 * k as f64;
            sys.g(x, &lambda, &[q], 0.0, &mut g).unwrap();
            sys.phi(x, 0.0, &mut phi);
            let reduced = g[0] + phi[0] * theta[0] + phi[1] * theta[1];
            let (dx, _) = p.rhs(x, q);
            assert!(
                (reduced - dx).abs() <= 1e-9 * (1.0 + dx.abs()),
                "x={x} reduced={reduced} direct={dx}"
            );
        }
    }

    #[test]
    fn q_subsystem_matches_recovery_equation() {
        let p = MorrisLecarParams::default();
        let lambda = p.lambda();
        let sys = MorrisLecarReduced;
        for k in 0..100 {
            let x = -50.0 + k as f64;
            let alpha = sys.q_alpha(0, x, &lambda, 0.0);
            let w = sys.q_w(0, x, &lambda, 0.0);
            assert_relative_eq!(alpha, -1.0 / p.tau(x), max_relative = 1e-12);
            assert_relative_eq!(w, p.w_inf(x) / p.tau(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn ratio_search_round_trip() {
        let s = RatioSearch;
        let physical = MorrisLecarParams::default().lambda();
        let back = s.to_physical(&s.from_physical(&physical));
        for (a, b) in physical.iter().zip(&back) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
        let search = vec![-0.07, 0.06, -9.0, 12.0, 2.5, -1.3, -1.8];
        let back = s.from_physical(&s.to_physical(&search));
        for (a, b) in search.iter().zip(&back) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn reduction_error_dynamics_is_three_by_three_form() {
        let gains = crate::observer::ObserverGains::scalar(-1.0);
        let m = crate::observer::error_dynamics_matrix(&MorrisLecarReduced, &gains, 0.7, 0.0);
        let expected = nalgebra::DMatrix::from_row_slice(
            3,
            3,
            &[-1.0, 0.7, 1.0, -0.7, 0.0, 0.0, -1.0, 0.0, 0.0],
        );
        assert_eq!(m, expected);
    }

    #[test]
    fn current_recovery_rule() {
        let p = MorrisLecarParams::default();
        assert_relative_eq!(injected_current(&p.theta()), p.i_app, max_relative = 1e-12);
        assert_relative_eq!(injected_current(&[-0.5, -15.0]), 10.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(MorrisLecarParams {
            v2: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MorrisLecarParams {
            tau0: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
