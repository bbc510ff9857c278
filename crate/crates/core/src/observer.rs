//! Error dynamics of the output observer: fundamental matrix construction,
//! the persistency-of-excitation check, and the integral representation of
//! the measured output.
//!
//! The fundamental matrix depends only on the measured data, never on the
//! parameter candidate, so it is built and LU-factored once per dataset and
//! shared read-only across all candidate evaluations.

use crate::canonical::{self, CanonicalSystem};
use crate::error::{Error, Result};
use crate::ode::{Method, Stepper};
use crate::quadrature::{self, Backend, Rule};
use crate::signal::{SampledSignal, UniformGrid};
use nalgebra::{DMatrix, DVector};

/// Minimum singular value of `I - Phi(t0+T, t0)` below which the periodic
/// representation is declared unavailable.
pub const SINGULAR_PERIOD_MAP_TOL: f64 = 1e-10;

/// Condition-number estimate above which stored matrices are flagged.
pub const COND_WARN_THRESHOLD: f64 = 1e12;

/// Output-injection gain `l` and filter coefficients `b` (with `b[0] = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub l: Vec<f64>,
    pub b: Vec<f64>,
}

impl ObserverGains {
    /// Scalar-output case `n = 1`.
    pub fn scalar(l: f64) -> Self {
        Self {
            l: vec![l],
            b: vec![1.0],
        }
    }

    /// Checks dimensions, `b[0] = 1`, that the filter polynomial
    /// `s^{n-1} + b1 s^{n-2} + ... + b_{n-1}` is Hurwitz, and that
    /// `A0 + l C^T` is Hurwitz.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.l.len() != n || self.b.len() != n {
            return Err(Error::Gains(format!(
                "gain vectors must have length n = {n}, got l: {}, b: {}",
                self.l.len(),
                self.b.len()
            )));
        }
        if self.b[0] != 1.0 {
            return Err(Error::Gains(format!("b[0] must be 1, got {}", self.b[0])));
        }
        if n >= 2 {
            let companion = companion_matrix(&self.b[1..]);
            if let Some(root) = first_unstable_eigenvalue(&companion) {
                return Err(Error::Gains(format!(
                    "filter polynomial is not Hurwitz: root with real part {root:.6e}"
                )));
            }
        }
        let mut a_cl = a0_matrix(n);
        for i in 0..n {
            a_cl[(i, 0)] += self.l[i];
        }
        if let Some(root) = first_unstable_eigenvalue(&a_cl) {
            return Err(Error::Gains(format!(
                "A0 + l C^T is not Hurwitz: eigenvalue with real part {root:.6e}"
            )));
        }
        Ok(())
    }
}

/// Integrator-chain matrix with ones on the superdiagonal.
pub fn a0_matrix(n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    m
}

fn companion_matrix(coeffs: &[f64]) -> DMatrix<f64> {
    let m = coeffs.len();
    let mut c = DMatrix::zeros(m, m);
    for (j, &b) in coeffs.iter().enumerate() {
        c[(0, j)] = -b;
    }
    for i in 1..m {
        c[(i, i - 1)] = 1.0;
    }
    c
}

/// Largest non-negative real part among the eigenvalues, if any.
fn first_unstable_eigenvalue(m: &DMatrix<f64>) -> Option<f64> {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .filter(|re| *re >= 0.0)
        .fold(None, |acc, re| Some(acc.map_or(re, |a: f64| a.max(re))))
}

/// Assembles the error-dynamics block matrix
/// `[[A0 + l C^T, b phi^T], [-phi C^T, 0]]` at one sample of the output.
pub fn error_dynamics_matrix(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    y: f64,
    t: f64,
) -> DMatrix<f64> {
    let dims = sys.dims();
    let (n, r) = (dims.n, dims.r);
    let mut phi = vec![0.0; r];
    sys.phi(y, t, &mut phi);
    let mut m = DMatrix::zeros(n + r, n + r);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = 1.0;
    }
    for i in 0..n {
        m[(i, 0)] += gains.l[i];
        for j in 0..r {
            m[(i, n + j)] = gains.b[i] * phi[j];
        }
    }
    for j in 0..r {
        m[(n + j, 0)] = -phi[j];
    }
    m
}

/// The normalized fundamental matrix of the error dynamics, stored at every
/// signal grid point together with its LU factorization.
pub struct FundamentalMatrix {
    grid: UniformGrid,
    dim: usize,
    mats: Vec<DMatrix<f64>>,
    lus: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    cond_estimate: f64,
}

impl FundamentalMatrix {
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn mat(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    /// `Phi(t0 + T, t0)`.
    pub fn phi_period(&self) -> &DMatrix<f64> {
        self.mats.last().unwrap()
    }

    /// Solves `Phi(t_i, t0) x = v` in place using the stored factorization.
    pub fn solve_in_place(&self, i: usize, v: &mut DVector<f64>) -> Result<()> {
        if self.lus[i].solve_mut(v) {
            Ok(())
        } else {
            Err(Error::Numeric {
                index: Some(i),
                msg: "fundamental matrix is singular at this grid point".into(),
            })
        }
    }

    /// Largest eigenvalue modulus of the one-period transition matrix.
    pub fn period_spectral_radius(&self) -> f64 {
        self.phi_period()
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }

    /// Crude condition estimate (max over grid of U-diagonal ratios).
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn cond_warning(&self) -> bool {
        self.cond_estimate > COND_WARN_THRESHOLD
    }
}

fn integrate_segment(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    y: &SampledSignal,
    method: Method,
    h: f64,
    start_idx: usize,
    n_points: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let dims = sys.dims();
    let m = dims.n + dims.r;
    let grid = y.grid();
    let dt = grid.dt;
    let ratio = dt / h;
    let k_sub = ratio.round();
    if h.is_nan() || h <= 0.0 || k_sub < 1.0 || (ratio - k_sub).abs() > 1e-6 * k_sub {
        return Err(Error::Config(format!(
            "integration step h = {h} must divide the grid step dt = {dt}"
        )));
    }
    let k_sub = k_sub as usize;
    let h_eff = dt / k_sub as f64;

    let mut phi_buf = vec![0.0; dims.r];
    let mut m_buf = vec![0.0; m * m];
    let mut rhs = |t: f64, state: &[f64], out: &mut [f64]| {
        let y_t = y.eval_periodic(t);
        sys.phi(y_t, t, &mut phi_buf);
        m_buf.iter_mut().for_each(|v| *v = 0.0);
        // Row-major assembly of the block matrix.
        for i in 0..dims.n.saturating_sub(1) {
            m_buf[i * m + i + 1] = 1.0;
        }
        for i in 0..dims.n {
            m_buf[i * m] += gains.l[i];
            for j in 0..dims.r {
                m_buf[i * m + dims.n + j] = gains.b[i] * phi_buf[j];
            }
        }
        for j in 0..dims.r {
            m_buf[(dims.n + j) * m] = -phi_buf[j];
        }
        // out = M * state, both column-major m x m.
        for col in 0..m {
            let s = &state[col * m..(col + 1) * m];
            let o = &mut out[col * m..(col + 1) * m];
            for i in 0..m {
                let mut acc = 0.0;
                for k in 0..m {
                    acc += m_buf[i * m + k] * s[k];
                }
                o[i] = acc;
            }
        }
    };

    let mut state = vec![0.0; m * m];
    for i in 0..m {
        state[i * m + i] = 1.0;
    }
    let mut stepper = Stepper::new(method, m * m);
    let mut out = Vec::with_capacity(n_points);
    out.push(DMatrix::identity(m, m));
    for p in 1..n_points {
        let t_base = grid.point(start_idx + p - 1);
        for s in 0..k_sub {
            stepper.step(&mut rhs, t_base + s as f64 * h_eff, h_eff, &mut state);
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                index: Some(start_idx + p),
                msg: "fundamental matrix integration blew up".into(),
            });
        }
        out.push(DMatrix::from_column_slice(m, m, &state));
    }
    Ok(out)
}

/// Integrates the error dynamics from identity initial data over one period,
/// sampling the fundamental matrix at every signal grid point.
pub fn compute_fundamental_matrix(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    y: &SampledSignal,
    method: Method,
    h: f64,
) -> Result<FundamentalMatrix> {
    let dims = sys.dims();
    gains.validate(dims.n)?;
    let n_points = y.grid().n_points;
    let mats = integrate_segment(sys, gains, y, method, h, 0, n_points)?;
    let m = dims.n + dims.r;
    let mut cond_estimate: f64 = 1.0;
    let mut lus = Vec::with_capacity(mats.len());
    for mat in &mats {
        let lu = mat.clone().lu();
        let mut dmax = 0.0_f64;
        let mut dmin = f64::INFINITY;
        for i in 0..m {
            let d = lu.u()[(i, i)].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        cond_estimate = cond_estimate.max(if dmin > 0.0 {
            dmax / dmin
        } else {
            f64::INFINITY
        });
        lus.push(lu);
    }
    Ok(FundamentalMatrix {
        grid: *y.grid(),
        dim: m,
        mats,
        lus,
        cond_estimate,
    })
}

/// Transition matrices from grid point `start_idx`, sampled at the following
/// grid points (index 0 of the result is the identity at `start_idx`).
pub fn compute_transition_segment(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    y: &SampledSignal,
    method: Method,
    h: f64,
    start_idx: usize,
    n_points: usize,
) -> Result<Vec<DMatrix<f64>>> {
    gains.validate(sys.dims().n)?;
    integrate_segment(sys, gains, y, method, h, start_idx, n_points)
}

/// Outcome of the persistency-of-excitation check.
#[derive(Debug, Clone, Copy)]
pub struct PeCheck {
    pub min_eigenvalue: f64,
    pub satisfied: bool,
}

/// Minimum eigenvalue of the regressor Gram matrix over one period,
/// `int phi phi^T dtau >= delta I`. Vacuously satisfied when `r = 0`.
pub fn pe_check(sys: &dyn CanonicalSystem, y: &SampledSignal, delta_min: f64) -> PeCheck {
    let dims = sys.dims();
    if dims.r == 0 {
        return PeCheck {
            min_eigenvalue: f64::INFINITY,
            satisfied: true,
        };
    }
    let grid = y.grid();
    let mut gram: DMatrix<f64> = DMatrix::zeros(dims.r, dims.r);
    let mut phi = vec![0.0; dims.r];
    let last = grid.n_points - 1;
    for j in 0..grid.n_points {
        sys.phi(y.values()[j], grid.point(j), &mut phi);
        let w = if j == 0 || j == last { 0.5 } else { 1.0 } * grid.dt;
        for a in 0..dims.r {
            for b in 0..dims.r {
                gram[(a, b)] += w * phi[a] * phi[b];
            }
        }
    }
    let min_eigenvalue = gram
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    PeCheck {
        min_eigenvalue,
        satisfied: min_eigenvalue > delta_min,
    }
}

/// Cumulative integrals (one per error-state component) of
/// `Phi(tau, t0)^{-1} (g - l y; y phi)` along the grid.
pub struct ForcingCumulative {
    /// `comps[c][j]` = integral of component `c` up to grid point `j`.
    pub comps: Vec<Vec<f64>>,
}

impl ForcingCumulative {
    pub fn last(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.comps.len(),
            self.comps.iter().map(|c| *c.last().unwrap()),
        )
    }
}

pub fn forcing_cumulative(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    phi_mat: &FundamentalMatrix,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<ForcingCumulative> {
    let dims = sys.dims();
    let m = dims.n + dims.r;
    if phi_mat.dim() != m {
        return Err(Error::Config(
            "fundamental matrix dimension does not match system".into(),
        ));
    }
    if phi_mat.len() != y.len() {
        return Err(Error::Config(
            "fundamental matrix grid does not match signal".into(),
        ));
    }
    let q_sol = if dims.q_dim > 0 {
        Some(canonical::q_periodic_solution(
            sys, y, lambda, rule, backend,
        )?)
    } else {
        None
    };
    let g_flat = canonical::g_on_grid_with_q(sys, y, lambda, q_sol.as_ref())?;

    let n_pts = y.len();
    let grid = y.grid();
    let mut samples: Vec<Vec<f64>> = (0..m).map(|_| vec![0.0; n_pts]).collect();
    let mut phi_reg = vec![0.0; dims.r];
    let mut v = DVector::zeros(m);
    for j in 0..n_pts {
        let yj = y.values()[j];
        let t = grid.point(j);
        for i in 0..dims.n {
            v[i] = g_flat[j * dims.n + i] - gains.l[i] * yj;
        }
        sys.phi(yj, t, &mut phi_reg);
        for (k, &p) in phi_reg.iter().enumerate() {
            v[dims.n + k] = yj * p;
        }
        phi_mat.solve_in_place(j, &mut v)?;
        for c in 0..m {
            let val = v[c];
            if !val.is_finite() {
                return Err(Error::Numeric {
                    index: Some(j),
                    msg: "forcing integrand is non-finite".into(),
                });
            }
            samples[c][j] = val;
        }
    }
    let mut comps = Vec::with_capacity(m);
    for s in samples {
        comps.push(quadrature::cumsum(&s, grid.dt, rule, backend)?.partials);
    }
    Ok(ForcingCumulative { comps })
}

fn solve_periodic_fixed_point(
    phi_period: &DMatrix<f64>,
    c_last: &DVector<f64>,
) -> Result<DVector<f64>> {
    let m = phi_period.nrows();
    let a = DMatrix::identity(m, m) - phi_period;
    let svd = a.svd(true, true);
    let min_singular = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_singular < SINGULAR_PERIOD_MAP_TOL {
        return Err(Error::RepresentationUnavailable { min_singular });
    }
    let rhs = phi_period * c_last;
    svd.solve(&rhs, 0.0)
        .map(|r| DVector::from_column_slice(r.as_slice()))
        .map_err(|e| Error::Numeric {
            index: None,
            msg: format!("periodic solve failed: {e}"),
        })
}

/// The periodic initial condition of the representation,
/// `R = (I - Phi_T)^{-1} Phi_T int_0^T Phi(tau)^{-1} (g - ly; y phi) dtau`.
/// When the candidate equals the true nonlinear parameters, `R` stacks the
/// true initial state and the linearly entering parameters.
pub fn compute_r(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    phi_mat: &FundamentalMatrix,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<DVector<f64>> {
    let fc = forcing_cumulative(sys, gains, phi_mat, y, lambda, rule, backend)?;
    solve_periodic_fixed_point(phi_mat.phi_period(), &fc.last())
}

/// Full representation output: `R` and the predicted trajectory.
pub struct Representation {
    pub r: DVector<f64>,
    pub yhat: Vec<f64>,
}

/// Evaluates the integral representation of the output on the whole grid:
/// `yhat(t_j) = e1^T Phi(t_j)(R + C_j)` with `C_j` the cumulative forcing
/// integral.
pub fn representation(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    phi_mat: &FundamentalMatrix,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<Representation> {
    let fc = forcing_cumulative(sys, gains, phi_mat, y, lambda, rule, backend)?;
    let r = solve_periodic_fixed_point(phi_mat.phi_period(), &fc.last())?;
    let m = phi_mat.dim();
    let n_pts = y.len();
    let mut yhat = Vec::with_capacity(n_pts);
    for j in 0..n_pts {
        let mat = phi_mat.mat(j);
        let mut acc = 0.0;
        for c in 0..m {
            acc += mat[(0, c)] * (r[c] + fc.comps[c][j]);
        }
        yhat.push(acc);
    }
    Ok(Representation { r, yhat })
}

/// Predicted output trajectory on the signal grid.
pub fn predict_yhat(
    sys: &dyn CanonicalSystem,
    gains: &ObserverGains,
    phi_mat: &FundamentalMatrix,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<Vec<f64>> {
    representation(sys, gains, phi_mat, y, lambda, rule, backend).map(|rep| rep.yhat)
}

/// Splits the periodic fixed point into the initial state (first `n`
/// entries) and the linearly entering parameters (rest).
pub fn recover_x0_theta(r: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    (r[..n].to_vec(), r[n..].to_vec())
}
