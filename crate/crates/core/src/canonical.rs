//! The reduced-form model contract and closed-form elimination of the
//! diagonal auxiliary subsystem.
//!
//! A [`CanonicalSystem`] supplies the pieces of
//! `x' = A0 x + b phi(y,t)^T theta + g(y, lambda, t)` together with the
//! decoupled subsystem `q_i' = alpha_i(y,lambda,t) q_i + w_i(y,lambda,t)`
//! whose solution is replaced by explicit integrals of the measured output.
//! Each `q_i` is pinned by periodicity: the periodic initial value `q0_i`
//! is computed, never searched over.

use crate::error::{Error, Result};
use crate::quadrature::{self, Backend, Rule};
use crate::signal::SampledSignal;

/// Dimensions of a reduced-form model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemDims {
    /// State dimension of the observed block.
    pub n: usize,
    /// Number of linearly entering parameters (regressor length).
    pub r: usize,
    /// Number of nonlinear search parameters.
    pub k_lambda: usize,
    /// Dimension of the eliminated diagonal subsystem (0 when absent).
    pub q_dim: usize,
}

/// A model in reduced observer form. Implementations must be pure: no
/// interior mutability, safe for concurrent evaluation across parameter
/// candidates.
pub trait CanonicalSystem: Send + Sync {
    fn dims(&self) -> SystemDims;

    /// Regressor of the linearly entering parameters; `out` has length `r`.
    fn phi(&self, y: f64, t: f64, out: &mut [f64]);

    /// Nonlinear right-hand-side term; `out` has length `n`, `q` has length
    /// `q_dim`. Returns a description of the singularity when the model is
    /// undefined at this point.
    fn g(
        &self,
        y: f64,
        lambda: &[f64],
        q: &[f64],
        t: f64,
        out: &mut [f64],
    ) -> std::result::Result<(), String>;

    /// Decay rate of auxiliary component `idx`.
    fn q_alpha(&self, idx: usize, y: f64, lambda: &[f64], t: f64) -> f64;

    /// Forcing of auxiliary component `idx`.
    fn q_w(&self, idx: usize, y: f64, lambda: &[f64], t: f64) -> f64;
}

/// Bijection between optimizer search coordinates and the model's physical
/// nonlinear parameters (identity for most models; some models search over
/// better-conditioned ratios).
pub trait SearchSpace: Send + Sync {
    fn dim(&self) -> usize;
    fn to_physical(&self, search: &[f64]) -> Vec<f64>;
    #[allow(clippy::wrong_self_convention)]
    fn from_physical(&self, physical: &[f64]) -> Vec<f64>;
    /// Coordinate names in search order, for report headers.
    fn names(&self) -> Vec<&'static str>;
}

/// Search coordinates equal physical parameters.
pub struct IdentitySearch {
    pub coord_names: Vec<&'static str>,
}

impl SearchSpace for IdentitySearch {
    fn dim(&self) -> usize {
        self.coord_names.len()
    }
    fn to_physical(&self, search: &[f64]) -> Vec<f64> {
        search.to_vec()
    }
    fn from_physical(&self, physical: &[f64]) -> Vec<f64> {
        physical.to_vec()
    }
    fn names(&self) -> Vec<&'static str> {
        self.coord_names.clone()
    }
}

/// Axis-aligned search box for the nonlinear parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AdmissibleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Config("box bounds have different lengths".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Config(format!(
                    "box bound {i}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance_outside(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| {
                let d = if v < lo {
                    lo - v
                } else if v > hi {
                    v - hi
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Uniform sample from the box.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| rng.gen_range(*lo..*hi))
            .collect()
    }
}

/// Per-component data of the eliminated subsystem on the signal grid.
#[derive(Debug, Clone)]
pub struct QSolution {
    /// Periodic initial values, length `q_dim`.
    pub q0: Vec<f64>,
    /// Trajectories, `q_dim` rows of grid length.
    pub trajectories: Vec<Vec<f64>>,
}

fn alpha_w_samples(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    idx: usize,
) -> (Vec<f64>, Vec<f64>) {
    let grid = y.grid();
    let n = grid.n_points;
    let mut alpha = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let t = grid.point(i);
        let yi = y.values()[i];
        alpha.push(sys.q_alpha(idx, yi, lambda, t));
        w.push(sys.q_w(idx, yi, lambda, t));
    }
    (alpha, w)
}

/// Computes periodic initial values and full trajectories of the auxiliary
/// subsystem in one pass. Errors when a component is not contracting over
/// the period or its period map is numerically singular.
pub fn q_periodic_solution(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<QSolution> {
    let d = sys.dims().q_dim;
    let dt = y.grid().dt;
    let mut q0 = Vec::with_capacity(d);
    let mut trajectories = Vec::with_capacity(d);
    for idx in 0..d {
        let (alpha, w) = alpha_w_samples(sys, y, lambda, idx);
        let kernel = quadrature::exp_kernel_cumulative_with_a(&alpha, &w, dt, rule, backend)?;
        let a_period = *kernel.a.last().unwrap();
        if a_period >= 0.0 {
            return Err(Error::QUnstable {
                component: idx,
                integral: a_period,
            });
        }
        let denom = 1.0 - a_period.exp();
        if denom.abs() < 1e-12 {
            return Err(Error::SingularPeriod {
                component: idx,
                magnitude: denom.abs(),
            });
        }
        let q0_i = *kernel.v.last().unwrap() / denom;
        let traj: Vec<f64> = kernel
            .a
            .iter()
            .zip(&kernel.v)
            .map(|(&ai, &vi)| ai.exp() * q0_i + vi)
            .collect();
        q0.push(q0_i);
        trajectories.push(traj);
    }
    Ok(QSolution { q0, trajectories })
}

/// Periodic initial values of the auxiliary subsystem, componentwise
/// `q0_i = (1 - exp(A_i(T)))^{-1} * int_0^T exp(A_i(T) - A_i(tau)) w_i dtau`.
pub fn q0_periodic(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
) -> Result<Vec<f64>> {
    q_periodic_solution(sys, y, lambda, rule, Backend::Sequential).map(|s| s.q0)
}

/// Auxiliary trajectories from given initial values:
/// `q_i(t_j) = exp(A_i(t_j)) q0_i + int exp(A_i(t_j) - A_i(tau)) w_i dtau`.
pub fn q_trajectory(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    q0: &[f64],
    rule: Rule,
) -> Result<Vec<Vec<f64>>> {
    let d = sys.dims().q_dim;
    if q0.len() != d {
        return Err(Error::Config(format!(
            "q0 has length {}, subsystem dimension is {d}",
            q0.len()
        )));
    }
    let dt = y.grid().dt;
    let mut out = Vec::with_capacity(d);
    for (idx, &q0_i) in q0.iter().enumerate() {
        let (alpha, w) = alpha_w_samples(sys, y, lambda, idx);
        let kernel =
            quadrature::exp_kernel_cumulative_with_a(&alpha, &w, dt, rule, Backend::Sequential)?;
        out.push(
            kernel
                .a
                .iter()
                .zip(&kernel.v)
                .map(|(&ai, &vi)| ai.exp() * q0_i + vi)
                .collect(),
        );
    }
    Ok(out)
}

/// Evaluates `g` at every grid point, flattened row-major: entry
/// `[j * n + c]` is component `c` at grid point `j`. The auxiliary state is
/// supplied from its closed-form solution when the subsystem is present.
pub fn g_on_grid(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    rule: Rule,
    backend: Backend,
) -> Result<Vec<f64>> {
    let dims = sys.dims();
    let q_sol = if dims.q_dim > 0 {
        Some(q_periodic_solution(sys, y, lambda, rule, backend)?)
    } else {
        None
    };
    g_on_grid_with_q(sys, y, lambda, q_sol.as_ref())
}

/// As [`g_on_grid`] but with a precomputed auxiliary solution.
pub fn g_on_grid_with_q(
    sys: &dyn CanonicalSystem,
    y: &SampledSignal,
    lambda: &[f64],
    q_sol: Option<&QSolution>,
) -> Result<Vec<f64>> {
    let dims = sys.dims();
    let grid = y.grid();
    let n_pts = grid.n_points;
    let mut out = vec![0.0; n_pts * dims.n];
    let mut q_buf = vec![0.0; dims.q_dim];
    for j in 0..n_pts {
        if let Some(sol) = q_sol {
            for (c, traj) in sol.trajectories.iter().enumerate() {
                q_buf[c] = traj[j];
            }
        }
        let t = grid.point(j);
        let yj = y.values()[j];
        sys.g(
            yj,
            lambda,
            &q_buf,
            t,
            &mut out[j * dims.n..(j + 1) * dims.n],
        )
        .map_err(|what| Error::Domain { what, index: j })?;
        if out[j * dims.n..(j + 1) * dims.n]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric {
                index: Some(j),
                msg: "g produced a non-finite value".into(),
            });
        }
    }
    Ok(out)
}
