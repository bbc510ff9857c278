//! Cumulative integrals on uniform grids.
//!
//! Two interchangeable backends build the same prefix sums: a sequential
//! single pass, and a blocked three-phase parallel scan (local scans over
//! contiguous blocks, exclusive scan of block totals, offset add). The scan
//! result is deterministic for a fixed `(len, workers)` partition.

use crate::error::{Error, Result};

/// Quadrature rule for grid-aligned cumulative integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// `partials[i+1] - partials[i] = f(t_{i+1}) * dt`.
    RightRectangle,
    /// `partials[i+1] - partials[i] = (f(t_i) + f(t_{i+1})) * dt / 2`.
    Trapezoid,
}

impl Rule {
    pub fn parse(s: &str) -> Result<Rule> {
        match s {
            "right_rectangle" => Ok(Rule::RightRectangle),
            "trapezoid" => Ok(Rule::Trapezoid),
            other => Err(Error::Config(format!(
                "unknown quadrature rule {other:?} (expected right_rectangle or trapezoid)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::RightRectangle => "right_rectangle",
            Rule::Trapezoid => "trapezoid",
        }
    }
}

/// Which cumulative-sum implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    /// Blocked parallel scan with the given worker count (>= 1).
    Scan {
        workers: usize,
    },
}

/// Grid-aligned prefix sums: `partials[i]` approximates the integral of the
/// sampled integrand from the grid start to point `i`; `partials[0] == 0`.
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    pub dt: f64,
    pub rule: Rule,
    pub partials: Vec<f64>,
}

impl CumulativeIntegral {
    pub fn last(&self) -> f64 {
        *self.partials.last().unwrap()
    }
}

#[inline]
fn increment(rule: Rule, prev: f64, cur: f64, dt: f64) -> f64 {
    match rule {
        Rule::RightRectangle => cur * dt,
        Rule::Trapezoid => (prev + cur) * (dt * 0.5),
    }
}

/// Sequential single-pass cumulative integral.
pub fn cumsum_sequential(samples: &[f64], dt: f64, rule: Rule) -> Result<CumulativeIntegral> {
    if samples.is_empty() {
        return Err(Error::Grid(
            "cumulative integral of empty sample set".into(),
        ));
    }
    let mut partials = Vec::with_capacity(samples.len());
    partials.push(0.0);
    let mut acc = 0.0;
    for i in 1..samples.len() {
        acc += increment(rule, samples[i - 1], samples[i], dt);
        partials.push(acc);
    }
    Ok(CumulativeIntegral { dt, rule, partials })
}

/// Blocked three-phase parallel scan. With `workers == 1` the additions run
/// in the same order as [`cumsum_sequential`], so results match bitwise.
pub fn cumsum_scan(
    samples: &[f64],
    dt: f64,
    rule: Rule,
    workers: usize,
) -> Result<CumulativeIntegral> {
    if samples.is_empty() {
        return Err(Error::Grid(
            "cumulative integral of empty sample set".into(),
        ));
    }
    if workers == 0 {
        return Err(Error::Config(
            "scan backend needs at least one worker".into(),
        ));
    }
    let n = samples.len();
    let mut partials = vec![0.0; n];
    let m = n - 1; // number of increments
    if m == 0 {
        return Ok(CumulativeIntegral { dt, rule, partials });
    }
    for i in 1..n {
        partials[i] = increment(rule, samples[i - 1], samples[i], dt);
    }

    let blocks = workers.min(m);
    let base = m / blocks;
    let extra = m % blocks;
    // Block b covers increments [start_b, start_b + len_b) of partials[1..].
    let body = &mut partials[1..];
    let mut slices: Vec<&mut [f64]> = Vec::with_capacity(blocks);
    {
        let mut rest = body;
        for b in 0..blocks {
            let len = base + usize::from(b < extra);
            let (head, tail) = rest.split_at_mut(len);
            slices.push(head);
            rest = tail;
        }
    }

    // Phase 1: local inclusive scans, one task per block.
    std::thread::scope(|scope| {
        for slice in slices.iter_mut() {
            scope.spawn(move || {
                let mut acc = 0.0;
                for v in slice.iter_mut() {
                    acc += *v;
                    *v = acc;
                }
            });
        }
    });

    // Phase 2: exclusive scan of block totals.
    let mut offsets = Vec::with_capacity(blocks);
    let mut acc = 0.0;
    for slice in slices.iter() {
        offsets.push(acc);
        acc += *slice.last().unwrap();
    }

    // Phase 3: offset add. Block 0 has offset zero and is left untouched so
    // workers == 1 stays bitwise identical to the sequential pass.
    std::thread::scope(|scope| {
        for (slice, offset) in slices.iter_mut().zip(offsets).skip(1) {
            scope.spawn(move || {
                for v in slice.iter_mut() {
                    *v += offset;
                }
            });
        }
    });

    Ok(CumulativeIntegral { dt, rule, partials })
}

/// Dispatches to the configured backend.
pub fn cumsum(
    samples: &[f64],
    dt: f64,
    rule: Rule,
    backend: Backend,
) -> Result<CumulativeIntegral> {
    match backend {
        Backend::Sequential => cumsum_sequential(samples, dt, rule),
        Backend::Scan { workers } => cumsum_scan(samples, dt, rule, workers),
    }
}

/// Result of [`exp_kernel_cumulative_with_a`]: the cumulative integral `a` of
/// the decay-rate samples and the kernel integrals `v`.
#[derive(Debug, Clone)]
pub struct ExpKernel {
    /// `a[i]` approximates the integral of alpha from the grid start to point `i`.
    pub a: Vec<f64>,
    /// `v[i]` approximates `int_{t0}^{t_i} exp(a(t_i) - a(tau)) w(tau) dtau`.
    pub v: Vec<f64>,
}

/// Exponential-kernel cumulative integral, factored as
/// `exp(a(t_i)) * cumsum(exp(-a(tau)) w(tau))` with the largest exponent
/// subtracted before exponentiation to guard against overflow.
pub fn exp_kernel_cumulative_with_a(
    alpha_samples: &[f64],
    w_samples: &[f64],
    dt: f64,
    rule: Rule,
    backend: Backend,
) -> Result<ExpKernel> {
    if alpha_samples.len() != w_samples.len() {
        return Err(Error::Grid(format!(
            "alpha and w sample counts differ: {} vs {}",
            alpha_samples.len(),
            w_samples.len()
        )));
    }
    let a = cumsum(alpha_samples, dt, rule, backend)?.partials;
    // Largest exponent appearing inside the cumulative sum.
    let shift = a.iter().fold(f64::NEG_INFINITY, |m, &ai| m.max(-ai));
    let mut u: Vec<f64> = Vec::with_capacity(a.len());
    for (i, (&ai, &wi)) in a.iter().zip(w_samples).enumerate() {
        let e = (-ai - shift).exp();
        if !e.is_finite() {
            return Err(Error::Numeric {
                index: Some(i),
                msg: format!("exp kernel weight overflowed (exponent {})", -ai - shift),
            });
        }
        u.push(e * wi);
    }
    let s = cumsum(&u, dt, rule, backend)?.partials;
    let mut v = Vec::with_capacity(a.len());
    for (i, (&ai, &si)) in a.iter().zip(&s).enumerate() {
        let vi = (ai + shift).exp() * si;
        if !vi.is_finite() {
            return Err(Error::Numeric {
                index: Some(i),
                msg: format!("exp kernel integral overflowed (exponent {})", ai + shift),
            });
        }
        v.push(vi);
    }
    Ok(ExpKernel { a, v })
}

/// Kernel integrals only; see [`exp_kernel_cumulative_with_a`].
pub fn exp_kernel_cumulative(
    alpha_samples: &[f64],
    w_samples: &[f64],
    dt: f64,
    rule: Rule,
) -> Result<Vec<f64>> {
    exp_kernel_cumulative_with_a(alpha_samples, w_samples, dt, rule, Backend::Sequential)
        .map(|k| k.v)
}
