//! Uniformly sampled periodic trajectories: ingestion, periodic extension,
//! interpolated evaluation, and period detection.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Relative tolerance on `|values[0] - values[n-1]|` against the signal range.
pub const DEFAULT_PERIODICITY_TOL: f64 = 1e-2;

/// Maximum relative jitter of the time column accepted by [`load_csv`].
pub const GRID_JITTER_TOL: f64 = 1e-6;

/// A uniform time grid `t_i = t0 + i * dt`, `i in [0, n_points)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub t0: f64,
    pub dt: f64,
    pub n_points: usize,
}

impl UniformGrid {
    pub fn new(t0: f64, dt: f64, n_points: usize) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::Grid(format!(
                "dt must be positive and finite, got {dt}"
            )));
        }
        if n_points < 2 {
            return Err(Error::Grid(format!(
                "need at least 2 grid points, got {n_points}"
            )));
        }
        Ok(Self { t0, dt, n_points })
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Time span `(n_points - 1) * dt`.
    pub fn span(&self) -> f64 {
        (self.n_points - 1) as f64 * self.dt
    }
}

/// A periodic scalar trajectory on a uniform grid with declared period.
///
/// Immutable after construction; shared freely across evaluation workers.
#[derive(Debug, Clone)]
pub struct SampledSignal {
    grid: UniformGrid,
    values: Vec<f64>,
    period: f64,
}

impl SampledSignal {
    /// Builds a signal with the default periodicity-consistency tolerance.
    pub fn new(grid: UniformGrid, values: Vec<f64>, period: f64) -> Result<Self> {
        Self::with_tolerance(grid, values, period, DEFAULT_PERIODICITY_TOL)
    }

    /// Builds a signal, checking that the grid spans exactly one period (up to
    /// one step) and that the first and last samples agree within `rel_tol`
    /// relative to the signal range.
    pub fn with_tolerance(
        grid: UniformGrid,
        values: Vec<f64>,
        period: f64,
        rel_tol: f64,
    ) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::Signal(format!(
                "value count {} does not match grid point count {}",
                values.len(),
                grid.n_points
            )));
        }
        if !period.is_finite() || period <= 0.0 {
            return Err(Error::Signal(format!(
                "period must be positive, got {period}"
            )));
        }
        if (period - grid.span()).abs() > grid.dt * (1.0 + 1e-9) {
            return Err(Error::Signal(format!(
                "declared period {} differs from grid span {} by more than one step",
                period,
                grid.span()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Signal("signal contains non-finite samples".into()));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = (hi - lo).max(f64::MIN_POSITIVE);
        let wrap_gap = (values[0] - values[grid.n_points - 1]).abs();
        if wrap_gap > rel_tol * range {
            return Err(Error::Signal(format!(
                "endpoint mismatch {wrap_gap:.3e} exceeds {rel_tol:.1e} of signal range {range:.3e}; \
                 the data does not span one period"
            )));
        }
        Ok(Self {
            grid,
            values,
            period,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.grid.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Evaluates the periodically extended signal at an arbitrary time by
    /// linear interpolation. `t` is wrapped into `[t0, t0 + period)`; the
    /// endpoint sample is the start of the next period.
    pub fn eval_periodic(&self, t: f64) -> f64 {
        let s = (t - self.grid.t0).rem_euclid(self.period);
        let x = s / self.grid.dt;
        let i = x.floor() as usize;
        let last = self.grid.n_points - 1;
        if i >= last {
            // s landed in the partial cell between span and period (when the
            // declared period exceeds the span by up to one dt), or exactly on
            // the final sample: interpolate toward the wrap-around value.
            let frac = (s - last as f64 * self.grid.dt) / self.grid.dt;
            let a = self.values[last];
            let b = self.values[0];
            return a + frac.clamp(0.0, 1.0) * (b - a);
        }
        let frac = x - i as f64;
        let a = self.values[i];
        let b = self.values[i + 1];
        a + frac * (b - a)
    }

    /// Lipschitz bound of the interpolant: max adjacent difference over dt.
    pub fn lipschitz_bound(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0_f64, f64::max)
            / self.grid.dt
    }
}

/// Loads a two-column `t,y` CSV. A single header line is skipped when its
/// first token is not numeric. The time column must be strictly increasing
/// and uniform; `dt` is the median spacing and the declared period is the
/// grid span.
pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<SampledSignal> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut ts: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split(',');
        let t_tok = parts.next().unwrap_or("").trim();
        let y_tok = parts.next().map(str::trim);
        let t: f64 = match t_tok.parse() {
            Ok(v) => v,
            Err(_) if idx == 0 => continue, // header line
            Err(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("cannot parse time value {t_tok:?}"),
                })
            }
        };
        let y_tok = y_tok.ok_or_else(|| Error::Parse {
            line: lineno,
            msg: "expected two comma-separated columns".into(),
        })?;
        let y: f64 = y_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("cannot parse value {y_tok:?}"),
        })?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected exactly two columns".into(),
            });
        }
        ts.push(t);
        ys.push(y);
    }
    if ts.len() < 2 {
        return Err(Error::Grid(format!(
            "need at least 2 samples, got {}",
            ts.len()
        )));
    }
    let mut gaps: Vec<f64> = ts.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.iter().any(|&g| g <= 0.0) {
        return Err(Error::Grid(
            "time column must be strictly increasing".into(),
        ));
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = gaps[gaps.len() / 2];
    let worst = gaps.iter().map(|g| (g - dt).abs()).fold(0.0_f64, f64::max);
    if worst > GRID_JITTER_TOL * dt {
        return Err(Error::Grid(format!(
            "non-uniform grid: max spacing deviation {worst:.3e} exceeds {GRID_JITTER_TOL:.1e} of dt {dt:.6e}"
        )));
    }
    let grid = UniformGrid::new(ts[0], dt, ts.len())?;
    SampledSignal::new(grid, ys, grid.span())
}

/// Writes a `t,y` CSV with 17 significant digits so values round-trip.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &str, ts: &[f64], ys: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(f, "{header}")?;
    for (t, y) in ts.iter().zip(ys) {
        writeln!(f, "{},{}", fmt_full(*t), fmt_full(*y))?;
    }
    Ok(())
}

/// Formats a double with 17 significant digits.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Upward crossing times of `level` in a sampled trajectory, refined by
/// linear interpolation.
pub fn upward_crossings(ts: &[f64], ys: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..ys.len() {
        if ys[i - 1] < level && ys[i] >= level {
            let frac = (level - ys[i - 1]) / (ys[i] - ys[i - 1]);
            out.push(ts[i - 1] + frac * (ts[i] - ts[i - 1]));
        }
    }
    out
}

/// Detected period of an oscillatory trajectory.
#[derive(Debug, Clone)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Upward crossing times of the detection level.
    pub crossings: Vec<f64>,
    pub level: f64,
}

/// Estimates the oscillation period from upward crossings of the signal mean
/// (the phase-anchor convention used when trimming simulated trajectories).
pub fn detect_period(ts: &[f64], ys: &[f64]) -> Result<PeriodEstimate> {
    if ts.len() != ys.len() || ts.len() < 3 {
        return Err(Error::Signal(
            "period detection needs at least 3 samples".into(),
        ));
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let crossings = upward_crossings(ts, ys, mean);
    if crossings.len() < 2 {
        return Err(Error::Signal(format!(
            "trajectory does not look periodic: found {} upward mean-crossings, need at least 2 \
             (advise a longer horizon or burn-in)",
            crossings.len()
        )));
    }
    let diffs: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sorted = diffs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let period = sorted[sorted.len() / 2];
    let worst = diffs
        .iter()
        .map(|d| (d - period).abs())
        .fold(0.0_f64, f64::max);
    if worst > 0.05 * period {
        return Err(Error::Signal(format!(
            "inconsistent crossing intervals (spread {worst:.3e} vs period {period:.3e}); \
             the trajectory is not yet periodic — advise a longer burn-in"
        )));
    }
    Ok(PeriodEstimate {
        period,
        crossings,
        level: mean,
    })
}
