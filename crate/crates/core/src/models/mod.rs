//! Reference systems: full simulators for data generation plus their
//! reduced-form contracts, registered by name for the CLI.

pub mod morris_lecar;
pub mod predator_prey;

use crate::canonical::{AdmissibleBox, CanonicalSystem, IdentitySearch, SearchSpace};
use crate::error::{Error, Result};
use crate::ode::Method;
use crate::signal::{self, SampledSignal, UniformGrid};
use std::sync::Arc;

/// A fixed-step simulation output: the measured component and the companion
/// state (predator density or recovery variable), on `t_i = i * dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub primary: Vec<f64>,
    pub secondary: Vec<f64>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.primary.len())
            .map(|i| i as f64 * self.dt)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.primary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primary.is_empty()
    }
}

/// How to pick the one-period window out of a simulated trajectory.
#[derive(Debug, Clone, Copy)]
pub enum Anchor {
    /// Keep the initial point as the window start (the initial condition is
    /// already on the cycle). With `period: None` the period is detected
    /// from the first upward return through the starting value.
    Start { period: Option<f64> },
    /// Discard `burn_in` time units, then anchor at the first upward
    /// crossing of the signal mean and detect the period from subsequent
    /// crossings.
    MeanCrossing { burn_in: f64 },
}

/// One period of simulated data, grid-aligned and re-zeroed to `t0 = 0`.
#[derive(Debug, Clone)]
pub struct PeriodicDataset {
    pub signal: SampledSignal,
    /// Companion state over the same window.
    pub secondary: Vec<f64>,
    /// Index of the window start in the source trajectory.
    pub anchor_index: usize,
    /// Detected (or declared) period before grid rounding.
    pub raw_period: f64,
}

/// Extracts one period from a simulated trajectory. The window length is the
/// period rounded to a whole number of grid steps; the dataset time origin
/// is reset to zero.
pub fn trim_to_period(traj: &Trajectory, anchor: Anchor) -> Result<PeriodicDataset> {
    let dt = traj.dt;
    let ts = traj.times();
    let (anchor_index, raw_period) = match anchor {
        Anchor::Start {
            period: Some(period),
        } => (0, period),
        Anchor::Start { period: None } => {
            let crossings = signal::upward_crossings(&ts, &traj.primary, traj.primary[0]);
            let t = *crossings.first().ok_or_else(|| {
                Error::Signal(
                    "no return through the starting value; advise a longer horizon".into(),
                )
            })?;
            (0, t)
        }
        Anchor::MeanCrossing { burn_in } => {
            let skip = (burn_in / dt).ceil() as usize;
            if skip + 3 >= traj.len() {
                return Err(Error::Signal(
                    "burn-in longer than the simulated horizon".into(),
                ));
            }
            let est = signal::detect_period(&ts[skip..], &traj.primary[skip..])?;
            let anchor_t = est.crossings[0];
            ((anchor_t / dt).ceil() as usize, est.period)
        }
    };
    let n_period = (raw_period / dt).round() as usize;
    if n_period < 2 {
        return Err(Error::Signal(format!(
            "period {raw_period} spans fewer than 2 grid steps"
        )));
    }
    let end = anchor_index + n_period;
    if end >= traj.len() {
        return Err(Error::Signal(
            "trajectory too short for one full period after the anchor; advise a longer horizon"
                .into(),
        ));
    }
    let n_points = n_period + 1;
    let grid = UniformGrid::new(0.0, dt, n_points)?;
    let values = traj.primary[anchor_index..=end].to_vec();
    let signal = SampledSignal::new(grid, values, grid.span()).map_err(|e| {
        Error::Signal(format!(
            "{e}; the trajectory may not be periodic yet — advise a longer burn-in"
        ))
    })?;
    Ok(PeriodicDataset {
        signal,
        secondary: traj.secondary[anchor_index..=end].to_vec(),
        anchor_index,
        raw_period,
    })
}

/// Registered reference models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    PredatorPrey,
    MorrisLecar,
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "predator_prey" => Ok(ModelKind::PredatorPrey),
            "morris_lecar" => Ok(ModelKind::MorrisLecar),
            other => Err(Error::Usage(format!(
                "unknown model {other:?} (registered: predator_prey, morris_lecar)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::PredatorPrey => "predator_prey",
            ModelKind::MorrisLecar => "morris_lecar",
        }
    }

    pub fn system(&self) -> Arc<dyn CanonicalSystem> {
        match self {
            ModelKind::PredatorPrey => Arc::new(predator_prey::PredatorPreyReduced),
            ModelKind::MorrisLecar => Arc::new(morris_lecar::MorrisLecarReduced),
        }
    }

    pub fn search_space(&self) -> Arc<dyn SearchSpace> {
        match self {
            ModelKind::PredatorPrey => Arc::new(IdentitySearch {
                coord_names: vec!["p1", "p2", "p4", "p5", "p6"],
            }),
            ModelKind::MorrisLecar => Arc::new(morris_lecar::RatioSearch),
        }
    }

    /// Default admissible box, in search coordinates.
    pub fn default_box(&self) -> AdmissibleBox {
        match self {
            ModelKind::PredatorPrey => AdmissibleBox::new(
                vec![1e-3, 1e-3, 1e-3, 1e-2, 1e-3],
                vec![10.0, 10.0, 10.0, 10.0, 2.0],
            )
            .unwrap(),
            ModelKind::MorrisLecar => AdmissibleBox::new(
                vec![-1.0, 1e-3, -50.0, 0.5, 0.1, -10.0, -10.0],
                vec![1.0, 1.0, 50.0, 50.0, 20.0, -1e-3, -1e-3],
            )
            .unwrap(),
        }
    }

    /// Full physical parameter vector restored from defaults then overlaid
    /// with `overrides` (same packing as [`Self::simulate`] expects).
    pub fn default_params(&self) -> Vec<f64> {
        match self {
            ModelKind::PredatorPrey => {
                let p = predator_prey::PredatorPreyParams::default();
                vec![p.p1, p.p2, p.p3, p.p4, p.p5, p.p6]
            }
            ModelKind::MorrisLecar => {
                let p = morris_lecar::MorrisLecarParams::default();
                vec![
                    p.v1, p.v2, p.v3, p.v4, p.tau0, p.g_ca, p.g_k, p.g_l, p.i_app,
                ]
            }
        }
    }

    /// Nonlinear block (physical packing) extracted from a full parameter
    /// vector.
    pub fn lambda_from_params(&self, params: &[f64]) -> Result<Vec<f64>> {
        match self {
            ModelKind::PredatorPrey => {
                Ok(predator_prey::PredatorPreyParams::from_slice(params)?.lambda())
            }
            ModelKind::MorrisLecar => {
                Ok(morris_lecar::MorrisLecarParams::from_slice(params)?.lambda())
            }
        }
    }

    pub fn default_ic(&self) -> (f64, f64) {
        match self {
            ModelKind::PredatorPrey => predator_prey::DEFAULT_IC,
            ModelKind::MorrisLecar => (0.0, 0.1),
        }
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            ModelKind::PredatorPrey => 0.001,
            ModelKind::MorrisLecar => 2e-4,
        }
    }

    /// Residual subsampling stride for the least-squares objective.
    pub fn default_stride(&self) -> usize {
        match self {
            ModelKind::PredatorPrey => 1,
            // 0.04 objective spacing over the 2e-4 dataset grid.
            ModelKind::MorrisLecar => 200,
        }
    }

    pub fn default_burn_in(&self) -> f64 {
        match self {
            ModelKind::PredatorPrey => 0.0,
            ModelKind::MorrisLecar => 300.0,
        }
    }

    pub fn default_t_end(&self) -> f64 {
        match self {
            ModelKind::PredatorPrey => 40.0,
            ModelKind::MorrisLecar => 400.0,
        }
    }

    pub fn default_anchor(&self) -> Anchor {
        match self {
            ModelKind::PredatorPrey => Anchor::Start {
                period: Some(predator_prey::DEFAULT_PERIOD),
            },
            ModelKind::MorrisLecar => Anchor::MeanCrossing {
                burn_in: self.default_burn_in(),
            },
        }
    }

    /// Fixed-step simulation with the model's parameter packing.
    pub fn simulate(
        &self,
        params: &[f64],
        ic: (f64, f64),
        dt: f64,
        n_steps: usize,
        method: Method,
    ) -> Result<Trajectory> {
        match self {
            ModelKind::PredatorPrey => {
                let p = predator_prey::PredatorPreyParams::from_slice(params)?;
                predator_prey::simulate(&p, ic.0, ic.1, dt, n_steps, method)
            }
            ModelKind::MorrisLecar => {
                let p = morris_lecar::MorrisLecarParams::from_slice(params)?;
                morris_lecar::simulate(&p, ic.0, ic.1, dt, n_steps, method)
            }
        }
    }
}
