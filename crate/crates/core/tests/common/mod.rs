//! Shared dataset and problem fixtures. Built once per test binary.

#![allow(dead_code)]

use cyclefit::estimation::EstimationProblem;
use cyclefit::models::{self, Anchor, ModelKind, PeriodicDataset};
use cyclefit::observer::ObserverGains;
use cyclefit::ode::Method;
use cyclefit::quadrature::{Backend, Rule};
use std::sync::{Arc, OnceLock};

pub const PP_TRUE_LAMBDA: [f64; 5] = [1.0, 1.3, 1.0, 3.0, 0.1];
pub const ML_TRUE_LAMBDA: [f64; 7] = [-1.0, 15.0, -10.0, 14.5, 3.0, -1.1, -2.0];
pub const ML_TRUE_THETA: [f64; 2] = [-0.5, -15.0];

/// Predator-prey: one period from the on-cycle initial condition, dt = 1e-3,
/// declared period 34.05 (34051 grid points).
pub fn pp_dataset() -> &'static PeriodicDataset {
    static DS: OnceLock<PeriodicDataset> = OnceLock::new();
    DS.get_or_init(|| {
        let kind = ModelKind::PredatorPrey;
        let traj = kind
            .simulate(
                &kind.default_params(),
                kind.default_ic(),
                1e-3,
                40_000,
                Method::Rk4,
            )
            .expect("predator-prey simulation");
        models::trim_to_period(
            &traj,
            Anchor::Start {
                period: Some(34.05),
            },
        )
        .expect("trim")
    })
}

fn pp_base() -> &'static EstimationProblem {
    static P: OnceLock<EstimationProblem> = OnceLock::new();
    P.get_or_init(|| {
        let kind = ModelKind::PredatorPrey;
        EstimationProblem::build(
            kind.system(),
            kind.search_space(),
            ObserverGains::scalar(-1.0),
            Arc::new(pp_dataset().signal.clone()),
            Method::Dopri5,
            2e-4,
            Rule::Trapezoid,
            Backend::Sequential,
            1,
            kind.default_box(),
        )
        .expect("predator-prey problem")
    })
}

/// The fundamental matrix does not depend on the quadrature rule, so reuse
/// one build across rules.
pub fn pp_problem(rule: Rule) -> EstimationProblem {
    let mut p = pp_base().clone();
    p.rule = rule;
    p
}

/// Morris-Lecar at the dataset resolution used for estimation: simulation
/// and observer integration step 2e-4, burn-in 300 time units, objective
/// subsampled every 200 points (0.04 spacing).
pub fn ml_dataset() -> &'static PeriodicDataset {
    static DS: OnceLock<PeriodicDataset> = OnceLock::new();
    DS.get_or_init(|| {
        let kind = ModelKind::MorrisLecar;
        let dt = 2e-4;
        let n = (400.0_f64 / dt).ceil() as usize;
        let traj = kind
            .simulate(
                &kind.default_params(),
                kind.default_ic(),
                dt,
                n,
                Method::Rk4,
            )
            .expect("morris-lecar simulation");
        models::trim_to_period(&traj, Anchor::MeanCrossing { burn_in: 300.0 }).expect("trim")
    })
}

pub fn ml_problem() -> EstimationProblem {
    static P: OnceLock<EstimationProblem> = OnceLock::new();
    P.get_or_init(|| {
        let kind = ModelKind::MorrisLecar;
        EstimationProblem::build(
            kind.system(),
            kind.search_space(),
            ObserverGains::scalar(-1.0),
            Arc::new(ml_dataset().signal.clone()),
            Method::Dopri5,
            2e-4,
            Rule::Trapezoid,
            Backend::Sequential,
            200,
            kind.default_box(),
        )
        .expect("morris-lecar problem")
    })
    .clone()
}

/// Cheaper Morris-Lecar fixture (dt = 1e-3) for cross-module checks that do
/// not need the full estimation resolution.
pub fn ml_dataset_light() -> &'static PeriodicDataset {
    static DS: OnceLock<PeriodicDataset> = OnceLock::new();
    DS.get_or_init(|| {
        let kind = ModelKind::MorrisLecar;
        let dt = 1e-3;
        let n = (400.0_f64 / dt).ceil() as usize;
        let traj = kind
            .simulate(
                &kind.default_params(),
                kind.default_ic(),
                dt,
                n,
                Method::Rk4,
            )
            .expect("morris-lecar simulation");
        models::trim_to_period(&traj, Anchor::MeanCrossing { burn_in: 300.0 }).expect("trim")
    })
}

pub fn ml_problem_light() -> EstimationProblem {
    static P: OnceLock<EstimationProblem> = OnceLock::new();
    P.get_or_init(|| {
        let kind = ModelKind::MorrisLecar;
        EstimationProblem::build(
            kind.system(),
            kind.search_space(),
            ObserverGains::scalar(-1.0),
            Arc::new(ml_dataset_light().signal.clone()),
            Method::Dopri5,
            1e-3,
            Rule::Trapezoid,
            Backend::Sequential,
            40,
            kind.default_box(),
        )
        .expect("morris-lecar light problem")
    })
    .clone()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for x in v {
        acc += x * x;
        n += 1;
    }
    (acc / n.max(1) as f64).sqrt()
}
