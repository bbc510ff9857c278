//! Cross-module oracles: the representation round trip on both reference
//! models, fundamental-matrix semigroup consistency, backend invariance, and
//! the closed-form auxiliary solution against direct integration.

mod common;

use common::*;
use cyclefit::canonical;
use cyclefit::models::{self, morris_lecar, Anchor, ModelKind};
use cyclefit::observer;
use cyclefit::ode::{Method, Stepper};
use cyclefit::optim::{self, BfgsConfig, NelderMeadConfig};
use cyclefit::quadrature::{Backend, Rule};
use cyclefit::signal::{load_csv, write_csv};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;

#[test]
fn semigroup_spot_check() {
    // Phi(t2, t0) = Phi_restart(t2, t1) * Phi(t1, t0) for t1 on the grid.
    let p = ml_problem_light();
    let (i1, i2) = (2000usize, 5000usize);
    let seg = observer::compute_transition_segment(
        p.system.as_ref(),
        &p.gains,
        &p.signal,
        Method::Dopri5,
        1e-3,
        i1,
        i2 - i1 + 1,
    )
    .unwrap();
    let composed = seg.last().unwrap() * p.phi.mat(i1);
    let direct = p.phi.mat(i2);
    let scale = direct.iter().map(|v| v.abs()).fold(0.0_f64, f64::max);
    let diff = (&composed - direct)
        .iter()
        .map(|v| v.abs())
        .fold(0.0_f64, f64::max);
    assert!(diff <= 1e-6 * (1.0 + scale), "semigroup residual {diff}");
}

#[test]
fn phi_normalization_and_stability() {
    for p in [pp_problem(Rule::Trapezoid), ml_problem_light()] {
        let id = p.phi.mat(0);
        for i in 0..p.phi.dim() {
            for j in 0..p.phi.dim() {
                assert_eq!(id[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        let rho = p.phi.period_spectral_radius();
        assert!(rho < 1.0, "spectral radius {rho}");
    }
}

#[test]
fn representation_round_trip_predator_prey() {
    let p = pp_problem(Rule::RightRectangle);
    let search = p.search.from_physical(&PP_TRUE_LAMBDA);
    let rep = p.representation(&search).unwrap();
    let err = max_abs_diff(&rep.yhat, p.signal.values());
    assert!(err <= 5e-4, "max |yhat - y| = {err}");
    // n = 1, r = 0: the fixed point is the initial state.
    let (x0, theta) = observer::recover_x0_theta(rep.r.as_slice(), 1);
    assert!(theta.is_empty());
    let rel = (x0[0] - 0.0053).abs() / 0.0053;
    assert!(rel <= 0.01, "x0 recovery off by {rel}");
}

#[test]
fn representation_round_trip_morris_lecar() {
    let p = ml_problem_light();
    let search = p.search.from_physical(&ML_TRUE_LAMBDA);
    let rep = p.representation(&search).unwrap();
    let y = p.signal.values();
    let ratio = rms(rep.yhat.iter().zip(y).map(|(a, b)| a - b)) / rms(y.iter().copied());
    assert!(ratio <= 1e-2, "rms ratio {ratio}");
    let (x0, theta) = observer::recover_x0_theta(rep.r.as_slice(), 1);
    assert!((x0[0] - y[0]).abs() / y[0].abs() <= 0.01);
    for (got, want) in theta.iter().zip(&ML_TRUE_THETA) {
        let rel = (got - want).abs() / want.abs();
        assert!(rel <= 0.01, "theta recovery {got} vs {want} (rel {rel})");
    }
    let current = morris_lecar::injected_current(&theta);
    assert!((current - 10.0).abs() / 10.0 <= 0.01, "current {current}");
}

#[test]
fn periodic_fixed_point_residual() {
    for (p, lambda) in [
        (pp_problem(Rule::Trapezoid), PP_TRUE_LAMBDA.to_vec()),
        (ml_problem_light(), ML_TRUE_LAMBDA.to_vec()),
    ] {
        let fc = observer::forcing_cumulative(
            p.system.as_ref(),
            &p.gains,
            &p.phi,
            &p.signal,
            &lambda,
            p.rule,
            Backend::Sequential,
        )
        .unwrap();
        let r = observer::compute_r(
            p.system.as_ref(),
            &p.gains,
            &p.phi,
            &p.signal,
            &lambda,
            p.rule,
            Backend::Sequential,
        )
        .unwrap();
        let wrapped = p.phi.phi_period() * (&r + fc.last());
        let resid = (&wrapped - &r).norm();
        assert!(
            resid <= 1e-6 * (1.0 + r.norm()),
            "fixed-point residual {resid}"
        );
    }
}

#[test]
fn compute_r_backend_invariance() {
    let p = ml_problem_light();
    let seq = observer::compute_r(
        p.system.as_ref(),
        &p.gains,
        &p.phi,
        &p.signal,
        &ML_TRUE_LAMBDA,
        p.rule,
        Backend::Sequential,
    )
    .unwrap();
    for workers in [2usize, 8, 64] {
        let scan = observer::compute_r(
            p.system.as_ref(),
            &p.gains,
            &p.phi,
            &p.signal,
            &ML_TRUE_LAMBDA,
            p.rule,
            Backend::Scan { workers },
        )
        .unwrap();
        for (a, b) in seq.iter().zip(scan.iter()) {
            assert!(
                (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                "workers {workers}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn ml_q_matches_directly_integrated_recovery_equation() {
    // Integrate q' = (w_inf(y) - q)/tau(y) with y from the interpolated
    // signal, starting at the periodic initial value.
    let p = ml_problem_light();
    let sys = p.system.as_ref();
    let q0 = canonical::q0_periodic(sys, &p.signal, &ML_TRUE_LAMBDA, p.rule).unwrap();
    let q = canonical::q_trajectory(sys, &p.signal, &ML_TRUE_LAMBDA, &q0, p.rule).unwrap();

    let params = morris_lecar::MorrisLecarParams::default();
    let dt = p.signal.grid().dt;
    let mut stepper = Stepper::new(Method::Rk4, 1);
    let signal = p.signal.clone();
    let mut rhs = |t: f64, s: &[f64], ds: &mut [f64]| {
        let y = signal.eval_periodic(t);
        ds[0] = (params.w_inf(y) - s[0]) / params.tau(y);
    };
    let mut state = [q0[0]];
    let mut max_err = 0.0_f64;
    for (j, &q_j) in q[0].iter().enumerate().skip(1) {
        stepper.step(&mut rhs, (j - 1) as f64 * dt, dt, &mut state);
        max_err = max_err.max((state[0] - q_j).abs());
    }
    assert!(max_err <= 1e-3, "q oracle deviation {max_err}");
}

#[test]
fn ml_q0_matches_simulated_recovery_variable() {
    let p = ml_problem_light();
    let ds = ml_dataset_light();
    let q0 = canonical::q0_periodic(p.system.as_ref(), &p.signal, &ML_TRUE_LAMBDA, p.rule).unwrap();
    assert!(
        (q0[0] - ds.secondary[0]).abs() <= 1e-3,
        "q0 {} vs simulated {}",
        q0[0],
        ds.secondary[0]
    );
}

#[test]
fn pp_q0_matches_initial_condition_transform() {
    // q(t0) = x0 + (p3/p5) z0 at the reference parameters.
    let p = pp_problem(Rule::Trapezoid);
    let q0 = canonical::q0_periodic(p.system.as_ref(), &p.signal, &PP_TRUE_LAMBDA, p.rule).unwrap();
    let expected = 0.0053 + (1.0 / 3.0) * 0.2536;
    assert!(
        (q0[0] - expected).abs() <= 1e-4,
        "q0 {} vs {expected}",
        q0[0]
    );
}

#[test]
fn pp_q_periodicity_within_grid_error() {
    let p = pp_problem(Rule::Trapezoid);
    let q0 = canonical::q0_periodic(p.system.as_ref(), &p.signal, &PP_TRUE_LAMBDA, p.rule).unwrap();
    let q = canonical::q_trajectory(p.system.as_ref(), &p.signal, &PP_TRUE_LAMBDA, &q0, p.rule)
        .unwrap();
    let n = p.signal.len();
    assert!((q[0][n - 1] - q[0][0]).abs() <= 10.0 * p.signal.grid().dt);
}

#[test]
fn ml_excitation_condition_satisfied_on_measured_data() {
    let p = ml_problem_light();
    let pe = observer::pe_check(p.system.as_ref(), &p.signal, 1e-8);
    assert!(pe.satisfied, "min Gram eigenvalue {}", pe.min_eigenvalue);
    assert!(pe.min_eigenvalue > 1.0);
}

#[test]
fn bench_report_is_seed_deterministic() {
    let p = pp_problem(Rule::Trapezoid);
    let a = cyclefit::bench::bench_report(&p, 3, 5, 1, 1).unwrap();
    let b = cyclefit::bench::bench_report(&p, 3, 5, 1, 1).unwrap();
    assert_eq!(a.candidates, b.candidates);
    for (x, y) in a.seq_values.iter().zip(&b.seq_values) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn objective_optimum_sanity() {
    // The true parameters score below 100 random admissible draws.
    let p = pp_problem(Rule::Trapezoid);
    let truth = p.objective(&PP_TRUE_LAMBDA);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let draw = p.admissible.sample(&mut rng);
        assert!(truth <= p.objective(&draw));
    }
}

#[test]
fn domain_errors_surface_with_index() {
    let p = pp_problem(Rule::Trapezoid);
    // Put the pole p4 + x = 0 exactly on a grid sample.
    let j = 1000;
    let bad = [1.0, 1.3, -p.signal.values()[j], 3.0, 0.1];
    match p.objective_checked(&bad) {
        Err(cyclefit::Error::Domain { index, .. }) => assert_eq!(index, j),
        other => panic!("expected a domain error, got {other:?}"),
    }
    // The penalized objective swallows it.
    let v = p.objective(&bad);
    assert!(v >= cyclefit::estimation::PENALTY);

    // A vanishing carrying capacity blows up the auxiliary forcing first,
    // so it surfaces as a numeric (or domain) rejection either way.
    let degenerate = [1.0, 0.0, 1.0, 3.0, 0.1];
    assert!(matches!(
        p.objective_checked(&degenerate),
        Err(cyclefit::Error::Domain { .. } | cyclefit::Error::Numeric { .. })
    ));
}

#[test]
fn optimizers_are_deterministic() {
    let p = pp_problem(Rule::Trapezoid);
    let start = [0.9, 1.2, 1.1, 2.8, 0.12];
    let cfg = NelderMeadConfig {
        max_iters: 60,
        ..Default::default()
    };
    let a = optim::nelder_mead(|x| p.objective(x), &start, &cfg);
    let b = optim::nelder_mead(|x| p.objective(x), &start, &cfg);
    assert_eq!(a.lambda_hat, b.lambda_hat);
    assert_eq!(a.objective_history, b.objective_history);

    let bc = BfgsConfig {
        max_iters: 8,
        ..Default::default()
    };
    let a = optim::bfgs(|x| p.objective(x), &start, &bc);
    let b = optim::bfgs(|x| p.objective(x), &start, &bc);
    assert_eq!(a.lambda_hat, b.lambda_hat);
    assert_eq!(a.best_value.to_bits(), b.best_value.to_bits());
}

#[test]
fn nonperiodic_transient_is_rejected() {
    // Trimming straight out of the transient must fail with advice rather
    // than producing a bogus dataset.
    let kind = ModelKind::MorrisLecar;
    let traj = kind
        .simulate(
            &kind.default_params(),
            (30.0, 0.9),
            1e-3,
            20_000,
            Method::Rk4,
        )
        .unwrap();
    let res = models::trim_to_period(&traj, Anchor::MeanCrossing { burn_in: 0.0 });
    assert!(res.is_err());
}

#[test]
fn batch_backends_agree_on_small_batch() {
    let p = pp_problem(Rule::Trapezoid);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut cands: Vec<Vec<f64>> = (0..8).map(|_| p.admissible.sample(&mut rng)).collect();
    cands.push(PP_TRUE_LAMBDA.to_vec());
    let seq = cyclefit::bench::batch_evaluate(&p, &cands, cyclefit::bench::BenchBackend::Seq);
    for backend in [
        cyclefit::bench::BenchBackend::Scan { workers: 4 },
        cyclefit::bench::BenchBackend::Threads { workers: 3 },
    ] {
        let other = cyclefit::bench::batch_evaluate(&p, &cands, backend);
        let disc = cyclefit::bench::max_relative_discrepancy(&seq.values, &other.values);
        assert!(disc <= 1e-9, "{backend:?} discrepancy {disc}");
    }
}

#[test]
fn representation_unavailable_when_period_map_singular() {
    let p = ml_problem_light();
    // A regressor that is identically zero decouples the lower block of the
    // error dynamics into a pure integrator: Phi_T gains a unit eigenvalue
    // and I - Phi_T is singular, so the periodic representation must be
    // refused.
    struct ZeroPhiMl;
    impl cyclefit::canonical::CanonicalSystem for ZeroPhiMl {
        fn dims(&self) -> cyclefit::canonical::SystemDims {
            cyclefit::canonical::SystemDims {
                n: 1,
                r: 1,
                k_lambda: 1,
                q_dim: 0,
            }
        }
        fn phi(&self, _y: f64, _t: f64, out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn g(
            &self,
            _y: f64,
            _l: &[f64],
            _q: &[f64],
            _t: f64,
            out: &mut [f64],
        ) -> std::result::Result<(), String> {
            out[0] = 0.0;
            Ok(())
        }
        fn q_alpha(&self, _i: usize, _y: f64, _l: &[f64], _t: f64) -> f64 {
            0.0
        }
        fn q_w(&self, _i: usize, _y: f64, _l: &[f64], _t: f64) -> f64 {
            0.0
        }
    }
    let sys = ZeroPhiMl;
    let gains = cyclefit::observer::ObserverGains::scalar(-1.0);
    let phi =
        observer::compute_fundamental_matrix(&sys, &gains, &p.signal, Method::Rk4, 1e-3).unwrap();
    let err = observer::compute_r(
        &sys,
        &gains,
        &phi,
        &p.signal,
        &[0.0],
        Rule::Trapezoid,
        Backend::Sequential,
    );
    assert!(matches!(
        err,
        Err(cyclefit::Error::RepresentationUnavailable { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn csv_round_trip_preserves_doubles(seed in 0u64..1000) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = 64;
        let dt = 10f64.powf(rng.gen_range(-4.0..0.0));
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let mut ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        ys[n - 1] = ys[0]; // the loader checks one-period consistency
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&path, "t,y", &ts, &ys).unwrap();
        let back = load_csv(&path).unwrap();
        prop_assert_eq!(back.len(), n);
        for (a, b) in back.values().iter().zip(&ys) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        prop_assert!((back.grid().dt - dt).abs() <= 1e-12 * dt);
    }
}
