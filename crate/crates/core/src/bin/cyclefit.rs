//! Command-line front end: generate periodic datasets, fit parameters,
//! evaluate the integral representation, and benchmark batch evaluation.

use clap::{Args, Parser, Subcommand};
use cyclefit::bench::{self, BenchRow};
use cyclefit::canonical::AdmissibleBox;
use cyclefit::config::RunConfig;
use cyclefit::error::{Error, Result};
use cyclefit::estimation::EstimationProblem;
use cyclefit::models::{morris_lecar, Anchor, ModelKind};
use cyclefit::observer::{self, ObserverGains};
use cyclefit::ode::Method;
use cyclefit::optim::{self, BfgsConfig, FitResult, NelderMeadConfig};
use cyclefit::quadrature::{Backend, Rule};
use cyclefit::signal::{self, fmt_full};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "cyclefit",
    version,
    about = "Parameter estimation for periodic ODE trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (flat `key = value` format).
    #[arg(long)]
    config: PathBuf,
    /// Input dataset CSV (`t,y`), produced by `simulate` or external.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory; created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker count for scan quadrature / threaded batch evaluation.
    #[arg(long)]
    workers: Option<usize>,
    /// RNG seed for candidate draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Manual post-fit adjustment added to the second linear-block entry.
    #[arg(long, allow_hyphen_values = true)]
    adjust_theta2: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a registered model and write one period of data.
    Simulate(CommonArgs),
    /// Fit nonlinear parameters to a dataset.
    Fit(CommonArgs),
    /// Evaluate the integral representation at a fixed parameter vector.
    Evaluate(CommonArgs),
    /// Benchmark sequential / scan / threaded batch evaluation.
    Bench(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Bench(a) => cmd_bench(&a),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn available_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Fills model-dependent defaults so the resolved config is self-contained.
fn resolve(cfg: &mut RunConfig) -> Result<ModelKind> {
    let kind = ModelKind::parse(cfg.require("model")?)?;
    let join = |v: &[f64]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };

    cfg.default_key("params", join(&kind.default_params()));
    let ic = kind.default_ic();
    cfg.default_key("sim.ic", format!("{}, {}", ic.0, ic.1));
    cfg.default_key("sim.dt", kind.default_dt());
    cfg.default_key("sim.method", "rk4");
    cfg.default_key("sim.burn_in", kind.default_burn_in());
    cfg.default_key("sim.t_end", kind.default_t_end());
    match kind.default_anchor() {
        Anchor::Start { period } => {
            cfg.default_key("sim.anchor", "start");
            if let Some(p) = period {
                cfg.default_key("sim.period", p);
            }
        }
        Anchor::MeanCrossing { .. } => {
            cfg.default_key("sim.anchor", "mean_crossing");
        }
    }

    cfg.default_key("observer.l", "-1");
    cfg.default_key("observer.b", "1");
    cfg.default_key("observer.method", "dopri_fixed");
    cfg.default_key("observer.h", 2e-4);
    cfg.default_key("observer.delta_min", 1e-8);
    cfg.default_key("quad.rule", "trapezoid");
    cfg.default_key("objective.stride", kind.default_stride());

    let dbox = kind.default_box();
    cfg.default_key("box.lower", join(&dbox.lower));
    cfg.default_key("box.upper", join(&dbox.upper));

    let params = cfg.get_vec_f64("params")?.unwrap();
    let lambda = kind.lambda_from_params(&params)?;
    cfg.default_key("evaluate.lambda", join(&lambda));

    cfg.default_key("optim.kind", "nelder_mead");
    cfg.default_key("optim.start", join(&lambda));
    cfg.default_key("fit.proceed_on_pe_failure", "false");
    cfg.default_key("bench.n", 1000);
    Ok(kind)
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn parse_gains(cfg: &RunConfig) -> Result<ObserverGains> {
    let l = cfg.get_vec_f64("observer.l")?.unwrap_or_else(|| vec![-1.0]);
    let b = cfg.get_vec_f64("observer.b")?.unwrap_or_else(|| vec![1.0]);
    Ok(ObserverGains { l, b })
}

fn parse_box(cfg: &RunConfig, kind: ModelKind) -> Result<AdmissibleBox> {
    match (cfg.get_vec_f64("box.lower")?, cfg.get_vec_f64("box.upper")?) {
        (Some(lo), Some(hi)) => AdmissibleBox::new(lo, hi),
        _ => Ok(kind.default_box()),
    }
}

fn build_problem(
    cfg: &RunConfig,
    kind: ModelKind,
    data: &Path,
    workers: Option<usize>,
) -> Result<EstimationProblem> {
    let signal = Arc::new(signal::load_csv(data)?);
    println!(
        "data: {} points, dt = {}, period = {}",
        signal.len(),
        signal.grid().dt,
        signal.period()
    );
    let system = kind.system();
    let search = kind.search_space();
    let gains = parse_gains(cfg)?;
    let rule = Rule::parse(cfg.get("quad.rule").unwrap_or("trapezoid"))?;
    let method = Method::parse(cfg.get("observer.method").unwrap_or("dopri_fixed"))?;
    let h = cfg.f64_or("observer.h", 2e-4)?;
    let stride = cfg.usize_or("objective.stride", kind.default_stride())?;
    let admissible = parse_box(cfg, kind)?;
    let backend = match workers {
        Some(k) if k > 1 => Backend::Scan { workers: k },
        _ => Backend::Sequential,
    };

    let t0 = Instant::now();
    let problem = EstimationProblem::build(
        system, search, gains, signal, method, h, rule, backend, stride, admissible,
    )?;
    println!(
        "fundamental matrix: {} points, dim {}, built in {:.2}s (cond est {:.2e})",
        problem.phi.len(),
        problem.phi.dim(),
        t0.elapsed().as_secs_f64(),
        problem.phi.cond_estimate()
    );
    if problem.phi.cond_warning() {
        eprintln!("warning: fundamental matrix condition estimate exceeds 1e12");
    }
    Ok(problem)
}

fn run_pe_check(cfg: &RunConfig, problem: &EstimationProblem) -> Result<()> {
    let delta_min = cfg.f64_or("observer.delta_min", 1e-8)?;
    let pe = observer::pe_check(problem.system.as_ref(), &problem.signal, delta_min);
    if pe.min_eigenvalue.is_infinite() {
        println!("pe check: vacuous (no linear block)");
        return Ok(());
    }
    println!(
        "pe check: min Gram eigenvalue {:.6e} ({})",
        pe.min_eigenvalue,
        if pe.satisfied {
            "satisfied"
        } else {
            "NOT satisfied"
        }
    );
    if !pe.satisfied {
        let proceed = cfg.get_bool("fit.proceed_on_pe_failure")?.unwrap_or(false);
        if proceed {
            eprintln!("warning: proceeding despite unsatisfied excitation condition");
        } else {
            return Err(Error::Numeric {
                index: None,
                msg: format!(
                    "excitation condition not satisfied (min eig {:.3e} <= {delta_min:.1e}); \
                     set fit.proceed_on_pe_failure = true to continue",
                    pe.min_eigenvalue
                ),
            });
        }
    }
    Ok(())
}

fn cmd_simulate(args: &CommonArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let kind = resolve(&mut cfg)?;
    ensure_out(&args.out)?;

    let params = cfg.get_vec_f64("params")?.unwrap();
    let ic = cfg.get_vec_f64("sim.ic")?.unwrap();
    if ic.len() != 2 {
        return Err(Error::Config("sim.ic must have two components".into()));
    }
    let dt = cfg.f64_or("sim.dt", kind.default_dt())?;
    let t_end = cfg.f64_or("sim.t_end", kind.default_t_end())?;
    let method = Method::parse(cfg.get("sim.method").unwrap_or("rk4"))?;
    let n_steps = (t_end / dt).ceil() as usize;

    let t0 = Instant::now();
    let traj = kind.simulate(&params, (ic[0], ic[1]), dt, n_steps, method)?;
    let anchor = match cfg.get("sim.anchor").unwrap_or("start") {
        "start" => Anchor::Start {
            period: cfg.get_f64("sim.period")?,
        },
        "mean_crossing" => Anchor::MeanCrossing {
            burn_in: cfg.f64_or("sim.burn_in", kind.default_burn_in())?,
        },
        other => return Err(Error::Config(format!("unknown sim.anchor {other:?}"))),
    };
    let ds = cyclefit::models::trim_to_period(&traj, anchor)?;
    println!(
        "simulated {} steps in {:.2}s; period {} ({} grid points from anchor {})",
        n_steps,
        t0.elapsed().as_secs_f64(),
        ds.signal.period(),
        ds.signal.len(),
        ds.anchor_index
    );

    let ts: Vec<f64> = (0..ds.signal.len())
        .map(|i| ds.signal.grid().point(i))
        .collect();
    let x_path = args.out.join("x.csv");
    signal::write_csv(&x_path, "t,x", &ts, ds.signal.values())?;
    let secondary_name = match kind {
        ModelKind::PredatorPrey => "z",
        ModelKind::MorrisLecar => "q",
    };
    signal::write_csv(
        args.out.join(format!("{secondary_name}.csv")),
        &format!("t,{secondary_name}"),
        &ts,
        &ds.secondary,
    )?;

    cfg.set("sim.detected_period", fmt_full(ds.raw_period));
    cfg.set("sim.grid_period", fmt_full(ds.signal.period()));
    cfg.write(args.out.join("resolved.cfg"))?;
    println!("wrote {}", x_path.display());
    Ok(())
}

fn data_path(args: &CommonArgs) -> Result<&Path> {
    args.data
        .as_deref()
        .ok_or_else(|| Error::Usage("this command requires --data <csv>".into()))
}

fn cmd_fit(args: &CommonArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let kind = resolve(&mut cfg)?;
    ensure_out(&args.out)?;
    let problem = build_problem(&cfg, kind, data_path(args)?, args.workers)?;
    run_pe_check(&cfg, &problem)?;
    let problem = &problem;

    let start_physical = cfg.get_vec_f64("optim.start")?.unwrap();
    let start = problem.search.from_physical(&start_physical);
    if !problem.admissible.contains(&start) {
        return Err(Error::Config(format!(
            "optim.start maps outside the admissible box: {start:?}"
        )));
    }

    let t0 = Instant::now();
    let mut fit: FitResult = match cfg.get("optim.kind").unwrap_or("nelder_mead") {
        "nelder_mead" => {
            let d = NelderMeadConfig::default();
            let nm = NelderMeadConfig {
                reflection: cfg.f64_or("optim.reflection", d.reflection)?,
                expansion: cfg.f64_or("optim.expansion", d.expansion)?,
                contraction: cfg.f64_or("optim.contraction", d.contraction)?,
                shrink: cfg.f64_or("optim.shrink", d.shrink)?,
                init_step_rel: cfg.f64_or("optim.init_step_rel", d.init_step_rel)?,
                init_step_abs: cfg.f64_or("optim.init_step_abs", d.init_step_abs)?,
                max_iters: cfg.usize_or("optim.max_iters", d.max_iters)?,
                f_tol: cfg.f64_or("optim.f_tol", d.f_tol)?,
                x_tol: cfg.f64_or("optim.x_tol", d.x_tol)?,
            };
            nm.validate()?;
            optim::nelder_mead(|x| problem.objective(x), &start, &nm)
        }
        "bfgs" => {
            let d = BfgsConfig::default();
            let bc = BfgsConfig {
                max_iters: cfg.usize_or("optim.max_iters", d.max_iters)?,
                fd_step_rel: cfg.f64_or("optim.fd_step_rel", d.fd_step_rel)?,
                g_tol: cfg.f64_or("optim.g_tol", d.g_tol)?,
                f_tol: cfg.f64_or("optim.f_tol", d.f_tol)?,
                ..Default::default()
            };
            optim::bfgs(|x| problem.objective(x), &start, &bc)
        }
        other => return Err(Error::Config(format!("unknown optim.kind {other:?}"))),
    };
    println!(
        "optimizer finished: {} iterations, {} evaluations, best value {:.6e}, {:?} in {:.1}s",
        fit.iterations,
        fit.n_evaluations,
        fit.best_value,
        fit.termination,
        t0.elapsed().as_secs_f64()
    );

    let (x0_hat, mut theta_hat) = problem.recover(&fit.lambda_hat)?;
    if let Some(delta) = args.adjust_theta2 {
        if theta_hat.len() >= 2 {
            theta_hat[1] += delta;
            println!("applied manual adjustment {delta} to theta_2");
        }
    }
    fit.x0_hat = Some(x0_hat.clone());
    fit.theta_hat = Some(theta_hat.clone());

    let lambda_physical = problem.search.to_physical(&fit.lambda_hat);
    println!("lambda_hat (physical): {lambda_physical:?}");
    println!("x0_hat: {x0_hat:?}  theta_hat: {theta_hat:?}");
    if kind == ModelKind::MorrisLecar && theta_hat.len() == 2 {
        println!(
            "recovered g_L = {:.6}, I = {:.6}",
            theta_hat[0],
            morris_lecar::injected_current(&theta_hat)
        );
    }

    // One JSON object per line, appended across runs.
    let mut record = serde_json::to_value(&fit)
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
    record["model"] = serde_json::Value::String(kind.name().into());
    record["lambda_hat_physical"] = serde_json::json!(lambda_physical);
    if kind == ModelKind::MorrisLecar && theta_hat.len() == 2 {
        record["current_I"] = serde_json::json!(morris_lecar::injected_current(&theta_hat));
    }
    let jsonl = args.out.join("fit_result.jsonl");
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&jsonl)?;
    writeln!(f, "{record}")?;

    // Per-iteration estimate history in physical coordinates.
    let names = problem.search.names();
    let hist_path = args.out.join("history.csv");
    let mut hf = std::io::BufWriter::new(std::fs::File::create(&hist_path)?);
    let phys_names: Vec<String> = (0..names.len()).map(|i| format!("phys_{i}")).collect();
    writeln!(
        hf,
        "iter,objective,{},{}",
        names.join(","),
        phys_names.join(",")
    )?;
    for (i, (obj, point)) in fit
        .objective_history
        .iter()
        .zip(&fit.param_history)
        .enumerate()
    {
        let phys = problem.search.to_physical(point);
        let cols: Vec<String> = point
            .iter()
            .chain(phys.iter())
            .map(|v| fmt_full(*v))
            .collect();
        writeln!(hf, "{},{},{}", i, fmt_full(*obj), cols.join(","))?;
    }

    cfg.write(args.out.join("resolved.cfg"))?;
    println!("wrote {} and {}", jsonl.display(), hist_path.display());
    Ok(())
}

fn cmd_evaluate(args: &CommonArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let kind = resolve(&mut cfg)?;
    ensure_out(&args.out)?;
    let problem = build_problem(&cfg, kind, data_path(args)?, args.workers)?;
    let problem = &problem;

    let lambda_physical = cfg.get_vec_f64("evaluate.lambda")?.unwrap();
    let search = problem.search.from_physical(&lambda_physical);
    let rep = problem.representation(&search)?;

    let y = problem.signal.values();
    let n = y.len();
    let max_err = rep
        .yhat
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    let rms = |v: &dyn Fn(usize) -> f64| {
        (0..n).map(|i| v(i) * v(i)).sum::<f64>().sqrt() / (n as f64).sqrt()
    };
    let rms_err = rms(&|i| rep.yhat[i] - y[i]);
    let rms_y = rms(&|i| y[i]);
    println!(
        "max |yhat - y| = {max_err:.6e}, rms ratio = {:.6e}",
        rms_err / rms_y.max(1e-300)
    );

    let (x0, mut theta) = observer::recover_x0_theta(rep.r.as_slice(), problem.system.dims().n);
    if let Some(delta) = args.adjust_theta2 {
        if theta.len() >= 2 {
            theta[1] += delta;
        }
    }
    println!("recovered x0 = {x0:?}, theta = {theta:?}");
    if kind == ModelKind::MorrisLecar && theta.len() == 2 {
        println!(
            "recovered g_L = {:.6}, I = {:.6}",
            theta[0],
            morris_lecar::injected_current(&theta)
        );
    }

    let path = args.out.join("evaluate.csv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "t,y,yhat,err")?;
    #[allow(clippy::needless_range_loop)]
    for j in 0..n {
        let t = problem.signal.grid().point(j);
        writeln!(
            f,
            "{},{},{},{}",
            fmt_full(t),
            fmt_full(y[j]),
            fmt_full(rep.yhat[j]),
            fmt_full(rep.yhat[j] - y[j])
        )?;
    }
    cfg.write(args.out.join("resolved.cfg"))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_bench(args: &CommonArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    let kind = resolve(&mut cfg)?;
    ensure_out(&args.out)?;
    let problem = build_problem(&cfg, kind, data_path(args)?, None)?;
    let problem = &problem;

    let n = cfg.usize_or("bench.n", 1000)?;
    let workers = args.workers.unwrap_or_else(available_workers);
    let mut report = bench::bench_report(problem, n, args.seed, workers, workers)?;

    // Direct fixed-step Euler integration of the full model over the same
    // period, timed for information only (its output is a trajectory, not an
    // objective value, so no discrepancy is reported).
    let params = cfg.get_vec_f64("params")?.unwrap();
    let ic = cfg.get_vec_f64("sim.ic")?.unwrap();
    let n_steps = problem.signal.len() - 1;
    let dt = problem.signal.grid().dt;
    let t0 = Instant::now();
    for _ in 0..n {
        kind.simulate(&params, (ic[0], ic[1]), dt, n_steps, Method::Euler)?;
    }
    let euler_wall = t0.elapsed().as_secs_f64();
    let seq_wall = report.rows[0].wall_seconds;
    report.rows.push(BenchRow {
        backend: "euler_direct".into(),
        n_evals: n,
        wall_seconds: euler_wall,
        speedup_vs_seq: seq_wall / euler_wall,
        max_discrepancy: f64::NAN,
    });

    for row in &report.rows {
        println!(
            "{:>14}: {:>4} evals in {:.3}s (speedup {:.2}x, max discrepancy {:.2e})",
            row.backend, row.n_evals, row.wall_seconds, row.speedup_vs_seq, row.max_discrepancy
        );
    }
    let path = args.out.join("bench.csv");
    report.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    cfg.write(args.out.join("resolved.cfg"))?;
    println!("wrote {}", path.display());
    Ok(())
}
