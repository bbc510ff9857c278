//! Batch evaluation of the objective over many candidates and the timing
//! harness comparing the sequential, scan-quadrature and multithreaded
//! paths. All backends share the immutable fundamental matrix; candidates
//! are scored into disjoint output slots without locks.

use crate::error::{Error, Result};
use crate::estimation::{EstimationProblem, PENALTY};
use crate::quadrature::Backend;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::Instant;

/// Execution strategy for a batch of candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchBackend {
    /// One candidate at a time, sequential quadrature.
    Seq,
    /// One candidate at a time, parallel scan quadrature inside each
    /// evaluation.
    Scan { workers: usize },
    /// Candidates partitioned across worker threads, sequential quadrature
    /// inside each evaluation.
    Threads { workers: usize },
}

impl BenchBackend {
    pub fn label(&self) -> String {
        match self {
            BenchBackend::Seq => "seq".into(),
            BenchBackend::Scan { workers } => format!("scan({workers})"),
            BenchBackend::Threads { workers } => format!("threads({workers})"),
        }
    }
}

/// Objective values for a candidate batch; `error_flags[i]` marks candidates
/// that scored the penalty constant because of a model failure.
#[derive(Debug, Clone)]
pub struct BatchResult {
    pub values: Vec<f64>,
    pub error_flags: Vec<bool>,
}

/// Evaluates the objective for every candidate under the chosen backend.
/// Values are identical across backends up to quadrature summation order.
pub fn batch_evaluate(
    problem: &EstimationProblem,
    lambdas: &[Vec<f64>],
    backend: BenchBackend,
) -> BatchResult {
    let n = lambdas.len();
    let mut values = vec![0.0; n];
    match backend {
        BenchBackend::Seq => {
            for (slot, lambda) in values.iter_mut().zip(lambdas) {
                *slot = problem.objective_with_backend(lambda, Backend::Sequential);
            }
        }
        BenchBackend::Scan { workers } => {
            for (slot, lambda) in values.iter_mut().zip(lambdas) {
                *slot = problem.objective_with_backend(lambda, Backend::Scan { workers });
            }
        }
        BenchBackend::Threads { workers } => {
            let workers = workers.max(1);
            let chunk = n.div_ceil(workers);
            std::thread::scope(|scope| {
                for (slots, cands) in values.chunks_mut(chunk).zip(lambdas.chunks(chunk)) {
                    scope.spawn(move || {
                        for (slot, lambda) in slots.iter_mut().zip(cands) {
                            *slot = problem.objective_with_backend(lambda, Backend::Sequential);
                        }
                    });
                }
            });
        }
    }
    let error_flags = values.iter().map(|&v| v >= PENALTY).collect();
    BatchResult {
        values,
        error_flags,
    }
}

/// One timed backend run.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub backend: String,
    pub n_evals: usize,
    pub wall_seconds: f64,
    pub speedup_vs_seq: f64,
    /// Max relative disagreement against the sequential values; NaN for
    /// baselines that do not produce comparable objective values.
    pub max_discrepancy: f64,
}

/// Timing report over the standard backend set.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub candidates: Vec<Vec<f64>>,
    pub seq_values: Vec<f64>,
}

/// Draws `n` candidates uniformly from the admissible box with the given
/// seed and times each backend on them. Fundamental-matrix construction is
/// not part of the timed region (it is amortized across all evaluations).
pub fn bench_report(
    problem: &EstimationProblem,
    n: usize,
    seed: u64,
    scan_workers: usize,
    thread_workers: usize,
) -> Result<BenchReport> {
    if n == 0 {
        return Err(Error::Usage("bench needs at least one candidate".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Vec<f64>> = (0..n)
        .map(|_| problem.admissible.sample(&mut rng))
        .collect();

    let t0 = Instant::now();
    let seq = batch_evaluate(problem, &candidates, BenchBackend::Seq);
    let seq_time = t0.elapsed().as_secs_f64();

    let mut rows = vec![BenchRow {
        backend: "seq".into(),
        n_evals: n,
        wall_seconds: seq_time,
        speedup_vs_seq: 1.0,
        max_discrepancy: 0.0,
    }];

    for backend in [
        BenchBackend::Scan {
            workers: scan_workers.max(1),
        },
        BenchBackend::Threads {
            workers: thread_workers.max(1),
        },
    ] {
        let t = Instant::now();
        let run = batch_evaluate(problem, &candidates, backend);
        let wall = t.elapsed().as_secs_f64();
        let disc = max_relative_discrepancy(&seq.values, &run.values);
        rows.push(BenchRow {
            backend: backend.label(),
            n_evals: n,
            wall_seconds: wall,
            speedup_vs_seq: seq_time / wall,
            max_discrepancy: disc,
        });
    }

    Ok(BenchReport {
        rows,
        candidates,
        seq_values: seq.values,
    })
}

pub fn max_relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + x.abs()))
        .fold(0.0, f64::max)
}

impl BenchReport {
    /// CSV with columns `backend,n_evals,wall_seconds,speedup_vs_seq,max_discrepancy`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "backend,n_evals,wall_seconds,speedup_vs_seq,max_discrepancy"
        )?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{:.6},{:.4},{:e}",
                row.backend, row.n_evals, row.wall_seconds, row.speedup_vs_seq, row.max_discrepancy
            )?;
        }
        Ok(())
    }
}
