//! Seeded multi-run execution and per-iteration median aggregation.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{ExperimentConfig, FactorInit, MeanInit, ProblemKind, ProblemSpec};
use crate::diagnostics::{RunTrace, TraceRecord, COLUMNS};
use crate::error::{Error, Result};
use crate::linalg::{RealVector, SquareMatrix};
use crate::objectives::{conjugate_diagonal, geometric_spectrum, make_ellipsoid, random_orthogonal, QuadraticProblem};
use crate::sampling::{standard_normal_vector, RngStream};
use crate::strategies::{run, StrategyState};

/// Substream of a run seed driving the optimizer.
pub const STRATEGY_STREAM: u64 = 0;
/// Substream of a run seed drawing the initial mean and factor.
pub const INIT_STREAM: u64 = 1;

pub fn build_problem(spec: &ProblemSpec) -> Result<QuadraticProblem> {
    match spec.kind {
        ProblemKind::Sphere => Ok(QuadraticProblem::sphere(spec.d)),
        ProblemKind::Ellipsoid => {
            let mut rng = RngStream::new(spec.seed);
            make_ellipsoid(spec.d, spec.condition, spec.normalize_det, &mut rng, spec.rotated)
        }
    }
}

/// `Q^T diag(lambda)^(1/2) Q` for a random rotation `Q` and geometric
/// eigenvalues `lambda` with condition `kappa` and product 1.
pub fn adapted_factor(rng: &mut RngStream, d: usize, kappa: f64) -> SquareMatrix {
    let q = random_orthogonal(rng, d);
    let roots: Vec<f64> = geometric_spectrum(d, kappa, true).iter().map(|v| v.sqrt()).collect();
    conjugate_diagonal(&q, &roots).symmetrized()
}

/// Initial state of the run with `seed`.
pub fn initial_state(cfg: &ExperimentConfig, problem: &QuadraticProblem, seed: u64) -> Result<StrategyState> {
    let d = cfg.problem.d;
    let mut rng = RngStream::new(seed).split(INIT_STREAM);
    let mean = match &cfg.init.m0 {
        MeanInit::Random { radius } => {
            let z = standard_normal_vector(&mut rng, d);
            problem.optimum().axpy(radius / z.norm(), &z)
        }
        MeanInit::Given(v) => RealVector::new(v.clone())?,
    };
    let factor = match &cfg.init.a0 {
        FactorInit::Identity => SquareMatrix::identity(d),
        FactorInit::Given(v) => SquareMatrix::new(d, v.clone())?,
        FactorInit::AdaptedTo(kappa) => adapted_factor(&mut rng, d, *kappa),
    };
    StrategyState::new(mean, cfg.init.sigma0, factor)
}

fn run_seed(cfg: &ExperimentConfig, problem: &QuadraticProblem, seed: u64) -> RunTrace {
    let outcome = initial_state(cfg, problem, seed).and_then(|state| {
        let mut rng = RngStream::new(seed).split(STRATEGY_STREAM);
        run(&cfg.strategy, problem, state, &mut rng, cfg.budget)
    });
    let mut trace = outcome.unwrap_or_else(|e| {
        let mut t = RunTrace::new(seed);
        t.error = Some(e.to_string());
        t
    });
    trace.seed = seed;
    trace
}

/// One trace per seed, in seed order. Runs execute in parallel on
/// `threads` workers (all cores when `None`); the output does not depend on
/// the thread count. A failing run yields a truncated trace with `error`
/// set and leaves the other runs alone.
pub fn run_experiment_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<RunTrace>> {
    let problem = build_problem(&cfg.problem)?;
    let go = || cfg.seeds.par_iter().map(|&s| run_seed(cfg, &problem, s)).collect::<Vec<_>>();
    match threads {
        None => Ok(go()),
        Some(1) => Ok(cfg.seeds.iter().map(|&s| run_seed(cfg, &problem, s)).collect()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter {
                    name: "parallel",
                    reason: e.to_string(),
                })?;
            Ok(pool.install(go))
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunTrace>> {
    run_experiment_with_threads(cfg, None)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Per-iteration lower median of `column` over all traces that reached
/// that iteration, as `(t, median)` pairs in increasing `t`.
pub fn aggregate_median(traces: &[RunTrace], column: &str) -> Result<Vec<(u64, f64)>> {
    if traces.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let mut by_t: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for trace in traces {
        let values = trace.column(column)?;
        for (r, v) in trace.records.iter().zip(values) {
            by_t.entry(r.t).or_default().push(v);
        }
    }
    Ok(by_t.into_iter().map(|(t, mut v)| (t, lower_median(&mut v))).collect())
}

/// Medians of every column, one record per iteration.
pub fn median_records(traces: &[RunTrace]) -> Result<Vec<TraceRecord>> {
    let columns: Vec<Vec<(u64, f64)>> = COLUMNS[1..]
        .iter()
        .map(|c| aggregate_median(traces, c))
        .collect::<Result<_>>()?;
    Ok((0..columns[0].len())
        .map(|i| TraceRecord {
            t: columns[0][i].0,
            f_m: columns[0][i].1,
            sigma: columns[1][i].1,
            det_c: columns[2][i].1,
            tr_normalized: columns[3][i].1,
            kappa_hc: columns[4][i].1,
            f_mu: columns[5][i].1,
            success: columns[6][i].1 != 0.0,
        })
        .collect())
}
