//! Measurements on covariance matrices and run traces: condition numbers, the
//! scale-invariant trace distance to the inverse Hessian, the limit scale of
//! the covariance, log-linear progress rates and first hitting times.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SquareMatrix};
use crate::objectives::{f_mu, QuadraticProblem};

/// Diagnostics for one iteration. `C = A A^T` is the sampling covariance
/// without the step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: u64,
    pub f_m: f64,
    pub sigma: f64,
    pub det_c: f64,
    /// `tr(HC) / (d det(HC)^(1/d))`, at least 1.
    pub tr_normalized: f64,
    pub kappa_hc: f64,
    pub f_mu: f64,
    pub success: bool,
}

impl TraceRecord {
    /// `tr_normalized` rescaled to the trace distance `tr(HC)/det(HC)^(1/d) - d`.
    pub fn trace_distance(&self, d: usize) -> f64 {
        d as f64 * (self.tr_normalized - 1.0)
    }
}

pub const COLUMNS: [&str; 8] = ["t", "f_m", "sigma", "det_C", "tr_normalized", "kappa_HC", "f_mu", "success"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    /// Set when the run stopped on an error; `records` holds what came before.
    pub error: Option<String>,
}

impl RunTrace {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let pick: fn(&TraceRecord) -> f64 = match name {
            "t" => |r| r.t as f64,
            "f_m" => |r| r.f_m,
            "sigma" => |r| r.sigma,
            "det_C" => |r| r.det_c,
            "tr_normalized" => |r| r.tr_normalized,
            "kappa_HC" => |r| r.kappa_hc,
            "f_mu" => |r| r.f_mu,
            "success" => |r| if r.success { 1.0 } else { 0.0 },
            other => return Err(Error::UnknownColumn(other.to_string())),
        };
        Ok(self.records.iter().map(pick).collect())
    }
}

/// Receives records as a run progresses.
pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord);
}

impl TraceSink for RunTrace {
    fn record(&mut self, record: &TraceRecord) {
        self.records.push(*record);
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) {
        self.push(*record);
    }
}

/// Computes [`TraceRecord`]s for states on a fixed quadratic problem.
#[derive(Debug, Clone)]
pub struct Observer<'a> {
    problem: &'a QuadraticProblem,
    cholesky_t: SquareMatrix,
}

impl<'a> Observer<'a> {
    pub fn new(problem: &'a QuadraticProblem) -> Self {
        Self {
            problem,
            cholesky_t: problem.hessian_cholesky().transpose(),
        }
    }

    pub fn observe(&self, t: u64, mean: &[f64], sigma: f64, factor: &SquareMatrix, success: bool) -> TraceRecord {
        let d = factor.dim();
        // HC has the eigenvalues of S = (L^T A)(L^T A)^T, and tr(S) = |L^T A|_F^2.
        let p = self.cholesky_t.matmul(factor);
        let s = p.matmul(&p.transpose()).symmetrized();
        let trace = p.as_slice().iter().map(|v| v * v).sum::<f64>();
        let det_a = factor.determinant();
        let det_c = det_a * det_a;
        let log_det_hc = self.problem.log_det_hessian() + det_c.ln();
        let tr_normalized = trace / (d as f64 * (log_det_hc / d as f64).exp());
        let eig = sym_eig(&s).ok().filter(|e| e[0] > 0.0);
        let kappa_hc = eig.as_ref().map_or(f64::INFINITY, |e| e[d - 1] / e[0]);
        let tr_normalized = match eig {
            Some(e) if tr_normalized - 1.0 <= SPECTRAL_SWITCH => 1.0 + spectral_trace_distance(&e) / d as f64,
            _ => tr_normalized,
        };
        TraceRecord {
            t,
            f_m: self.problem.optimal_value() + self.problem.excess(mean),
            sigma,
            det_c,
            tr_normalized,
            kappa_hc,
            f_mu: f_mu(self.problem, mean),
            success,
        }
    }
}

fn spd_eigenvalues(c: &SquareMatrix) -> Result<Vec<f64>> {
    let eig = sym_eig(c)?;
    if eig[0] <= 0.0 {
        return Err(Error::NotSpd);
    }
    Ok(eig)
}

/// `lambda_max / lambda_min` via the Jacobi eigensolver.
pub fn condition_number(c: &SquareMatrix) -> Result<f64> {
    let eig = spd_eigenvalues(c)?;
    Ok(eig[eig.len() - 1] / eig[0])
}

/// Closed form for 2x2 SPD matrices from trace and determinant:
/// `(1 + s) / (1 - s)` with `s = sqrt(1 - 4 det / tr^2)`, evaluated as
/// `(1 + s)^2 / (4 det / tr^2)` to avoid cancellation.
pub fn condition_number_2x2(c: &SquareMatrix) -> Result<f64> {
    if c.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: c.dim(),
        });
    }
    let tr = c.trace();
    let det = c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)];
    if !(tr > 0.0 && det > 0.0) {
        return Err(Error::NotSpd);
    }
    let x = 4.0 * det / (tr * tr);
    let s = (1.0 - x).max(0.0).sqrt();
    Ok((1.0 + s) * (1.0 + s) / x)
}

fn log_det_spd(l: &SquareMatrix) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `tr( C/det(C)^(1/d) . H/det(H)^(1/d) ) - d`, zero exactly when `C` is a
/// positive multiple of `H^-1`.
pub fn normalized_trace_distance(c: &SquareMatrix, h: &SquareMatrix) -> Result<f64> {
    if c.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: c.dim(),
        });
    }
    let d = c.dim() as f64;
    let lc = c.cholesky()?;
    let lh = h.cholesky()?;
    let p = lh.transpose().matmul(&lc);
    let trace = p.as_slice().iter().map(|v| v * v).sum::<f64>();
    let scale = ((log_det_spd(&lc) + log_det_spd(&lh)) / d).exp();
    let coarse = trace / scale - d;
    if coarse > SPECTRAL_SWITCH {
        return Ok(coarse);
    }
    let eig = spd_eigenvalues(&p.matmul(&p.transpose()).symmetrized())?;
    Ok(spectral_trace_distance(&eig))
}

/// Below this the trace distance is recomputed from log-eigenvalues, since
/// `tr / det^(1/d) - d` cancels to rounding noise near zero.
const SPECTRAL_SWITCH: f64 = 1e-6;

/// `sum_i exp(x_i) - d` with `x_i = ln(lambda_i) - mean(ln lambda)`, summed as
/// `sum_i (expm1(x_i) - x_i)` so the first-order terms cancel exactly.
fn spectral_trace_distance(eig: &[f64]) -> f64 {
    let logs: Vec<f64> = eig.iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|l| expm1_minus_x(l - mean)).sum()
}

fn expm1_minus_x(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // Taylor series; 12 terms are exact to rounding for |x| < 0.1.
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..=14 {
            term *= x / k as f64;
            sum += term;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// `(det(C0) det(H))^(1/d)`, the limit of `tr(HC)/d`.
pub fn alpha_target(c0: &SquareMatrix, h: &SquareMatrix) -> Result<f64> {
    if c0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: c0.dim(),
        });
    }
    let d = c0.dim() as f64;
    let log_det = log_det_spd(&c0.cholesky()?) + log_det_spd(&h.cholesky()?);
    Ok((log_det / d).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::EmptyWindow);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Least-squares slope of `ln f_mu` against `t` over `window` (record indices).
/// Records with `f_mu == 0` are skipped.
pub fn log_progress_rate(trace: &RunTrace, window: Range<usize>) -> Result<f64> {
    let records = trace.records.get(window).ok_or(Error::EmptyWindow)?;
    let (t, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.f_mu > 0.0)
        .map(|r| (r.t as f64, r.f_mu.ln()))
        .unzip();
    Ok(linear_fit(&t, &y)?.slope)
}

/// The default late-phase window: the last half of the trace.
pub fn late_window(trace: &RunTrace) -> Range<usize> {
    trace.len() / 2..trace.len()
}

/// Smallest index whose value is strictly below `target`.
pub fn first_hitting_time(series: &[f64], target: f64) -> Option<usize> {
    series.iter().position(|v| *v < target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{conjugate_diagonal, random_orthogonal};
    use crate::sampling::RngStream;

    fn record(t: u64, f_mu: f64) -> TraceRecord {
        TraceRecord {
            t,
            f_m: 0.0,
            sigma: 1.0,
            det_c: 1.0,
            tr_normalized: 1.0,
            kappa_hc: 1.0,
            f_mu,
            success: false,
        }
    }

    #[test]
    fn condition_number_examples() {
        assert_eq!(condition_number(&SquareMatrix::identity(4)).unwrap(), 1.0);
        let c = SquareMatrix::from_diag(&[4.0, 1.0]);
        assert_eq!(condition_number(&c).unwrap(), 4.0);
        assert!((condition_number_2x2(&c).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(condition_number(&SquareMatrix::from_diag(&[1.0, 0.0])), Err(Error::NotSpd));
    }

    #[test]
    fn closed_form_matches_eigensolver() {
        let mut rng = RngStream::new(10);
        for _ in 0..1000 {
            let a = SquareMatrix::new(2, (0..4).map(|_| rng.standard_normal()).collect()).unwrap();
            let c = a.transpose().matmul(&a);
            let k1 = condition_number(&c).unwrap();
            let k2 = condition_number_2x2(&c).unwrap();
            if k1 < 1e6 {
                assert!((k1 - k2).abs() <= 1e-9 * k1, "{k1} vs {k2}");
            }
        }
    }

    #[test]
    fn trace_distance_examples() {
        let id = SquareMatrix::identity(3);
        assert_eq!(normalized_trace_distance(&id, &id).unwrap(), 0.0);
        let c = SquareMatrix::from_diag(&[2.0, 0.5]);
        let d = normalized_trace_distance(&c, &SquareMatrix::identity(2)).unwrap();
        assert!((d - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trace_distance_is_scale_invariant_and_zero_on_inverse() {
        let mut rng = RngStream::new(12);
        let q = random_orthogonal(&mut rng, 5);
        let eig = [0.1, 0.5, 1.0, 3.0, 20.0];
        let h = conjugate_diagonal(&q, &eig);
        let inv: Vec<f64> = eig.iter().map(|v| 1.0 / v).collect();
        let h_inv = conjugate_diagonal(&q, &inv);
        for s in [1e-6, 1.0, 1e6] {
            assert!(normalized_trace_distance(&h_inv.scaled(s), &h).unwrap() < 1e-10);
        }
        let c = conjugate_diagonal(&random_orthogonal(&mut rng, 5), &eig);
        let base = normalized_trace_distance(&c, &h).unwrap();
        for s in [1e-6, 1.0, 1e6] {
            let v = normalized_trace_distance(&c.scaled(s), &h).unwrap();
            assert!((v - base).abs() < 1e-10 * base.max(1.0));
        }
    }

    #[test]
    fn tiny_trace_distance_is_resolved() {
        let mut rng = RngStream::new(13);
        let q = random_orthogonal(&mut rng, 3);
        for eps in [1e-3f64, 1e-6, 1e-9] {
            let c = conjugate_diagonal(&q, &[eps.exp(), (-eps).exp(), 1.0]);
            let expected = eps * eps + eps.powi(4) / 12.0;
            let got = normalized_trace_distance(&c, &SquareMatrix::identity(3)).unwrap();
            assert!((got - expected).abs() < 1e-6 * expected, "{eps}: {got} vs {expected}");
        }
    }

    #[test]
    fn alpha_examples() {
        let id = SquareMatrix::identity(2);
        assert!((alpha_target(&id, &id).unwrap() - 1.0).abs() < 1e-15);
        let h = SquareMatrix::from_diag(&[4.0, 1.0]);
        assert!((alpha_target(&id, &h).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn progress_rate_examples() {
        let mut trace = RunTrace::new(0);
        trace.records = (0..20).map(|t| record(t, 3.0)).collect();
        assert_eq!(log_progress_rate(&trace, 0..20).unwrap(), 0.0);
        trace.records = (0..40).map(|t| record(t, 2f64.powi(-(t as i32)))).collect();
        let rate = log_progress_rate(&trace, late_window(&trace)).unwrap();
        assert!((rate + 2f64.ln()).abs() < 1e-12);
        assert_eq!(log_progress_rate(&trace, 5..5), Err(Error::EmptyWindow));
        assert_eq!(log_progress_rate(&trace, 30..50), Err(Error::EmptyWindow));
    }

    #[test]
    fn progress_rate_skips_zero_f_mu() {
        let mut trace = RunTrace::new(0);
        trace.records = (0..10).map(|t| record(t, (-(t as f64)).exp())).collect();
        trace.records.push(record(10, 0.0));
        assert!((log_progress_rate(&trace, 0..11).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hitting_time_examples() {
        assert_eq!(first_hitting_time(&[3.0, 2.0, 1.0, 0.5], 1.0), Some(3));
        assert_eq!(first_hitting_time(&[5.0, 5.0, 5.0], 1.0), None);
        assert_eq!(first_hitting_time(&[], 1.0), None);
    }

    #[test]
    fn unknown_column_rejected() {
        let trace = RunTrace::new(0);
        assert_eq!(trace.column("nope"), Err(Error::UnknownColumn("nope".into())));
        assert!(COLUMNS.iter().all(|c| trace.column(c).is_ok()));
    }
}
