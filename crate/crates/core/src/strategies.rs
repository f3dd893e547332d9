//! The optimizer loops: full HE-ES with cumulative step-size adaptation, the
//! elitist (1+4)-HE-ES with a 1/5 success rule, and the (1+1)-ES obtained by
//! switching matrix adaptation off.

use std::fmt;
use std::str::FromStr;

use crate::adaptation::{compute_g_full, AdaptationParams, MirroredPair};
use crate::diagnostics::{Observer, RunTrace, TraceSink};
use crate::error::{Error, Result};
use crate::linalg::{RealVector, SquareMatrix};
use crate::objectives::{Objective, QuadraticProblem};
use crate::sampling::{sample_orthogonal, OrthogonalSampleBlock, RngStream};

/// Runs stop once `f(m) - f*` falls below this.
pub const EARLY_STOP_EXCESS: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyState {
    pub mean: RealVector,
    pub step_size: f64,
    /// Transformation factor `A`; offspring are `m +- sigma A b`.
    pub factor: SquareMatrix,
    pub csa_path: RealVector,
    pub csa_norm: f64,
    pub iteration: u64,
}

impl StrategyState {
    pub fn new(mean: RealVector, step_size: f64, factor: SquareMatrix) -> Result<Self> {
        if mean.dim() != factor.dim() {
            return Err(Error::DimensionMismatch {
                expected: factor.dim(),
                found: mean.dim(),
            });
        }
        if !(step_size > 0.0) || !step_size.is_finite() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("step size must be positive and finite, got {step_size}"),
            });
        }
        if !(factor.determinant().abs() > 1e-300) {
            return Err(Error::InvalidParameter {
                name: "A",
                reason: "transformation factor must have full rank".into(),
            });
        }
        let d = mean.dim();
        Ok(Self {
            mean,
            step_size,
            factor,
            csa_path: RealVector::zeros(d),
            csa_norm: 0.0,
            iteration: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Sampling covariance without step size, `A A^T`.
    pub fn covariance(&self) -> SquareMatrix {
        self.factor.matmul(&self.factor.transpose()).symmetrized()
    }
}

/// Parameters of the full HE-ES.
#[derive(Debug, Clone, PartialEq)]
pub struct HeEsParams {
    /// Number of mirrored pairs per iteration.
    pub lambda_tilde: usize,
    pub c_s: f64,
    pub d_s: f64,
    /// Recombination weights by rank over all `2 lambda_tilde` offspring.
    pub weights: Vec<f64>,
    pub adaptation: AdaptationParams,
    pub mu_eff_mirrored: f64,
    /// Expected length of a `d`-dimensional standard normal vector.
    pub chi_d: f64,
}

impl HeEsParams {
    pub fn default_for(d: usize) -> Self {
        Self::with_lambda_tilde(d, 2 + (1.5 * (d as f64).ln()).floor() as usize)
    }

    /// Log-rank weights on the best `lambda_tilde` offspring and CSA
    /// constants derived from them.
    pub fn with_lambda_tilde(d: usize, lambda_tilde: usize) -> Self {
        let mu = lambda_tilde;
        let raw: Vec<f64> = (1..=mu).map(|k| (mu as f64 + 0.5).ln() - (k as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        weights.resize(2 * lambda_tilde, 0.0);
        let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
        let mu_eff = 1.0 / sum_sq;
        let df = d as f64;
        let c_s = (mu_eff + 2.0) / (df + mu_eff + 5.0);
        let d_s = 1.0 + 2.0 * (((mu_eff - 1.0) / (df + 1.0)).sqrt() - 1.0).max(0.0) + c_s;
        Self {
            lambda_tilde,
            c_s,
            d_s,
            mu_eff_mirrored: mirrored_mu_eff(&weights),
            weights,
            adaptation: AdaptationParams::default(),
            chi_d: df.sqrt() * (1.0 - 1.0 / (4.0 * df) + 1.0 / (21.0 * df * df)),
        }
    }

    pub fn blocks(&self, d: usize) -> usize {
        self.lambda_tilde.div_ceil(d)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if self.lambda_tilde == 0 {
            return invalid("lambda_tilde", "must be positive");
        }
        if self.weights.len() != 2 * self.lambda_tilde {
            return invalid("weights", "need exactly 2 * lambda_tilde entries");
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || self.weights.windows(2).any(|w| w[1] > w[0]) {
            return invalid("weights", "must be non-negative and non-increasing");
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return invalid("weights", "must sum to 1");
        }
        if !(self.c_s > 0.0 && self.c_s < 1.0) {
            return invalid("c_s", "must lie in (0, 1)");
        }
        if !(self.d_s > 0.0) {
            return invalid("d_s", "must be positive");
        }
        if !(self.mu_eff_mirrored > 0.0) || !(self.chi_d > 0.0) {
            return invalid("mu_eff_mirrored", "normalizers must be positive");
        }
        self.adaptation.validate()
    }
}

/// `1 / E[sum_n (w+_n - w-_n)^2]` when ranks are assigned uniformly at
/// random, i.e. under neutral selection.
fn mirrored_mu_eff(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    // E[sum over pairs of w+ w-] = (n/2) (sum^2 - sum_sq) / (n (n - 1))
    let cross = 0.5 * (sum * sum - sum_sq) / (n - 1.0);
    1.0 / (sum_sq - 2.0 * cross)
}

/// Parameters of the elitist variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElitistParams {
    /// Step-size factor on success; failures multiply by `c_sigma^(-1/4)`.
    pub c_sigma: f64,
    pub adaptation: AdaptationParams,
}

impl ElitistParams {
    pub fn default_for(d: usize) -> Self {
        Self {
            c_sigma: (1.0 / d as f64).exp(),
            adaptation: AdaptationParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_sigma > 1.0) || !self.c_sigma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "c_sigma",
                reason: format!("must be > 1, got {}", self.c_sigma),
            });
        }
        self.adaptation.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    HeEs,
    OnePlusFour,
    OnePlusOne,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::HeEs, Algorithm::OnePlusFour, Algorithm::OnePlusOne];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HeEs => "he_es",
            Algorithm::OnePlusFour => "one_plus_four",
            Algorithm::OnePlusOne => "one_plus_one",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

/// An algorithm together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    HeEs(HeEsParams),
    OnePlusFour(ElitistParams),
    OnePlusOne(ElitistParams),
}

impl Strategy {
    pub fn default_for(algorithm: Algorithm, d: usize) -> Self {
        match algorithm {
            Algorithm::HeEs => Strategy::HeEs(HeEsParams::default_for(d)),
            Algorithm::OnePlusFour => Strategy::OnePlusFour(ElitistParams::default_for(d)),
            Algorithm::OnePlusOne => Strategy::OnePlusOne(ElitistParams::default_for(d)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Strategy::HeEs(_) => Algorithm::HeEs,
            Strategy::OnePlusFour(_) => Algorithm::OnePlusFour,
            Strategy::OnePlusOne(_) => Algorithm::OnePlusOne,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Strategy::HeEs(p) => p.validate(),
            Strategy::OnePlusFour(p) | Strategy::OnePlusOne(p) => p.validate(),
        }
    }

    pub fn step<O: Objective + ?Sized>(&self, state: &StrategyState, f: &O, rng: &mut RngStream) -> Result<Step> {
        match self {
            Strategy::HeEs(p) => he_es_step(state, f, rng, p),
            Strategy::OnePlusFour(p) => one_plus_four_step(state, f, rng, p),
            Strategy::OnePlusOne(p) => one_plus_one_step(state, f, rng, p),
        }
    }
}

/// Successor state of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: StrategyState,
    /// Elitist variants: the first offspring was accepted. HE-ES: the new
    /// mean is strictly better than the old one.
    pub success: bool,
}

fn check_dims<O: Objective + ?Sized>(state: &StrategyState, f: &O) -> Result<()> {
    if f.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            found: state.dim(),
        });
    }
    Ok(())
}

fn check_finite(x: f64) -> Result<f64> {
    if x.is_nan() {
        Err(Error::NonFinite)
    } else {
        Ok(x)
    }
}

/// One iteration of HE-ES with cumulative step-size adaptation.
pub fn he_es_step<O: Objective + ?Sized>(
    state: &StrategyState,
    f: &O,
    rng: &mut RngStream,
    p: &HeEsParams,
) -> Result<Step> {
    check_dims(state, f)?;
    let d = state.dim();
    let lambda = p.lambda_tilde;
    if p.weights.len() != 2 * lambda {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} offspring",
            p.weights.len(),
            2 * lambda
        )));
    }
    let blocks: Vec<OrthogonalSampleBlock> = (0..p.blocks(d)).map(|_| sample_orthogonal(rng, d)).collect();
    let direction = |n: usize| &blocks[n / d].directions()[n % d];

    let sigma = state.step_size;
    let f_m = check_finite(f.value(&state.mean))?;
    let steps: Vec<RealVector> = (0..lambda).map(|n| state.factor.mul_vec(direction(n))).collect();
    let mut pairs = Vec::with_capacity(lambda);
    for y in &steps {
        let plus = check_finite(f.value(&state.mean.axpy(sigma, y)))?;
        let minus = check_finite(f.value(&state.mean.axpy(-sigma, y)))?;
        pairs.push(MirroredPair::new(plus, minus));
    }
    let g = compute_g_full(&blocks, f_m, &pairs, sigma, &p.adaptation, lambda)?;

    // Offspring 2n is m + sigma A b_n, 2n + 1 is its mirror; ties go to the lower index.
    let fitness: Vec<f64> = pairs.iter().flat_map(|pr| [pr.plus, pr.minus]).collect();
    let mut order: Vec<usize> = (0..2 * lambda).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    let mut offspring_weight = vec![0.0; 2 * lambda];
    for (rank, &k) in order.iter().enumerate() {
        offspring_weight[k] = p.weights[rank];
    }

    // sum_k w_k x_k = m + sigma A z with z = sum_n (w+_n - w-_n) b_n, since the weights sum to 1.
    let mut z = vec![0.0; d];
    for n in 0..lambda {
        let coeff = offspring_weight[2 * n] - offspring_weight[2 * n + 1];
        if coeff != 0.0 {
            for (zi, bi) in z.iter_mut().zip(direction(n).iter()) {
                *zi += coeff * bi;
            }
        }
    }
    let mean = state.mean.axpy(sigma, &state.factor.mul_vec(&z));
    let success = f.value(&mean) < f_m;

    let c_s = p.c_s;
    let csa_norm = (1.0 - c_s) * (1.0 - c_s) * state.csa_norm + c_s * (2.0 - c_s);
    let path_scale = (c_s * (2.0 - c_s) * p.mu_eff_mirrored).sqrt();
    let csa_path = state.csa_path.scaled(1.0 - c_s).axpy(path_scale, &z);
    let step_size = sigma * ((c_s / p.d_s) * (csa_path.norm() / p.chi_d - csa_norm.sqrt())).exp();

    Ok(Step {
        state: StrategyState {
            mean,
            step_size,
            factor: state.factor.matmul(g.matrix()),
            csa_path,
            csa_norm,
            iteration: state.iteration + 1,
        },
        success,
    })
}

fn elitist_step<O: Objective + ?Sized>(
    state: &StrategyState,
    f: &O,
    rng: &mut RngStream,
    p: &ElitistParams,
    adapt_matrix: bool,
) -> Result<Step> {
    check_dims(state, f)?;
    let d = state.dim();
    if adapt_matrix && d < 2 {
        return Err(Error::ShapeMismatch("(1+4)-HE-ES needs d >= 2".into()));
    }
    let block = sample_orthogonal(rng, d);
    let sigma = state.step_size;
    let f_m = check_finite(f.value(&state.mean))?;
    let y1 = state.factor.mul_vec(&block.directions()[0]);
    let x1_plus = state.mean.axpy(sigma, &y1);
    let f1_plus = check_finite(f.value(&x1_plus))?;

    let factor = if adapt_matrix {
        let y2 = state.factor.mul_vec(&block.directions()[1]);
        let pairs = [
            MirroredPair::new(f1_plus, check_finite(f.value(&state.mean.axpy(-sigma, &y1)))?),
            MirroredPair::new(
                check_finite(f.value(&state.mean.axpy(sigma, &y2)))?,
                check_finite(f.value(&state.mean.axpy(-sigma, &y2)))?,
            ),
        ];
        let g = compute_g_full(std::slice::from_ref(&block), f_m, &pairs, sigma, &p.adaptation, 2)?;
        state.factor.matmul(g.matrix())
    } else {
        state.factor.clone()
    };

    let success = f1_plus <= f_m;
    let (mean, step_size) = if success {
        (x1_plus, sigma * p.c_sigma)
    } else {
        (state.mean.clone(), sigma * p.c_sigma.powf(-0.25))
    };
    Ok(Step {
        state: StrategyState {
            mean,
            step_size,
            factor,
            csa_path: state.csa_path.clone(),
            csa_norm: state.csa_norm,
            iteration: state.iteration + 1,
        },
        success,
    })
}

/// One iteration of the (1+4)-HE-ES.
pub fn one_plus_four_step<O: Objective + ?Sized>(
    state: &StrategyState,
    f: &O,
    rng: &mut RngStream,
    p: &ElitistParams,
) -> Result<Step> {
    elitist_step(state, f, rng, p, true)
}

/// One iteration of the (1+1)-ES. Draws the same orthogonal block as the
/// (1+4)-HE-ES so equal seeds give comparable runs; only `b_1` is used.
pub fn one_plus_one_step<O: Objective + ?Sized>(
    state: &StrategyState,
    f: &O,
    rng: &mut RngStream,
    p: &ElitistParams,
) -> Result<Step> {
    if state.factor != SquareMatrix::identity(state.dim()) {
        return Err(Error::InvalidParameter {
            name: "A",
            reason: "the (1+1)-ES runs with an identity transformation factor".into(),
        });
    }
    elitist_step(state, f, rng, p, false)
}

/// Iterates `strategy` for up to `budget` steps, sending one record per step
/// to `sink`. Stops early once `f(m) - f*` drops below [`EARLY_STOP_EXCESS`].
///
/// A step error ends the run and is returned after the records made so far
/// have been delivered.
pub fn run_with_sink<S: TraceSink + ?Sized>(
    strategy: &Strategy,
    q: &QuadraticProblem,
    initial: StrategyState,
    rng: &mut RngStream,
    budget: usize,
    sink: &mut S,
) -> Result<StrategyState> {
    if budget == 0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: "must be at least 1".into(),
        });
    }
    check_dims(&initial, q)?;
    strategy.validate()?;
    let observer = Observer::new(q);
    let mut state = initial;
    for _ in 0..budget {
        let step = strategy.step(&state, q, rng)?;
        state = step.state;
        let record = observer.observe(state.iteration, &state.mean, state.step_size, &state.factor, step.success);
        sink.record(&record);
        if q.excess(&state.mean) < EARLY_STOP_EXCESS {
            break;
        }
    }
    Ok(state)
}

/// Like [`run_with_sink`], collecting records into a [`RunTrace`]. A
/// mid-run failure yields the truncated trace with `error` set.
pub fn run(
    strategy: &Strategy,
    q: &QuadraticProblem,
    initial: StrategyState,
    rng: &mut RngStream,
    budget: usize,
) -> Result<RunTrace> {
    if budget == 0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: "must be at least 1".into(),
        });
    }
    check_dims(&initial, q)?;
    strategy.validate()?;
    let mut trace = RunTrace::new(rng.seed());
    if let Err(e) = run_with_sink(strategy, q, initial, rng, budget, &mut trace) {
        trace.error = Some(e.to_string());
    }
    Ok(trace)
}
