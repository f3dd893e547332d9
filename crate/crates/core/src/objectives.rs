//! Convex quadratic objectives `f(x) = (x - x*)^T H (x - x*) / 2 + f*`,
//! benchmark generators, affine pullbacks and the sublevel-set measure `f_mu`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt, RealVector, SquareMatrix, SYMMETRY_TOL};
use crate::sampling::{standard_normal_vector, RngStream};

/// Anything the strategies can minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Panics if `x` has the wrong dimension.
    fn value(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    hessian: SquareMatrix,
    optimum: RealVector,
    optimal_value: f64,
    // H = L L^T; f is evaluated as |L^T (x - x*)|^2 / 2 so it never drops below f*.
    cholesky: SquareMatrix,
    log_det: f64,
}

impl QuadraticProblem {
    pub fn new(hessian: SquareMatrix, optimum: RealVector, optimal_value: f64) -> Result<Self> {
        if hessian.dim() != optimum.dim() {
            return Err(Error::DimensionMismatch {
                expected: hessian.dim(),
                found: optimum.dim(),
            });
        }
        if !optimal_value.is_finite() {
            return Err(Error::NonFinite);
        }
        let asymmetry = hessian.relative_asymmetry();
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let hessian = hessian.symmetrized();
        let cholesky = hessian.cholesky()?;
        let log_det = 2.0 * cholesky.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            hessian,
            optimum,
            optimal_value,
            cholesky,
            log_det,
        })
    }

    /// `|x|^2 / 2`
    pub fn sphere(d: usize) -> Self {
        Self::new(SquareMatrix::identity(d), RealVector::zeros(d), 0.0).expect("identity is SPD")
    }

    pub fn hessian(&self) -> &SquareMatrix {
        &self.hessian
    }

    pub fn optimum(&self) -> &RealVector {
        &self.optimum
    }

    pub fn optimal_value(&self) -> f64 {
        self.optimal_value
    }

    /// Lower Cholesky factor of the Hessian.
    pub fn hessian_cholesky(&self) -> &SquareMatrix {
        &self.cholesky
    }

    pub fn log_det_hessian(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.hessian.dim()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.excess(x) + self.optimal_value)
    }

    /// `f(x) - f*`, always >= 0.
    pub fn excess(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let n = self.dim();
        let y: Vec<f64> = x.iter().zip(self.optimum.iter()).map(|(a, b)| a - b).collect();
        let mut acc = 0.0;
        // (L^T y)_j = sum_{i >= j} L_ij y_i
        for j in 0..n {
            let mut s = 0.0;
            for (i, yi) in y.iter().enumerate().skip(j) {
                s += self.cholesky[(i, j)] * yi;
            }
            acc += s * s;
        }
        0.5 * acc
    }

    /// Returns the same problem with `f` replaced by `scale * f + offset`.
    pub fn with_affine_values(&self, scale: f64, offset: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be positive, got {scale}"),
            });
        }
        Self::new(
            self.hessian.scaled(scale),
            self.optimum.clone(),
            scale * self.optimal_value + offset,
        )
    }
}

impl Objective for QuadraticProblem {
    fn dim(&self) -> usize {
        self.hessian.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.excess(x) + self.optimal_value
    }
}

/// `x -> scale * inner(x) + offset`
#[derive(Debug, Clone)]
pub struct AffineFitness<O> {
    pub inner: O,
    pub scale: f64,
    pub offset: f64,
}

impl<O: Objective> Objective for AffineFitness<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.inner.value(x) + self.offset
    }
}

/// A random orthogonal matrix from Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut RngStream, d: usize) -> SquareMatrix {
    loop {
        let raw: Vec<RealVector> = (0..d).map(|_| standard_normal_vector(rng, d)).collect();
        if let Ok(q) = gram_schmidt(&raw) {
            return SquareMatrix::from_columns(&q).expect("square by construction");
        }
    }
}

/// Eigenvalues geometrically spaced with ratio `condition` between the
/// extremes, ascending. Smallest is 1 unless `normalize_det`, in which case
/// their product is 1.
pub fn geometric_spectrum(d: usize, condition: f64, normalize_det: bool) -> Vec<f64> {
    let log_c = condition.ln();
    let shift = if normalize_det { 0.5 } else { 0.0 };
    (0..d)
        .map(|i| {
            let t = if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
            ((t - shift) * log_c).exp()
        })
        .collect()
}

/// `Q diag(eigenvalues) Q^T`, symmetrized.
pub fn conjugate_diagonal(q: &SquareMatrix, eigenvalues: &[f64]) -> SquareMatrix {
    let qd = q.matmul(&SquareMatrix::from_diag(eigenvalues));
    qd.matmul(&q.transpose()).symmetrized()
}

/// Ellipsoid benchmark with optimum 0 and optimal value 0.
///
/// `rng` is only consumed when `rotated` is set.
pub fn make_ellipsoid(
    d: usize,
    condition: f64,
    normalize_det: bool,
    rng: &mut RngStream,
    rotated: bool,
) -> Result<QuadraticProblem> {
    if d < 2 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: format!("ellipsoid needs d >= 2, got {d}"),
        });
    }
    if !(condition >= 1.0) || !condition.is_finite() {
        return Err(Error::InvalidParameter {
            name: "condition",
            reason: format!("must be a finite value >= 1, got {condition}"),
        });
    }
    let spectrum = geometric_spectrum(d, condition, normalize_det);
    let hessian = if rotated {
        conjugate_diagonal(&random_orthogonal(rng, d), &spectrum)
    } else {
        SquareMatrix::from_diag(&spectrum)
    };
    QuadraticProblem::new(hessian, RealVector::zeros(d), 0.0)
}

/// `g(x) = M x + b` with invertible `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    matrix: SquareMatrix,
    offset: RealVector,
    inverse: SquareMatrix,
}

impl AffineMap {
    pub fn new(matrix: SquareMatrix, offset: RealVector) -> Result<Self> {
        if matrix.dim() != offset.dim() {
            return Err(Error::DimensionMismatch {
                expected: matrix.dim(),
                found: offset.dim(),
            });
        }
        if !(matrix.determinant().abs() > 1e-12) {
            return Err(Error::SingularMap);
        }
        let inverse = matrix.inverse().ok_or(Error::SingularMap)?;
        Ok(Self {
            matrix,
            offset,
            inverse,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(SquareMatrix::identity(d), RealVector::zeros(d)).expect("identity is invertible")
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn offset(&self) -> &RealVector {
        &self.offset
    }

    pub fn apply(&self, x: &[f64]) -> RealVector {
        self.matrix.mul_vec(x).axpy(1.0, &self.offset)
    }

    pub fn apply_inverse(&self, y: &[f64]) -> RealVector {
        let shifted: Vec<f64> = y.iter().zip(self.offset.iter()).map(|(a, b)| a - b).collect();
        self.inverse.mul_vec(&shifted)
    }
}

/// The problem `x -> f(g^{-1}(x))`: Hessian `M^-T H M^-1`, optimum `g(x*)`.
pub fn affine_pullback(q: &QuadraticProblem, g: &AffineMap) -> Result<QuadraticProblem> {
    if q.dim() != g.matrix.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: g.matrix.dim(),
        });
    }
    let hessian = g.inverse.transpose().matmul(&q.hessian).matmul(&g.inverse).symmetrized();
    QuadraticProblem::new(hessian, g.apply(&q.optimum), q.optimal_value)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS_COEFFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Volume of the unit ball in `d` dimensions, `pi^(d/2) / Gamma(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    ln_unit_ball_volume(d).exp()
}

fn ln_unit_ball_volume(d: usize) -> f64 {
    0.5 * d as f64 * PI.ln() - ln_gamma(0.5 * d as f64 + 1.0)
}

/// d-th root of the Lebesgue measure of `{x : f(x) < f(m)}`:
/// `V_d^(1/d) sqrt(2 (f(m) - f*)) / det(H)^(1/(2d))`.
pub fn f_mu(q: &QuadraticProblem, m: &[f64]) -> f64 {
    let excess = q.excess(m);
    if excess <= 0.0 {
        return 0.0;
    }
    let d = q.dim() as f64;
    (ln_unit_ball_volume(q.dim()) / d - q.log_det / (2.0 * d)).exp() * (2.0 * excess).sqrt()
}
