//! Curvature estimation along mirrored directions and the multiplicative
//! transformation-matrix update `A <- A G`.

use crate::error::{Error, Result};
use crate::linalg::{RealVector, SquareMatrix};
use crate::sampling::OrthogonalSampleBlock;

/// Default trust-region ratio between the largest and smallest accepted curvature.
pub const DEFAULT_KAPPA_TRUST: f64 = 1e6;

/// Function values at a mirrored pair `m + s` and `m - s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirroredPair {
    pub plus: f64,
    pub minus: f64,
}

impl MirroredPair {
    pub fn new(plus: f64, minus: f64) -> Self {
        Self { plus, minus }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationParams {
    /// Largest accepted ratio `max h / h`; smaller curvatures are truncated.
    pub kappa_trust: f64,
    /// Learning rate in (0, 1].
    pub eta_a: f64,
}

impl Default for AdaptationParams {
    fn default() -> Self {
        Self {
            kappa_trust: DEFAULT_KAPPA_TRUST,
            eta_a: 1.0,
        }
    }
}

impl AdaptationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_trust > 1.0) || !self.kappa_trust.is_finite() {
            return Err(Error::InvalidParameter {
                name: "kappa_trust",
                reason: format!("must be a finite value > 1, got {}", self.kappa_trust),
            });
        }
        if !(self.eta_a > 0.0 && self.eta_a <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "eta_a",
                reason: format!("must lie in (0, 1], got {}", self.eta_a),
            });
        }
        Ok(())
    }
}

/// Second-order finite difference along one mirrored pair, normalized to a
/// unit direction: `(f+ + f- - 2 f(m)) / (sigma^2 |b|^2)`.
///
/// On an exact quadratic this equals `u^T (A^T H A) u` for `u = b / |b|`,
/// whatever the step size.
pub fn estimate_curvature(f_m: f64, f_plus: f64, f_minus: f64, sigma: f64, b_norm: f64) -> f64 {
    debug_assert!(sigma > 0.0 && b_norm > 0.0);
    (f_plus + f_minus - 2.0 * f_m) / (sigma * sigma * b_norm * b_norm)
}

/// Curvatures for the used directions, in block-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureEstimates {
    dim: usize,
    values: Vec<f64>,
}

impl CurvatureEstimates {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Curvature of direction `i` in block `j`, if that direction was used.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(j * self.dim + i).copied()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The multiplicative update `G`, symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrix(SquareMatrix);

impl UpdateMatrix {
    pub fn identity(dim: usize) -> Self {
        Self(SquareMatrix::identity(dim))
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix {
        self.0
    }

    /// `I + sum_k scale_k u_k u_k^T`
    fn identity_plus(dim: usize, terms: impl IntoIterator<Item = (f64, RealVector)>) -> Self {
        let mut g = SquareMatrix::identity(dim);
        for (scale, u) in terms {
            if scale != 0.0 {
                g = g.add(&SquareMatrix::outer(&u, scale));
            }
        }
        Self(g)
    }
}

fn check_blocks(blocks: &[OrthogonalSampleBlock], lambda_tilde: usize) -> Result<usize> {
    let Some(first) = blocks.first() else {
        return Err(Error::ShapeMismatch("no sample blocks".into()));
    };
    let d = first.dim();
    if blocks.iter().any(|b| b.dim() != d) {
        return Err(Error::ShapeMismatch("blocks of differing dimension".into()));
    }
    if lambda_tilde == 0 {
        return Err(Error::ShapeMismatch("lambda_tilde must be positive".into()));
    }
    let needed = lambda_tilde.div_ceil(d);
    if blocks.len() != needed {
        return Err(Error::ShapeMismatch(format!(
            "{} blocks supplied, {} directions of dimension {} need {}",
            blocks.len(),
            lambda_tilde,
            d,
            needed
        )));
    }
    Ok(d)
}

/// Curvature along each of the first `f_values.len()` directions of `blocks`.
pub fn estimate_curvatures(
    blocks: &[OrthogonalSampleBlock],
    f_m: f64,
    f_values: &[MirroredPair],
    sigma: f64,
) -> Result<CurvatureEstimates> {
    let d = check_blocks(blocks, f_values.len())?;
    let values = f_values
        .iter()
        .enumerate()
        .map(|(n, pair)| {
            let norm = blocks[n / d].norms()[n % d];
            estimate_curvature(f_m, pair.plus, pair.minus, sigma, norm)
        })
        .collect();
    Ok(CurvatureEstimates { dim: d, values })
}

/// Full update from mirrored function values: curvature estimation, trust
/// region truncation, log transform with mean removal, learning rate, and
/// neutral treatment of unused directions.
///
/// `f_values` holds one pair per used direction (the first `lambda_tilde`
/// directions, block-major), and `blocks` must contain exactly
/// `ceil(lambda_tilde / d)` blocks.
pub fn compute_g_full(
    blocks: &[OrthogonalSampleBlock],
    f_m: f64,
    f_values: &[MirroredPair],
    sigma: f64,
    params: &AdaptationParams,
    lambda_tilde: usize,
) -> Result<UpdateMatrix> {
    if f_values.len() != lambda_tilde {
        return Err(Error::ShapeMismatch(format!(
            "{} mirrored pairs for {} used directions",
            f_values.len(),
            lambda_tilde
        )));
    }
    let estimates = estimate_curvatures(blocks, f_m, f_values, sigma)?;
    Ok(update_from_curvatures(blocks, &estimates, params))
}

/// The update matrix for precomputed curvature estimates.
pub fn update_from_curvatures(
    blocks: &[OrthogonalSampleBlock],
    estimates: &CurvatureEstimates,
    params: &AdaptationParams,
) -> UpdateMatrix {
    let d = estimates.dim;
    let h_max = estimates.max();
    if !(h_max > 0.0) {
        return UpdateMatrix::identity(d);
    }
    let floor = h_max / params.kappa_trust;
    let mut q: Vec<f64> = estimates.values.iter().map(|h| h.max(floor).ln()).collect();
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    for v in &mut q {
        *v = (*v - mean) * (-0.5 * params.eta_a);
    }
    // (1/B) sum_ij exp(q_ij) u u^T with q = 0 on unused directions, written
    // as a correction to the identity so the untouched subspace stays exact.
    let inv_blocks = 1.0 / blocks.len() as f64;
    UpdateMatrix::identity_plus(
        d,
        q.iter().enumerate().map(|(n, qn)| {
            let u = blocks[n / d].units()[n % d].clone();
            (inv_blocks * qn.exp_m1(), u)
        }),
    )
}

fn check_curvature(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveCurvature(h))
    }
}

/// Two-direction update with unit learning rate:
/// `G = I + (g1 - 1) u1 u1^T + (g2 - 1) u2 u2^T`, `g1 = (h2/h1)^(1/4)`, `g2 = 1/g1`.
pub fn compute_g_pair(h1: f64, h2: f64, u1: &RealVector, u2: &RealVector) -> Result<UpdateMatrix> {
    check_curvature(h1)?;
    check_curvature(h2)?;
    if u1.dim() != u2.dim() {
        return Err(Error::DimensionMismatch {
            expected: u1.dim(),
            found: u2.dim(),
        });
    }
    for u in [u1, u2] {
        if (u.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "u",
                reason: format!("direction must have unit norm, got {}", u.norm()),
            });
        }
    }
    if u1.dot(u2).abs() > 1e-10 {
        return Err(Error::InvalidParameter {
            name: "u",
            reason: "directions must be orthogonal".into(),
        });
    }
    let gamma1 = (h2 / h1).powf(0.25);
    let gamma2 = (h1 / h2).powf(0.25);
    Ok(UpdateMatrix::identity_plus(
        u1.dim(),
        [(gamma1 - 1.0, u1.clone()), (gamma2 - 1.0, u2.clone())],
    ))
}

/// `tr(C) - tr(G C G)` for the pair update when `h_i = u_i^T C u_i`:
/// `h1 + h2 - 2 sqrt(h1 h2) = (sqrt(h1) - sqrt(h2))^2`.
pub fn predicted_trace_reduction(h1: f64, h2: f64) -> Result<f64> {
    check_curvature(h1)?;
    check_curvature(h2)?;
    Ok((h1.sqrt() - h2.sqrt()).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::determinant;
    use crate::sampling::{sample_orthogonal, RngStream};

    fn axis_block(norms: &[f64]) -> OrthogonalSampleBlock {
        let d = norms.len();
        OrthogonalSampleBlock::from_units((0..d).map(|i| RealVector::basis(d, i)).collect(), norms.to_vec())
    }

    fn assert_close(a: &SquareMatrix, b: &SquareMatrix, tol: f64) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn curvature_on_sphere() {
        // f = |x|^2 / 2, m = 0, sigma = 1, b = e1
        assert_eq!(estimate_curvature(0.0, 0.5, 0.5, 1.0, 1.0), 1.0);
    }

    #[test]
    fn curvature_on_ellipsoid_matches_hessian_entry() {
        // f = (9 x1^2 + x2^2) / 2, m = 0, sigma = 0.5, b = 2 e1: x = +-e1
        let f = |x: f64| 0.5 * 9.0 * x * x;
        let h = estimate_curvature(0.0, f(1.0), f(-1.0), 0.5, 2.0);
        assert_eq!(h, 9.0);
    }

    #[test]
    fn curvature_of_linear_function_vanishes() {
        let c = [0.3, -1.2, 2.0];
        let m = [1.0, 2.0, -0.5];
        let b = [0.4, 0.1, -0.7];
        let sigma = 0.37;
        let f = |x: &[f64]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let xp: Vec<f64> = m.iter().zip(&b).map(|(mi, bi)| mi + sigma * bi).collect();
        let xm: Vec<f64> = m.iter().zip(&b).map(|(mi, bi)| mi - sigma * bi).collect();
        let bn = crate::linalg::norm(&b);
        let h = estimate_curvature(f(&m), f(&xp), f(&xm), sigma, bn);
        assert!(h.abs() < 1e-13, "{h}");
    }

    #[test]
    fn pair_equal_curvatures_is_identity() {
        let u1 = RealVector::basis(4, 0);
        let u2 = RealVector::basis(4, 3);
        let g = compute_g_pair(2.5, 2.5, &u1, &u2).unwrap();
        assert_eq!(g.matrix(), &SquareMatrix::identity(4));
    }

    #[test]
    fn pair_axis_example() {
        let g = compute_g_pair(16.0, 1.0, &RealVector::basis(3, 0), &RealVector::basis(3, 1)).unwrap();
        assert_close(g.matrix(), &SquareMatrix::from_diag(&[0.5, 2.0, 1.0]), 1e-15);
        assert!((determinant(g.matrix()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pair_rejects_non_positive_curvature() {
        let (u1, u2) = (RealVector::basis(2, 0), RealVector::basis(2, 1));
        assert_eq!(compute_g_pair(0.0, 1.0, &u1, &u2), Err(Error::NonPositiveCurvature(0.0)));
        assert_eq!(compute_g_pair(1.0, -2.0, &u1, &u2), Err(Error::NonPositiveCurvature(-2.0)));
        assert!(predicted_trace_reduction(-1.0, 1.0).is_err());
    }

    #[test]
    fn full_equal_curvatures_is_identity() {
        let block = axis_block(&[1.0, 2.0, 0.5]);
        let pairs = [MirroredPair::new(1.5, 1.5), MirroredPair::new(3.0, 3.0), MirroredPair::new(1.125, 1.125)];
        // h = (2 f_pm - 2) / |b|^2 with f_m = 1: 1, 1, 1
        let g = compute_g_full(&[block], 1.0, &pairs, 1.0, &AdaptationParams::default(), 3).unwrap();
        assert_close(g.matrix(), &SquareMatrix::identity(3), 1e-15);
    }

    #[test]
    fn full_non_positive_curvatures_return_identity() {
        let block = axis_block(&[1.0, 1.0]);
        let pairs = [MirroredPair::new(0.0, -1.0), MirroredPair::new(0.5, 0.5)];
        let g = compute_g_full(&[block], 1.0, &pairs, 1.0, &AdaptationParams::default(), 2).unwrap();
        assert_eq!(g.matrix(), &SquareMatrix::identity(2));
    }

    #[test]
    fn full_agrees_with_pair_form() {
        // f_m = 0, |b| = 1, sigma = 1: h = f+ + f-
        let block = axis_block(&[1.0, 1.0]);
        let pairs = [MirroredPair::new(8.0, 8.0), MirroredPair::new(0.5, 0.5)];
        let full = compute_g_full(&[block], 0.0, &pairs, 1.0, &AdaptationParams::default(), 2).unwrap();
        let pair = compute_g_pair(16.0, 1.0, &RealVector::basis(2, 0), &RealVector::basis(2, 1)).unwrap();
        assert_close(full.matrix(), pair.matrix(), 1e-12);
        assert_close(full.matrix(), &SquareMatrix::from_diag(&[0.5, 2.0]), 1e-12);
    }

    #[test]
    fn full_truncates_at_trust_region() {
        let block = axis_block(&[1.0, 1.0]);
        // h = 100 and 1e-6, kappa = 10 truncates the second to 10.
        let pairs = [MirroredPair::new(50.0, 50.0), MirroredPair::new(5e-7, 5e-7)];
        let params = AdaptationParams {
            kappa_trust: 10.0,
            eta_a: 1.0,
        };
        let g = compute_g_full(&[block], 0.0, &pairs, 1.0, &params, 2).unwrap();
        let expected = compute_g_pair(100.0, 10.0, &RealVector::basis(2, 0), &RealVector::basis(2, 1)).unwrap();
        assert_close(g.matrix(), expected.matrix(), 1e-12);
    }

    #[test]
    fn full_learning_rate_scales_exponent() {
        let block = axis_block(&[1.0, 1.0]);
        let pairs = [MirroredPair::new(8.0, 8.0), MirroredPair::new(0.5, 0.5)];
        let params = AdaptationParams {
            kappa_trust: 1e6,
            eta_a: 0.5,
        };
        let g = compute_g_full(&[block], 0.0, &pairs, 1.0, &params, 2).unwrap();
        // (1/16)^(1/8) and 16^(1/8)
        let expected = SquareMatrix::from_diag(&[16f64.powf(-0.125), 16f64.powf(0.125)]);
        assert_close(g.matrix(), &expected, 1e-14);
    }

    #[test]
    fn full_leaves_unused_directions_neutral() {
        let block = axis_block(&[1.0, 1.0, 1.0, 1.0]);
        let pairs = [MirroredPair::new(2.0, 2.0), MirroredPair::new(0.5, 0.5)];
        let g = compute_g_full(&[block], 0.0, &pairs, 1.0, &AdaptationParams::default(), 2).unwrap();
        assert_close(g.matrix(), &SquareMatrix::from_diag(&[0.5f64.sqrt(), 2f64.sqrt(), 1.0, 1.0]), 1e-14);
    }

    #[test]
    fn full_partial_last_block_uses_mean_over_used_entries() {
        // d = 2, lambda = 3: two blocks, second block uses one direction.
        let b1 = axis_block(&[1.0, 1.0]);
        let b2 = axis_block(&[1.0, 1.0]);
        let pairs = [
            MirroredPair::new(4.0, 4.0),
            MirroredPair::new(0.5, 0.5),
            MirroredPair::new(0.5, 0.5),
        ];
        let g = compute_g_full(&[b1, b2], 0.0, &pairs, 1.0, &AdaptationParams::default(), 3).unwrap();
        // h = (8, 1, 1): mean log = ln 8 / 3 = ln 2; q = -(ln h - ln 2)/2
        let e = |h: f64| (-(h.ln() - 2f64.ln()) / 2.0).exp();
        let expected0 = 0.5 * (e(8.0) + e(1.0));
        let expected1 = 0.5 * (e(1.0) + 1.0);
        assert_close(g.matrix(), &SquareMatrix::from_diag(&[expected0, expected1]), 1e-14);
    }

    #[test]
    fn full_rejects_shape_mismatch() {
        let block = axis_block(&[1.0, 1.0]);
        let pairs = [MirroredPair::new(1.0, 1.0)];
        let params = AdaptationParams::default();
        assert!(matches!(
            compute_g_full(&[block.clone()], 0.0, &pairs, 1.0, &params, 2),
            Err(Error::ShapeMismatch(_))
        ));
        let pairs3 = [MirroredPair::new(1.0, 1.0); 3];
        assert!(matches!(
            compute_g_full(&[block], 0.0, &pairs3, 1.0, &params, 3),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn trace_reduction_examples() {
        assert_eq!(predicted_trace_reduction(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(predicted_trace_reduction(4.0, 1.0).unwrap(), 1.0);
        // Matrix oracle with C = diag(4, 1), u = e1, e2.
        let c = SquareMatrix::from_diag(&[4.0, 1.0]);
        let g = compute_g_pair(4.0, 1.0, &RealVector::basis(2, 0), &RealVector::basis(2, 1)).unwrap();
        let gcg = g.matrix().matmul(&c).matmul(g.matrix());
        assert!((c.trace() - gcg.trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_pair_update_is_det_one_and_subspace_neutral() {
        let mut rng = RngStream::new(4);
        for _ in 0..200 {
            let block = sample_orthogonal(&mut rng, 6);
            let (u1, u2) = (&block.units()[0], &block.units()[1]);
            let h1 = 0.01 + 10.0 * rng.uniform();
            let h2 = 0.01 + 10.0 * rng.uniform();
            let g = compute_g_pair(h1, h2, u1, u2).unwrap();
            assert!((determinant(g.matrix()) - 1.0).abs() < 1e-12);
            let x = &block.units()[4];
            let gx = g.matrix().mul_vec(x);
            for (a, b) in gx.iter().zip(x.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
