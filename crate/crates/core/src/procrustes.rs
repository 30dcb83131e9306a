//! Weighted absolute orientation: the rigid `(R, t)` minimizing `Σ wᵢ‖R pᵢ + t − p′ᵢ‖²`.

use crate::error::{Error, Result};
use crate::geometry::{Mat3, RigidTransform, Vec3};
use crate::linalg::svd3;
use crate::scalar::Real;

/// Relative threshold on the second singular value of the cross-covariance.
pub const DEGENERACY_RATIO: f64 = 1e-12;

/// Paired points with non-negative weights summing to one.
#[derive(Clone, Debug)]
pub struct CorrespondenceSet<T> {
    source: Vec<Vec3<T>>,
    target: Vec<Vec3<T>>,
    weights: Vec<T>,
}

impl<T: Real> CorrespondenceSet<T> {
    /// Weights are renormalized to sum to one; they must be non-negative with positive sum.
    pub fn new(source: Vec<Vec3<T>>, target: Vec<Vec3<T>>, weights: Vec<T>) -> Result<Self> {
        if source.len() != target.len() || source.len() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} source points, {} targets, {} weights",
                source.len(),
                target.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::Degenerate("all weights are zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { source, target, weights })
    }

    pub fn uniform(source: Vec<Vec3<T>>, target: Vec<Vec3<T>>) -> Result<Self> {
        let n = source.len();
        Self::new(source, target, vec![T::one(); n])
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `Σ wᵢ‖R pᵢ + t − p′ᵢ‖²`
    pub fn objective(&self, t: &RigidTransform<T>) -> T {
        self.source
            .iter()
            .zip(&self.target)
            .zip(&self.weights)
            .map(|((p, q), w)| *w * t.apply_point(p).distance_squared(q))
            .sum()
    }
}

/// Reflection-corrected SVD solution. Fails with [`Error::Degenerate`] when fewer
/// than three pairs carry weight or the weighted source/target spread has rank < 2.
pub fn solve_weighted_procrustes<T: Real>(c: &CorrespondenceSet<T>) -> Result<RigidTransform<T>> {
    let active = c.weights.iter().filter(|w| **w > T::zero()).count();
    if active < 3 {
        return Err(Error::Degenerate(format!("{active} pairs with nonzero weight, need 3")));
    }
    let mut p_bar = Vec3::zero();
    let mut q_bar = Vec3::zero();
    for ((p, q), &w) in c.source.iter().zip(&c.target).zip(&c.weights) {
        p_bar = p_bar + p.scale(w);
        q_bar = q_bar + q.scale(w);
    }
    let mut h = Mat3::zero();
    for ((p, q), &w) in c.source.iter().zip(&c.target).zip(&c.weights) {
        if w > T::zero() {
            h = h + Mat3::outer(&(*p - p_bar).scale(w), &(*q - q_bar));
        }
    }
    let svd = svd3(&h);
    let [s0, s1, _] = svd.singular_values;
    if !(s0 > T::zero()) || s1 < T::lit(DEGENERACY_RATIO) * s0 || !s0.is_finite() {
        return Err(Error::Degenerate(format!("cross-covariance singular values {:?}", svd.singular_values)));
    }
    let (u, v) = (svd.u, svd.v);
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Mat3::from_diagonal([T::one(), T::one(), d]) * u.transpose();
    let translation = q_bar - rotation.mul_vec(&p_bar);
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}
