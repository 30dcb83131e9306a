//! Output shared by every registration method.

use crate::geometry::{compose, RigidTransform};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<T> {
    /// Increment applied to the current source estimate at this step.
    pub transform: RigidTransform<T>,
    /// `(source index, target index)` into the original clouds.
    pub correspondences: Vec<(usize, usize)>,
    pub weights: Vec<T>,
    /// The solver could not fix a transform; `transform` is the identity.
    pub degenerate: bool,
}

/// Per-point scores from the learned pipeline, for kept points only.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreDump<T> {
    pub source_kept: Vec<usize>,
    pub target_kept: Vec<usize>,
    pub source_significance: Vec<T>,
    pub target_significance: Vec<T>,
    /// Validity of each kept source point at the last iteration.
    pub validity: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult<T> {
    pub transform: RigidTransform<T>,
    pub iterations: Vec<IterationRecord<T>>,
    pub scores: Option<ScoreDump<T>>,
}

impl<T: Real> RegistrationResult<T> {
    /// `T_n ∘ … ∘ T_1` over the recorded increments.
    pub fn fold_iterations(&self) -> RigidTransform<T> {
        self.iterations.iter().fold(RigidTransform::identity(), |acc, it| compose(&it.transform, &acc))
    }
}
