use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::geometry::{compose, PointCloud, RigidTransform, Vec3};
use crate::procrustes::{solve_weighted_procrustes, CorrespondenceSet};
use crate::registration::{IterationRecord, RegistrationResult, ScoreDump};
use crate::scalar::Real;

use super::elimination::{pick_correspondences, significance_scores, top_k, HybridPass};
use super::model::IdamModel;
use super::similarity::SimilarityPass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct RegisterOptions {
    /// Overrides the model's iteration count.
    pub n_iter: Option<usize>,
    /// Equal Procrustes weights instead of validity-based ones.
    pub uniform_weights: bool,
    pub keep_scores: bool,
}

/// One weighted Procrustes step; the identity if the problem is degenerate.
pub(crate) fn procrustes_or_identity<T: Real>(src: &[Vec3<T>], tgt: Vec<Vec3<T>>, w: Vec<T>) -> (RigidTransform<T>, bool) {
    match CorrespondenceSet::new(src.to_vec(), tgt, w).and_then(|c| solve_weighted_procrustes(&c)) {
        Ok(t) => (t, false),
        Err(_) => (RigidTransform::identity(), true),
    }
}

pub fn register<T: Real>(
    src: &PointCloud<T>,
    tgt: &PointCloud<T>,
    src_feat: &FeatureSet<T>,
    tgt_feat: &FeatureSet<T>,
    model: &IdamModel<T>,
) -> Result<RegistrationResult<T>> {
    register_with(src, tgt, src_feat, tgt_feat, model, &RegisterOptions::default())
}

pub fn register_with<T: Real>(
    src: &PointCloud<T>,
    tgt: &PointCloud<T>,
    src_feat: &FeatureSet<T>,
    tgt_feat: &FeatureSet<T>,
    model: &IdamModel<T>,
    opts: &RegisterOptions,
) -> Result<RegistrationResult<T>> {
    if src_feat.len() != src.len() || tgt_feat.len() != tgt.len() {
        return Err(Error::ShapeMismatch("feature rows must match cloud sizes".into()));
    }
    let n_iter = opts.n_iter.unwrap_or(model.config.n_iter);
    if n_iter == 0 {
        return Err(Error::Config("n_iter must be at least 1".into()));
    }
    let (keep_s, keep_t) = (model.config.keep_count(src.len()), model.config.keep_count(tgt.len()));
    if keep_s < 3 || keep_t < 3 {
        return Err(Error::InvalidInput(format!("clouds of {} and {} points are too small to keep 3 points each", src.len(), tgt.len())));
    }
    let fs_all = model.prepare_features(src_feat)?;
    let ft_all = model.prepare_features(tgt_feat)?;
    let sig_s = significance_scores(&fs_all, &model.significance)?;
    let sig_t = significance_scores(&ft_all, &model.significance)?;
    let ks = top_k(&sig_s, keep_s)?;
    let kt = top_k(&sig_t, keep_t)?;
    let fs = fs_all.select_rows(&ks);
    let ft = ft_all.select_rows(&kt);
    let mut cur: Vec<Vec3<T>> = ks.iter().map(|&i| src.get(i)).collect();
    let tp: Vec<Vec3<T>> = kt.iter().map(|&j| tgt.get(j)).collect();

    let mut iterations = Vec::with_capacity(n_iter);
    let mut total = RigidTransform::identity();
    let mut validity = Vec::new();
    for _ in 0..n_iter {
        let sim = SimilarityPass::forward(&model.similarity, &cur, &tp, &fs, &ft)?;
        let (matched, idx) = pick_correspondences(&sim.out.s, &tp)?;
        let hybrid = HybridPass::forward(&sim.out.f, tp.len(), &model.validity)?;
        let w = if opts.uniform_weights { vec![T::one(); cur.len()] } else { hybrid.w.clone() };
        let (step, degenerate) = procrustes_or_identity(&cur, matched, w.clone());
        cur = cur.iter().map(|p| step.apply_point(p)).collect();
        total = compose(&step, &total);
        validity = hybrid.v;
        iterations.push(IterationRecord {
            transform: step,
            correspondences: idx.iter().enumerate().map(|(i, &j)| (ks[i], kt[j])).collect(),
            weights: w,
            degenerate,
        });
    }
    let scores = opts.keep_scores.then(|| ScoreDump {
        source_significance: ks.iter().map(|&i| sig_s[i]).collect(),
        target_significance: kt.iter().map(|&j| sig_t[j]).collect(),
        source_kept: ks,
        target_kept: kt,
        validity,
    });
    Ok(RegistrationResult { transform: total, iterations, scores })
}
