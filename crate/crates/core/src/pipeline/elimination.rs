use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::geometry::Vec3;
use crate::nn::{ForwardCache, Matrix, Mlp};
use crate::scalar::Real;

use super::model::{IdamModel, PAIR_FEATURE_DIM};

/// Significance head output for every row of prepared features.
pub fn significance_scores<T: Real>(features: &Matrix<T>, head: &Mlp<T>) -> Result<Vec<T>> {
    Ok(head.forward(features)?.0.into_vec())
}

/// Indices of the `keep` largest scores, ties to the lower index, sorted ascending.
pub fn top_k<T: Real>(scores: &[T], keep: usize) -> Result<Vec<usize>> {
    if keep < 3 || keep > scores.len() {
        return Err(Error::OutOfRange { what: "keep count", value: keep, min: 3, max: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("non-finite significance score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    Ok(order)
}

/// Keeps the `keep` points the significance head rates highest.
pub fn hard_eliminate<T: Real>(features: &FeatureSet<T>, model: &IdamModel<T>, keep: usize) -> Result<Vec<usize>> {
    let scores = significance_scores(&model.prepare_features(features)?, &model.significance)?;
    top_k(&scores, keep)
}

/// Row-wise argmax of `S` (ties to the lower column) and the matched target points.
pub fn pick_correspondences<T: Real>(s: &Matrix<T>, tgt_pts: &[Vec3<T>]) -> Result<(Vec<Vec3<T>>, Vec<usize>)> {
    if s.cols() != tgt_pts.len() {
        return Err(Error::ShapeMismatch(format!("{} columns for {} target points", s.cols(), tgt_pts.len())));
    }
    let idx: Vec<usize> = (0..s.rows())
        .map(|i| s.row(i).iter().enumerate().fold(0, |best, (j, v)| if *v > s.row(i)[best] { j } else { best }))
        .collect();
    Ok((idx.iter().map(|&j| tgt_pts[j]).collect(), idx))
}

/// Middle value, or the mean of the two middle values for an even count.
pub fn median<T: Real>(v: &[T]) -> T {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) * T::lit(0.5)
    }
}

/// Validity-weighted Procrustes weights: entries below the median are zeroed and
/// the survivors normalized.
pub fn median_weights<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("no validity scores".into()));
    }
    let med = median(v);
    let kept: Vec<T> = v.iter().map(|&x| if x >= med { x } else { T::zero() }).collect();
    let total: T = kept.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::Degenerate("all surviving validity scores are zero".into()));
    }
    Ok(kept.into_iter().map(|x| x / total).collect())
}

/// Validity scores from max-pooled pair features, plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct HybridPass<T> {
    pub v: Vec<T>,
    pub w: Vec<T>,
    pub pooled: Matrix<T>,
    /// Column `j` that won the max for each (row, channel).
    winners: Vec<usize>,
    n_target: usize,
    cache: ForwardCache<T>,
}

impl<T: Real> HybridPass<T> {
    /// `f` holds pair features row-major over (i, j); `n_target` columns per source row.
    pub fn forward(f: &Matrix<T>, n_target: usize, head: &Mlp<T>) -> Result<Self> {
        if f.cols() != PAIR_FEATURE_DIM || n_target == 0 || f.rows() % n_target != 0 {
            return Err(Error::ShapeMismatch(format!("pair features {:?} with {n_target} targets", f.shape())));
        }
        let ms = f.rows() / n_target;
        let c = f.cols();
        let mut pooled = Matrix::zeros(ms, c);
        let mut winners = vec![0; ms * c];
        for i in 0..ms {
            for ch in 0..c {
                let mut best = 0;
                for j in 1..n_target {
                    if f.get(i * n_target + j, ch) > f.get(i * n_target + best, ch) {
                        best = j;
                    }
                }
                winners[i * c + ch] = best;
                pooled.set(i, ch, f.get(i * n_target + best, ch));
            }
        }
        let (out, cache) = head.forward(&pooled)?;
        let v = out.into_vec();
        let w = median_weights(&v)?;
        Ok(Self { v, w, pooled, winners, n_target, cache })
    }

    /// `(validity-head gradients, dL/dF)` given `dL/dv`.
    pub fn backward(&self, head: &Mlp<T>, dv: &[T]) -> Result<(Mlp<T>, Matrix<T>)> {
        let ms = self.pooled.rows();
        if dv.len() != ms {
            return Err(Error::ShapeMismatch(format!("{} validity gradients for {ms} rows", dv.len())));
        }
        let dy = Matrix::from_vec(ms, 1, dv.to_vec())?;
        let (dpooled, grads) = head.backward(&self.cache, &dy)?;
        let c = self.pooled.cols();
        let mut df = Matrix::zeros(ms * self.n_target, c);
        for i in 0..ms {
            for ch in 0..c {
                let j = self.winners[i * c + ch];
                df.set(i * self.n_target + j, ch, dpooled.get(i, ch));
            }
        }
        Ok((grads, df))
    }
}

/// Validity scores and Procrustes weights for pair features `f`.
pub fn hybrid_weights<T: Real>(f: &Matrix<T>, n_target: usize, model: &IdamModel<T>) -> Result<(Vec<T>, Vec<T>)> {
    let p = HybridPass::forward(f, n_target, &model.validity)?;
    Ok((p.v, p.w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ConstantFeatures, FeatureExtractor};
    use crate::pipeline::IdamConfig;
    use crate::geometry::PointCloud;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn median_weight_example() {
        let w = median_weights(&[0.1f64, 0.2, 0.3, 0.4]).unwrap();
        let expect = [0.0, 0.0, 0.3 / 0.7, 0.4 / 0.7];
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let eq = median_weights(&[0.3f64; 5]).unwrap();
        assert!(eq.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn median_weights_zero_half_for_distinct_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [1, 2, 3, 8, 64, 127, 128] {
            let v: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 0.98 + 0.01).collect();
            let w = median_weights(&v).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(w.iter().filter(|&&x| x == 0.0).count(), m / 2);
        }
    }

    #[test]
    fn top_k_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(3..300);
            let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 10.0).round()).collect();
            let keep = rng.random_range(3..=n);
            let got = top_k(&scores, keep).unwrap();
            // Oracle: a point is kept iff fewer than `keep` points beat it (higher score, or equal with lower index).
            let oracle: Vec<usize> = (0..n)
                .filter(|&i| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count() < keep)
                .collect();
            assert_eq!(got, oracle);
        }
        assert!(top_k(&[1.0, 2.0], 2).is_err());
        assert!(top_k(&[1.0, 2.0, 3.0], 4).is_err());
    }

    #[test]
    fn constant_features_keep_leading_indices() {
        let cfg = IdamConfig { feature_dim: 4, ..Default::default() };
        let model = IdamModel::<f64>::new(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let pc = PointCloud::new((0..768).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let f = ConstantFeatures { dim: 4, value: 1.0 }.compute(&pc).unwrap();
        let keep = cfg.keep_count(768);
        assert_eq!(keep, 128);
        assert_eq!(hard_eliminate(&f, &model, keep).unwrap(), (0..128).collect::<Vec<_>>());
    }

    #[test]
    fn argmax_rules() {
        let pts: Vec<Vec3<f64>> = (0..4).map(|j| Vec3::new(j as f64, 0.0, 0.0)).collect();
        let diag = Matrix::from_fn(4, 4, |i, j| if i == j { 0.97 } else { 0.01 });
        let (p, idx) = pick_correspondences(&diag, &pts).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(p, pts);
        let uniform = Matrix::from_fn(2, 4, |_, _| 0.25);
        assert_eq!(pick_correspondences(&uniform, &pts).unwrap().1, vec![0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = Matrix::from_fn(20, 4, |_, _| rng.random::<f64>());
        let got = pick_correspondences(&s, &pts).unwrap().1;
        for i in 0..20 {
            let mut best = 0;
            for j in 0..4 {
                if s.get(i, j) > s.get(i, best) {
                    best = j;
                }
            }
            assert_eq!(got[i], best);
        }
    }

    #[test]
    fn validity_is_invariant_to_target_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = IdamModel::<f64>::new(IdamConfig { feature_dim: 3, ..Default::default() }, &mut rng).unwrap();
        let (ms, mt) = (6, 7);
        let f = Matrix::from_fn(ms * mt, 32, |_, _| rng.random::<f64>());
        let perm = [3, 0, 6, 2, 5, 1, 4];
        let fp = Matrix::from_fn(ms * mt, 32, |r, c| f.get((r / mt) * mt + perm[r % mt], c));
        let (v1, w1) = hybrid_weights(&f, mt, &model).unwrap();
        let (v2, w2) = hybrid_weights(&fp, mt, &model).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(w1, w2);
    }

    #[test]
    fn hybrid_backward_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model = IdamModel::<f64>::new(IdamConfig { feature_dim: 3, ..Default::default() }, &mut rng).unwrap();
        let (ms, mt) = (4, 5);
        let f = Matrix::from_fn(ms * mt, 32, |_, _| rng.random::<f64>());
        let coef: Vec<f64> = (0..ms).map(|_| rng.random::<f64>() - 0.5).collect();
        let loss = |f: &Matrix<f64>| -> f64 {
            let p = HybridPass::forward(f, mt, &model.validity).unwrap();
            p.v.iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let pass = HybridPass::forward(&f, mt, &model.validity).unwrap();
        let (_, df) = pass.backward(&model.validity, &coef).unwrap();
        let eps = 1e-6;
        for r in 0..ms * mt {
            for c in 0..32 {
                let mut fp = f.clone();
                fp.set(r, c, f.get(r, c) + eps);
                let mut fm = f.clone();
                fm.set(r, c, f.get(r, c) - eps);
                let num = (loss(&fp) - loss(&fm)) / (2.0 * eps);
                assert!((num - df.get(r, c)).abs() < 1e-7 * (1.0 + num.abs()), "({r},{c}) {num} vs {}", df.get(r, c));
            }
        }
    }
}
