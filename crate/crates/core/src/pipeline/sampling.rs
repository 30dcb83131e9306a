use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::neighbor::SpatialIndex;
use crate::scalar::Real;

/// Additive floor on both sampling distributions so each phase can always draw.
pub const SAMPLING_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct BalancedSample {
    /// Sampled source indices; the first `n_positive_phase` come from the positive phase.
    pub source_index: Vec<usize>,
    /// Target point closest to each sampled source point under the ground truth.
    pub target_index: Vec<usize>,
    pub n_positive_phase: usize,
    /// Whether each source point of the full cloud has a target point within `r`.
    pub positive: Vec<bool>,
}

/// Draws `k` indices without replacement with probability proportional to `weights`;
/// drawn entries are zeroed.
fn draw_without_replacement<R: Rng + ?Sized>(weights: &mut [f64], k: usize, rng: &mut R, out: &mut Vec<usize>) {
    for _ in 0..k {
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let i = pick.expect("positive mass remains while k ≤ n");
        weights[i] = 0.0;
        out.push(i);
    }
}

/// Half the points (rounded up) drawn preferring source points with a true match
/// within `r`, the rest preferring points without one.
pub fn balanced_sample<T: Real, R: Rng + ?Sized>(
    src: &PointCloud<T>,
    tgt: &PointCloud<T>,
    gt: &RigidTransform<T>,
    m: usize,
    r: T,
    rng: &mut R,
) -> Result<BalancedSample> {
    if m == 0 || m > src.len() {
        return Err(Error::OutOfRange { what: "sample size", value: m, min: 1, max: src.len() });
    }
    let index = SpatialIndex::new(tgt.points());
    let nearest: Vec<(usize, T)> = src
        .points()
        .iter()
        .map(|p| {
            let n = index.nearest(&gt.apply_point(p)).expect("target is nonempty");
            (n.index, n.distance)
        })
        .collect();
    let positive: Vec<bool> = nearest.iter().map(|&(_, d)| d * d <= r * r).collect();
    let n_pos = m.div_ceil(2);
    let mut picked = Vec::with_capacity(m);
    let mut w_pos: Vec<f64> = positive.iter().map(|&p| f64::from(u8::from(p)) + SAMPLING_EPS).collect();
    draw_without_replacement(&mut w_pos, n_pos, rng, &mut picked);
    let mut w_neg: Vec<f64> = positive.iter().map(|&p| f64::from(u8::from(!p)) + SAMPLING_EPS).collect();
    for &i in &picked {
        w_neg[i] = 0.0;
    }
    draw_without_replacement(&mut w_neg, m - n_pos, rng, &mut picked);
    Ok(BalancedSample {
        target_index: picked.iter().map(|&i| nearest[i].0).collect(),
        source_index: picked,
        n_positive_phase: n_pos,
        positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, offset: f64) -> PointCloud<f64> {
        PointCloud::new((0..n).map(|i| Vec3::new(i as f64 * 0.5 + offset, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn counts_and_uniqueness() {
        let (s, t) = (grid(100, 0.0), grid(100, 0.0));
        let b = balanced_sample(&s, &t, &RigidTransform::identity(), 17, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(b.source_index.len(), 17);
        assert_eq!(b.n_positive_phase, 9);
        let mut u = b.source_index.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 17);
        assert_eq!(b.source_index, b.target_index);
        assert!(balanced_sample(&s, &t, &RigidTransform::identity(), 101, 0.1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn singular_cases_succeed() {
        // Every point positive, then no point positive.
        for offset in [0.0, 100.0] {
            let (s, t) = (grid(40, 0.0), grid(40, offset));
            let b = balanced_sample(&s, &t, &RigidTransform::identity(), 40, 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let mut u = b.source_index.clone();
            u.sort_unstable();
            assert_eq!(u, (0..40).collect::<Vec<_>>());
        }
    }

    #[test]
    fn positive_phase_prefers_positives() {
        // 30 of 60 points have a match.
        let s = grid(60, 0.0);
        let t = PointCloud::new(s.points()[..30].to_vec()).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for seed in 0..1000 {
            let b = balanced_sample(&s, &t, &RigidTransform::identity(), 20, 0.1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for &i in &b.source_index[..b.n_positive_phase] {
                hits += usize::from(b.positive[i]);
                total += 1;
            }
            assert!(b.source_index[b.n_positive_phase..].iter().all(|&i| !b.positive[i]));
        }
        assert!(hits as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn deterministic() {
        let (s, t) = (grid(50, 0.0), grid(50, 0.03));
        let a = balanced_sample(&s, &t, &RigidTransform::identity(), 12, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = balanced_sample(&s, &t, &RigidTransform::identity(), 12, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }
}
