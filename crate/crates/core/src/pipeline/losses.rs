use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::Matrix;
use crate::scalar::Real;

use super::elimination::pick_correspondences;

/// Validity scores are clamped into `[BCE_CLAMP, 1 − BCE_CLAMP]` inside the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// For each ground-truth-mapped source point, the nearest target (ties to the lower
/// index) if it lies within `r`.
pub fn matching_targets<T: Real>(src_gt: &[Vec3<T>], tgt: &[Vec3<T>], r: T) -> Vec<Option<usize>> {
    let r2 = r * r;
    src_gt
        .iter()
        .map(|p| {
            let (j, d2) = tgt.iter().enumerate().fold((0, T::infinity()), |(bj, bd), (j, q)| {
                let d = p.distance_squared(q);
                if d < bd { (j, d) } else { (bj, bd) }
            });
            (d2 <= r2).then_some(j)
        })
        .collect()
}

fn check_rows<T: Real>(s: &Matrix<T>, src_gt: &[Vec3<T>], tgt: &[Vec3<T>]) -> Result<()> {
    if s.rows() != src_gt.len() || s.cols() != tgt.len() {
        return Err(Error::ShapeMismatch(format!("similarity {:?} for {} sources and {} targets", s.shape(), src_gt.len(), tgt.len())));
    }
    Ok(())
}

/// Gated cross-entropy of each row against its true match. Returns `(loss, dL/dS)`.
pub fn matching_loss<T: Real>(s: &Matrix<T>, src_gt: &[Vec3<T>], tgt: &[Vec3<T>], r: T) -> Result<(T, Matrix<T>)> {
    check_rows(s, src_gt, tgt)?;
    let m = T::from_usize_lossy(s.rows());
    let mut loss = T::zero();
    let mut ds = Matrix::zeros(s.rows(), s.cols());
    for (i, j) in matching_targets(src_gt, tgt, r).into_iter().enumerate() {
        if let Some(j) = j {
            let sij = s.get(i, j);
            loss -= sij.ln();
            ds.set(i, j, -T::one() / (m * sij));
        }
    }
    Ok((loss / m, ds))
}

/// `Σ_j S(i,j) log S(i,j)` for each row, with `0 log 0 = 0`.
pub fn row_negative_entropy<T: Real>(s: &Matrix<T>) -> Vec<T> {
    (0..s.rows()).map(|i| s.row(i).iter().map(|&p| if p > T::zero() { p * p.ln() } else { T::zero() }).sum()).collect()
}

/// Squared error between significance scores and the first similarity matrix's
/// row negative entropy. `S` is a constant here; returns `(loss, dL/ds)`.
pub fn negative_entropy_loss<T: Real>(sig: &[T], s1: &Matrix<T>) -> Result<(T, Vec<T>)> {
    if sig.len() != s1.rows() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} rows", sig.len(), s1.rows())));
    }
    let m = T::from_usize_lossy(sig.len());
    let target = row_negative_entropy(s1);
    let diff: Vec<T> = sig.iter().zip(&target).map(|(a, b)| *a - *b).collect();
    let loss = diff.iter().map(|d| *d * *d).sum::<T>() / m;
    Ok((loss, diff.into_iter().map(|d| T::lit(2.0) * d / m).collect()))
}

/// Whether each row's argmax match lies within `r` of the true position.
pub fn hybrid_labels<T: Real>(s: &Matrix<T>, src_gt: &[Vec3<T>], tgt: &[Vec3<T>], r: T) -> Result<Vec<bool>> {
    check_rows(s, src_gt, tgt)?;
    let (matched, _) = pick_correspondences(s, tgt)?;
    Ok(src_gt.iter().zip(&matched).map(|(p, q)| p.distance_squared(q) <= r * r).collect())
}

/// Binary cross-entropy of validity scores against precomputed labels.
/// Returns `(loss, dL/dv)`; the gradient is zero where the clamp is active.
pub fn bce_loss<T: Real>(v: &[T], labels: &[bool]) -> Result<(T, Vec<T>)> {
    if v.len() != labels.len() || v.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} scores for {} labels", v.len(), labels.len())));
    }
    let m = T::from_usize_lossy(v.len());
    let (lo, hi) = (T::lit(BCE_CLAMP), T::one() - T::lit(BCE_CLAMP));
    let mut loss = T::zero();
    let mut dv = Vec::with_capacity(v.len());
    for (&x, &l) in v.iter().zip(labels) {
        let c = x.max(lo).min(hi);
        let inside = x > lo && x < hi;
        if l {
            loss -= c.ln();
            dv.push(if inside { -T::one() / (c * m) } else { T::zero() });
        } else {
            loss -= (T::one() - c).ln();
            dv.push(if inside { T::one() / ((T::one() - c) * m) } else { T::zero() });
        }
    }
    Ok((loss / m, dv))
}

/// [`bce_loss`] against [`hybrid_labels`]. Returns `(loss, dL/dv, labels)`.
pub fn hybrid_loss<T: Real>(v: &[T], s: &Matrix<T>, src_gt: &[Vec3<T>], tgt: &[Vec3<T>], r: T) -> Result<(T, Vec<T>, Vec<bool>)> {
    let labels = hybrid_labels(s, src_gt, tgt, r)?;
    let (loss, dv) = bce_loss(v, &labels)?;
    Ok((loss, dv, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{row_softmax, softmax_backward};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, step: f64) -> Vec<Vec3<f64>> {
        (0..n).map(|i| Vec3::new(i as f64 * step, 0.0, 0.0)).collect()
    }

    #[test]
    fn matching_loss_cases() {
        let pts = line(4, 1.0);
        let perfect = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert_eq!(matching_loss(&perfect, &pts, &pts, 0.1).unwrap().0, 0.0);

        let uniform = Matrix::from_fn(4, 4, |_, _| 0.25);
        let far: Vec<Vec3<f64>> = pts.iter().map(|p| *p + Vec3::new(0.0, 5.0, 0.0)).collect();
        let (l, ds) = matching_loss(&uniform, &far, &pts, 0.1).unwrap();
        assert_eq!(l, 0.0);
        assert!(ds.data().iter().all(|&g| g == 0.0));

        // Two of four rows gated in.
        let mut src = pts.clone();
        src[1] = Vec3::new(1.0, 0.5, 0.0);
        src[3] = Vec3::new(3.0, 0.5, 0.0);
        let (l, _) = matching_loss(&uniform, &src, &pts, 0.1).unwrap();
        assert!((l - 2.0 / 4.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matching_gradient_finite_differences_through_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tgt = line(6, 0.05);
        let src: Vec<Vec3<f64>> = (0..5).map(|i| Vec3::new(0.05 * i as f64 + 0.01, 0.0, 0.0)).collect();
        let logits = Matrix::from_fn(5, 6, |_, _| rng.random::<f64>() * 2.0);
        let f = |z: &Matrix<f64>| matching_loss(&row_softmax(z), &src, &tgt, 0.1).unwrap().0;
        let s = row_softmax(&logits);
        let dz = softmax_backward(&s, &matching_loss(&s, &src, &tgt, 0.1).unwrap().1);
        let eps = 1e-6;
        for i in 0..5 {
            for j in 0..6 {
                let mut p = logits.clone();
                p.set(i, j, logits.get(i, j) + eps);
                let mut m = logits.clone();
                m.set(i, j, logits.get(i, j) - eps);
                let num = (f(&p) - f(&m)) / (2.0 * eps);
                assert!((num - dz.get(i, j)).abs() <= 1e-4 * num.abs().max(1e-6), "{num} {}", dz.get(i, j));
            }
        }
    }

    #[test]
    fn negative_entropy_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s1 = row_softmax(&Matrix::from_fn(6, 9, |_, _| rng.random::<f64>() * 3.0));
        let target = row_negative_entropy(&s1);
        assert!(target.iter().all(|&t| t <= 0.0 && t >= -(9f64.ln()) - 1e-12));
        assert!(negative_entropy_loss(&target, &s1).unwrap().0.abs() < 1e-30);

        let m = 16;
        let uniform = Matrix::from_fn(m, m, |_, _| 1.0 / m as f64);
        let (l, _) = negative_entropy_loss(&vec![0.0; m], &uniform).unwrap();
        assert!((l - (m as f64).ln().powi(2)).abs() < 1e-12);

        let sig: Vec<f64> = (0..6).map(|_| rng.random::<f64>() - 2.0).collect();
        let (_, ds) = negative_entropy_loss(&sig, &s1).unwrap();
        let eps = 1e-6;
        for i in 0..6 {
            let mut p = sig.clone();
            p[i] += eps;
            let mut q = sig.clone();
            q[i] -= eps;
            let num = (negative_entropy_loss(&p, &s1).unwrap().0 - negative_entropy_loss(&q, &s1).unwrap().0) / (2.0 * eps);
            assert!((num - ds[i]).abs() <= 1e-4 * num.abs().max(1e-6));
        }
    }

    #[test]
    fn bce_cases() {
        let labels = [true, false, true, false];
        let (l, _) = bce_loss(&[1.0f64, 0.0, 1.0 - 1e-9, 1e-9], &labels).unwrap();
        assert!(l < 1e-6);
        let (l, _) = bce_loss(&[0.5f64; 4], &labels).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);

        let v = [0.3f64, 0.8, 0.55, 0.01];
        let (_, dv) = bce_loss(&v, &labels).unwrap();
        let eps = 1e-7;
        for i in 0..4 {
            let mut p = v;
            p[i] += eps;
            let mut q = v;
            q[i] -= eps;
            let num = (bce_loss(&p, &labels).unwrap().0 - bce_loss(&q, &labels).unwrap().0) / (2.0 * eps);
            assert!((num - dv[i]).abs() <= 1e-4 * num.abs());
        }
    }

    #[test]
    fn hybrid_labels_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let tgt: Vec<Vec3<f64>> = (0..12).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()).scale(0.4)).collect();
            let src: Vec<Vec3<f64>> = (0..10).map(|_| Vec3::new(rng.random(), rng.random(), rng.random()).scale(0.4)).collect();
            let s = row_softmax(&Matrix::from_fn(10, 12, |_, _| rng.random::<f64>()));
            let labels = hybrid_labels(&s, &src, &tgt, 0.1).unwrap();
            for i in 0..10 {
                let row = s.row(i);
                let j = (0..12).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                let d = ((src[i].x() - tgt[j].x()).powi(2) + (src[i].y() - tgt[j].y()).powi(2) + (src[i].z() - tgt[j].z()).powi(2)).sqrt();
                assert_eq!(labels[i], d <= 0.1);
            }
        }
    }
}
