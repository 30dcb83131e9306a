//! Small dense decompositions on 3×3 matrices (cyclic Jacobi).

use crate::geometry::{Mat3, Vec3};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// Symmetric eigendecomposition. Returns eigenvalues in ascending order and
/// the matching unit eigenvectors as columns of the returned matrix.
pub fn symmetric_eigen<T: Real>(a: &Mat3<T>) -> ([T; 3], Mat3<T>) {
    let mut m = a.0;
    let mut v = Mat3::<T>::identity().0;
    for _ in 0..MAX_SWEEPS {
        let off = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
        let diag = m[0][0] * m[0][0] + m[1][1] * m[1][1] + m[2][2] * m[2][2];
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == T::zero() {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (T::lit(2.0) * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.map(|i| m[i][i]);
    let mut vecs = Mat3::zero();
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..3 {
            vecs.0[r][dst] = v[r][src];
        }
    }
    (values, vecs)
}

/// Singular value decomposition `a = U·diag(σ)·Vᵀ` by one-sided Jacobi
/// rotations, with σ sorted descending and `U`, `V` orthogonal.
#[derive(Clone, Copy, Debug)]
pub struct Svd3<T> {
    pub u: Mat3<T>,
    pub singular_values: [T; 3],
    pub v: Mat3<T>,
}

pub fn svd3<T: Real>(a: &Mat3<T>) -> Svd3<T> {
    // Orthogonalize the columns of W = A·V.
    let mut w = a.0;
    let mut v = Mat3::<T>::identity().0;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
            for row in &w {
                alpha += row[p] * row[p];
                beta += row[q] * row[q];
                gamma += row[p] * row[q];
            }
            if gamma == T::zero() || gamma.abs() <= T::epsilon() * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
            let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
            let c = T::one() / (T::one() + t * t).sqrt();
            let s = c * t;
            for row in w.iter_mut() {
                let (wp, wq) = (row[p], row[q]);
                row[p] = c * wp - s * wq;
                row[q] = s * wp + c * wq;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: [T; 3] = std::array::from_fn(|j| (w[0][j] * w[0][j] + w[1][j] * w[1][j] + w[2][j] * w[2][j]).sqrt());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = Mat3::zero();
    let mut vs = Mat3::zero();
    let mut sv = [T::zero(); 3];
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = norms[src];
        for r in 0..3 {
            vs.0[r][dst] = v[r][src];
        }
    }
    // Left singular vectors: normalized columns, completed to an orthonormal basis
    // for vanishing singular values.
    let scale = sv[0].max(T::min_positive_value());
    let mut cols: Vec<Vec3<T>> = Vec::with_capacity(3);
    for (dst, &src) in order.iter().enumerate() {
        let col = Vec3([w[0][src], w[1][src], w[2][src]]);
        let c = if sv[dst] > scale * T::lit(1e3) * T::epsilon() {
            let mut c = col.scale(T::one() / sv[dst]);
            for prev in &cols {
                c = c - prev.scale(prev.dot(&c));
            }
            c.scale(T::one() / c.norm())
        } else {
            complete_basis(&cols)
        };
        cols.push(c);
    }
    for (j, c) in cols.iter().enumerate() {
        for r in 0..3 {
            u.0[r][j] = c.0[r];
        }
    }
    Svd3 { u, singular_values: sv, v: vs }
}

fn complete_basis<T: Real>(cols: &[Vec3<T>]) -> Vec3<T> {
    match cols.len() {
        2 => cols[0].cross(&cols[1]),
        n => {
            let axes = [Vec3::new(T::one(), T::zero(), T::zero()), Vec3::new(T::zero(), T::one(), T::zero()), Vec3::new(T::zero(), T::zero(), T::one())];
            let mut best = axes[0];
            let mut best_norm = -T::one();
            for axis in axes {
                let mut c = axis;
                for prev in &cols[..n] {
                    c = c - prev.scale(prev.dot(&c));
                }
                let nrm = c.norm();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = c.scale(T::one() / nrm);
                }
            }
            best
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::random_rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng) -> Mat3<f64> {
        Mat3(std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))))
    }

    fn reconstruct(s: &Svd3<f64>) -> Mat3<f64> {
        s.u * Mat3::from_diagonal(s.singular_values) * s.v.transpose()
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = rand_mat(&mut rng);
            let s = svd3(&a);
            assert!(reconstruct(&s).max_abs_diff(&a) < 1e-12);
            assert!((s.u.transpose() * s.u).max_abs_diff(&Mat3::identity()) < 1e-12);
            assert!((s.v.transpose() * s.v).max_abs_diff(&Mat3::identity()) < 1e-12);
            assert!(s.singular_values[0] >= s.singular_values[1] && s.singular_values[1] >= s.singular_values[2]);
        }
    }

    #[test]
    fn svd_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let a: Vec3<f64> = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let b = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let m: Mat3<f64> = Mat3::outer(&a, &b);
            let s = svd3(&m);
            assert!(s.singular_values[1] < 1e-12 * s.singular_values[0].max(1.0));
            assert!(reconstruct(&s).max_abs_diff(&m) < 1e-12);
            assert!((s.u.transpose() * s.u).max_abs_diff(&Mat3::identity()) < 1e-12);
        }
        let s = svd3(&Mat3::<f64>::zero());
        assert_eq!(s.singular_values, [0.0; 3]);
        assert!((s.u.transpose() * s.u).max_abs_diff(&Mat3::identity()) < 1e-12);
    }

    #[test]
    fn eigen_of_rotated_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let r: Mat3<f64> = random_rotation(&mut rng);
            let d = [rng.random_range(0.0..1.0), rng.random_range(1.0..2.0), rng.random_range(2.0..3.0)];
            let a = r * Mat3::from_diagonal(d) * r.transpose();
            let (vals, vecs) = symmetric_eigen(&a);
            for k in 0..3 {
                assert!((vals[k] - d[k]).abs() < 1e-12);
                let v = vecs.column(k);
                assert!((v.norm() - 1.0).abs() < 1e-12);
                assert!((a.mul_vec(&v) - v.scale(vals[k])).norm() < 1e-12);
            }
        }
    }
}
