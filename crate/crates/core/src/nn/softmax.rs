use crate::scalar::Real;

use super::Matrix;

/// Softmax over each row with per-row max subtraction.
pub fn row_softmax<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    out
}

/// Gradient w.r.t. the logits given the softmax output `s` and `dL/ds`:
/// `dz = s ⊙ (ds − ⟨ds, s⟩_row)`.
pub fn softmax_backward<T: Real>(s: &Matrix<T>, ds: &Matrix<T>) -> Matrix<T> {
    let mut dz = Matrix::zeros(s.rows(), s.cols());
    for i in 0..s.rows() {
        let (sr, dr) = (s.row(i), ds.row(i));
        let dot: T = sr.iter().zip(dr).map(|(a, b)| *a * *b).sum();
        for (out, (a, b)) in dz.row_mut(i).iter_mut().zip(sr.iter().zip(dr)) {
            *out = *a * (*b - dot);
        }
    }
    dz
}
