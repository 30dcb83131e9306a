use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{row_softmax, ForwardCache, Layer, Matrix, Mlp, OutputActivation};
use crate::scalar::Real;

use super::model::PAIR_FEATURE_DIM;

/// Below this separation the direction channels are left at zero.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// Per-pair input to the similarity head, one row per (i, j) in row-major order:
/// `[u_S(i) | u_T(j) | ‖p_i − q_j‖ | (p_i − q_j)/‖p_i − q_j‖]`.
#[derive(Clone, Debug)]
pub struct AugmentedTensor<T> {
    pub values: Matrix<T>,
    pub n_source: usize,
    pub n_target: usize,
    /// Original point index of each source / target row.
    pub source_index: Vec<usize>,
    pub target_index: Vec<usize>,
}

impl<T: Real> AugmentedTensor<T> {
    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn entry(&self, i: usize, j: usize) -> &[T] {
        self.values.row(i * self.n_target + j)
    }
}

fn check_shapes<T: Real>(src_pts: &[Vec3<T>], tgt_pts: &[Vec3<T>], src_feat: &Matrix<T>, tgt_feat: &Matrix<T>) -> Result<()> {
    if src_pts.len() != src_feat.rows() || tgt_pts.len() != tgt_feat.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} source points with {} feature rows, {} target points with {} feature rows",
            src_pts.len(),
            src_feat.rows(),
            tgt_pts.len(),
            tgt_feat.rows()
        )));
    }
    if src_feat.cols() != tgt_feat.cols() {
        return Err(Error::ShapeMismatch(format!("feature widths differ: {} vs {}", src_feat.cols(), tgt_feat.cols())));
    }
    if src_pts.is_empty() || tgt_pts.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    Ok(())
}

/// Distance and unit offset channels for one pair.
#[inline]
pub fn euclidean_channels<T: Real>(p: &Vec3<T>, q: &Vec3<T>) -> [T; 4] {
    let d = *p - *q;
    let n = d.norm();
    if n < T::lit(COINCIDENT_TOL) {
        [n, T::zero(), T::zero(), T::zero()]
    } else {
        [n, d.x() / n, d.y() / n, d.z() / n]
    }
}

pub fn build_augmented_tensor<T: Real>(
    src_pts: &[Vec3<T>],
    tgt_pts: &[Vec3<T>],
    src_feat: &Matrix<T>,
    tgt_feat: &Matrix<T>,
) -> Result<AugmentedTensor<T>> {
    check_shapes(src_pts, tgt_pts, src_feat, tgt_feat)?;
    let k = src_feat.cols();
    let (ms, mt) = (src_pts.len(), tgt_pts.len());
    let mut values = Matrix::zeros(ms * mt, 2 * k + 4);
    for i in 0..ms {
        for j in 0..mt {
            let row = values.row_mut(i * mt + j);
            row[..k].copy_from_slice(src_feat.row(i));
            row[k..2 * k].copy_from_slice(tgt_feat.row(j));
            row[2 * k..].copy_from_slice(&euclidean_channels(&src_pts[i], &tgt_pts[j]));
        }
    }
    Ok(AugmentedTensor { values, n_source: ms, n_target: mt, source_index: (0..ms).collect(), target_index: (0..mt).collect() })
}

/// Row-stochastic similarity matrix and the penultimate pair features.
#[derive(Clone, Debug)]
pub struct SimilarityOutput<T> {
    pub logits: Matrix<T>,
    /// `n_source × n_target`, rows sum to 1.
    pub s: Matrix<T>,
    /// `(n_source · n_target) × 32`, row `i · n_target + j`.
    pub f: Matrix<T>,
}

/// Applies the similarity head to every row of an explicit tensor.
pub fn similarity_forward<T: Real>(t: &AugmentedTensor<T>, head: &Mlp<T>) -> Result<SimilarityOutput<T>> {
    if t.channels() != head.input_dim() {
        return Err(Error::ShapeMismatch(format!("tensor has {} channels, head expects {}", t.channels(), head.input_dim())));
    }
    let (out, cache) = head.forward(&t.values)?;
    let logits = Matrix::from_vec(t.n_source, t.n_target, out.into_vec())?;
    let s = row_softmax(&logits);
    let f = cache.hidden(head.layers().len() - 2).clone();
    Ok(SimilarityOutput { logits, s, f })
}

/// Similarity head evaluated without materializing the tensor: the first layer's
/// feature blocks are applied once per point and broadcast over pairs.
/// Keeps what the backward pass needs.
#[derive(Clone, Debug)]
pub struct SimilarityPass<T> {
    pub out: SimilarityOutput<T>,
    src_feat: Matrix<T>,
    tgt_feat: Matrix<T>,
    euclid: Matrix<T>,
    z1: Matrix<T>,
    tail: Mlp<T>,
    tail_cache: ForwardCache<T>,
}

fn tail_of<T: Real>(head: &Mlp<T>) -> Result<Mlp<T>> {
    Mlp::from_layers(head.layers()[1..].to_vec(), head.output_activation())
}

impl<T: Real> SimilarityPass<T> {
    pub fn forward(head: &Mlp<T>, src_pts: &[Vec3<T>], tgt_pts: &[Vec3<T>], src_feat: &Matrix<T>, tgt_feat: &Matrix<T>) -> Result<Self> {
        check_shapes(src_pts, tgt_pts, src_feat, tgt_feat)?;
        let k = src_feat.cols();
        if head.input_dim() != 2 * k + 4 || head.layers().len() != 3 || head.output_activation() != OutputActivation::Identity {
            return Err(Error::ShapeMismatch(format!("similarity head {:?} does not fit {k}-channel features", head.sizes())));
        }
        let w1 = &head.layers()[0];
        let h = w1.weight.rows();
        let (ms, mt) = (src_pts.len(), tgt_pts.len());
        // Per-point projections of the two feature blocks.
        let project = |feat: &Matrix<T>, offset: usize| {
            Matrix::from_fn(feat.rows(), h, |r, o| {
                let w = &w1.weight.row(o)[offset..offset + k];
                feat.row(r).iter().zip(w).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
            })
        };
        let a = project(src_feat, 0);
        let b = project(tgt_feat, k);
        let mut euclid = Matrix::zeros(ms * mt, 4);
        for i in 0..ms {
            for j in 0..mt {
                euclid.row_mut(i * mt + j).copy_from_slice(&euclidean_channels(&src_pts[i], &tgt_pts[j]));
            }
        }
        let wc: Vec<[T; 4]> = (0..h).map(|o| {
            let r = &w1.weight.row(o)[2 * k..];
            [r[0], r[1], r[2], r[3]]
        }).collect();
        let mut z1 = Matrix::zeros(ms * mt, h);
        z1.data_mut().par_chunks_mut(mt * h).enumerate().for_each(|(i, block)| {
            let ai = a.row(i);
            for (j, z) in block.chunks_mut(h).enumerate() {
                let e = euclid.row(i * mt + j);
                let bj = b.row(j);
                for o in 0..h {
                    let c = &wc[o];
                    z[o] = ai[o] + bj[o] + w1.bias[o] + c[0] * e[0] + c[1] * e[1] + c[2] * e[2] + c[3] * e[3];
                }
            }
        });
        let h1 = z1.map(|v| if v > T::zero() { v } else { T::zero() });
        let tail = tail_of(head)?;
        let (y, tail_cache) = tail.forward(&h1)?;
        let logits = Matrix::from_vec(ms, mt, y.into_vec())?;
        let s = row_softmax(&logits);
        let f = tail_cache.hidden(0).clone();
        Ok(Self {
            out: SimilarityOutput { logits, s, f },
            src_feat: src_feat.clone(),
            tgt_feat: tgt_feat.clone(),
            euclid,
            z1,
            tail,
            tail_cache,
        })
    }

    /// Parameter gradients of the similarity head given `dL/dlogits` and,
    /// optionally, `dL/dF` for the penultimate pair features.
    pub fn backward(&self, dlogits: &Matrix<T>, df: Option<&Matrix<T>>) -> Result<Mlp<T>> {
        let (ms, mt) = self.out.logits.shape();
        if dlogits.shape() != (ms, mt) {
            return Err(Error::ShapeMismatch(format!("logit gradient {:?} vs {:?}", dlogits.shape(), (ms, mt))));
        }
        if let Some(df) = df {
            if df.shape() != (ms * mt, PAIR_FEATURE_DIM) {
                return Err(Error::ShapeMismatch(format!("pair-feature gradient {:?}", df.shape())));
            }
        }
        let dy = Matrix::from_vec(ms * mt, 1, dlogits.data().to_vec())?;
        let taps: Vec<(usize, &Matrix<T>)> = df.map(|d| (0, d)).into_iter().collect();
        let (dh1, tail_grads) = self.tail.backward_with_taps_and_input(&self.tail_cache, &dy, &taps)?;

        let (h, k) = (self.z1.cols(), self.src_feat.cols());
        let mut da: Matrix<T> = Matrix::zeros(ms, h);
        let mut db: Matrix<T> = Matrix::zeros(mt, h);
        let mut dbias = vec![T::zero(); h];
        let mut dwc = vec![[T::zero(); 4]; h];
        for i in 0..ms {
            for j in 0..mt {
                let r = i * mt + j;
                let (g, z, e) = (dh1.row(r), self.z1.row(r), self.euclid.row(r));
                for o in 0..h {
                    if z[o] > T::zero() && g[o] != T::zero() {
                        let go = g[o];
                        da.row_mut(i)[o] += go;
                        db.row_mut(j)[o] += go;
                        dbias[o] += go;
                        for c in 0..4 {
                            dwc[o][c] += go * e[c];
                        }
                    }
                }
            }
        }
        let mut dw = Matrix::zeros(h, 2 * k + 4);
        for o in 0..h {
            let row = dw.row_mut(o);
            for i in 0..ms {
                let g = da.get(i, o);
                if g != T::zero() {
                    for (w, f) in row[..k].iter_mut().zip(self.src_feat.row(i)) {
                        *w += g * *f;
                    }
                }
            }
            for j in 0..mt {
                let g = db.get(j, o);
                if g != T::zero() {
                    for (w, f) in row[k..2 * k].iter_mut().zip(self.tgt_feat.row(j)) {
                        *w += g * *f;
                    }
                }
            }
            row[2 * k..].copy_from_slice(&dwc[o]);
        }
        let mut layers = vec![Layer { weight: dw, bias: dbias }];
        layers.extend(tail_grads.layers().iter().cloned());
        Mlp::from_layers(layers, self.tail.output_activation())
    }
}
