use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::derive_seed;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::geometry::{PointCloud, RigidTransform, Vec3};
use crate::nn::{softmax_backward, AdamConfig, AdamState, Matrix, Mlp};
use crate::scalar::Real;

use super::elimination::{pick_correspondences, HybridPass};
use super::losses::{bce_loss, hybrid_labels, matching_loss, negative_entropy_loss};
use super::model::IdamModel;
use super::register::procrustes_or_identity;
use super::sampling::balanced_sample;
use super::similarity::SimilarityPass;

/// A training pair with its descriptors computed once up front.
#[derive(Clone, Debug)]
pub struct TrainPair<T> {
    pub source: PointCloud<T>,
    pub target: PointCloud<T>,
    pub gt: RigidTransform<T>,
    pub source_features: FeatureSet<T>,
    pub target_features: FeatureSet<T>,
}

/// Points and prepared features entering one loss evaluation.
#[derive(Clone, Debug)]
pub struct SampledPair<T> {
    pub source: Vec<Vec3<T>>,
    /// `source` mapped by the ground truth.
    pub source_gt: Vec<Vec3<T>>,
    pub target: Vec<Vec3<T>>,
    pub source_features: Matrix<T>,
    pub target_features: Matrix<T>,
}

impl<T: Real> SampledPair<T> {
    pub fn from_indices(pair: &TrainPair<T>, model: &IdamModel<T>, src_idx: &[usize], tgt_idx: &[usize]) -> Result<Self> {
        let source: Vec<Vec3<T>> = src_idx.iter().map(|&i| pair.source.get(i)).collect();
        Ok(Self {
            source_gt: source.iter().map(|p| pair.gt.apply_point(p)).collect(),
            source,
            target: tgt_idx.iter().map(|&j| pair.target.get(j)).collect(),
            source_features: model.prepare_features(&pair.source_features)?.select_rows(src_idx),
            target_features: model.prepare_features(&pair.target_features)?.select_rows(tgt_idx),
        })
    }
}

/// Quantities that depend on parameters only through non-differentiable steps
/// (Procrustes estimates and argmax labels). Reusing them holds those steps fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenSteps<T> {
    /// Source positions entering each iteration.
    pub positions: Vec<Vec<Vec3<T>>>,
    pub labels: Vec<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct PairLoss<T> {
    /// Mean over iterations.
    pub matching: T,
    /// First iteration only.
    pub negative_entropy: T,
    /// Mean over iterations.
    pub hybrid: T,
    pub grads: IdamModel<T>,
    pub frozen: FrozenSteps<T>,
}

impl<T: Real> PairLoss<T> {
    pub fn total(&self) -> T {
        self.matching + self.negative_entropy + self.hybrid
    }
}

/// Total loss and its parameter gradients on one sampled pair.
pub fn pair_loss<T: Real>(model: &IdamModel<T>, pair: &SampledPair<T>, frozen: Option<&FrozenSteps<T>>) -> Result<PairLoss<T>> {
    let n_iter = model.config.n_iter;
    let inv_n = T::one() / T::from_usize_lossy(n_iter);
    let r = T::lit(model.config.match_radius);
    let mut grads = model.zeros_like();
    let mut cur = pair.source.clone();
    let mut record = FrozenSteps { positions: Vec::with_capacity(n_iter), labels: Vec::with_capacity(n_iter) };
    let (mut lm, mut ln, mut lh) = (T::zero(), T::zero(), T::zero());
    for n in 0..n_iter {
        if let Some(f) = frozen {
            cur = f.positions[n].clone();
        }
        let sim = SimilarityPass::forward(&model.similarity, &cur, &pair.target, &pair.source_features, &pair.target_features)?;
        let s = &sim.out.s;

        let (m_loss, ds) = matching_loss(s, &pair.source_gt, &pair.target, r)?;
        lm += m_loss * inv_n;
        let dlogits = softmax_backward(s, &ds.scale(inv_n));

        let hybrid = HybridPass::forward(&sim.out.f, pair.target.len(), &model.validity)?;
        let labels = match frozen {
            Some(f) => f.labels[n].clone(),
            None => hybrid_labels(s, &pair.source_gt, &pair.target, r)?,
        };
        let (h_loss, dv) = bce_loss(&hybrid.v, &labels)?;
        lh += h_loss * inv_n;
        let dv: Vec<T> = dv.into_iter().map(|g| g * inv_n).collect();
        let (g_val, df) = hybrid.backward(&model.validity, &dv)?;
        grads.validity.add_assign(&g_val)?;
        grads.similarity.add_assign(&sim.backward(&dlogits, Some(&df))?)?;

        if n == 0 {
            let (sig, cache) = model.significance.forward(&pair.source_features)?;
            let (e_loss, dsig) = negative_entropy_loss(sig.data(), s)?;
            ln = e_loss;
            let (_, g_sig) = model.significance.backward(&cache, &Matrix::from_vec(dsig.len(), 1, dsig)?)?;
            grads.significance.add_assign(&g_sig)?;
        }

        record.positions.push(cur.clone());
        record.labels.push(labels);
        let (matched, _) = pick_correspondences(s, &pair.target)?;
        let (step, _) = procrustes_or_identity(&cur, matched, hybrid.w);
        cur = cur.iter().map(|p| step.apply_point(p)).collect();
    }
    Ok(PairLoss { matching: lm, negative_entropy: ln, hybrid: lh, grads, frozen: record })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// The learning rate is multiplied by `lr_decay_factor` after this many epochs.
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Points sampled per cloud; defaults to the model's keep count.
    pub sample_size: Option<usize>,
    /// Epochs already completed (when resuming); numbering and the schedule continue from here.
    pub start_epoch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 40, adam: AdamConfig::default(), lr_decay_epoch: 30, lr_decay_factor: 0.1, seed: 0, sample_size: None, start_epoch: 0 }
    }
}

impl TrainConfig {
    /// Learning rate in effect during 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.lr_decay_epoch { self.adam.lr * self.lr_decay_factor } else { self.adam.lr }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub match_loss: f64,
    pub neg_entropy_loss: f64,
    pub hybrid_loss: f64,
    pub wall_seconds: f64,
}

/// Balanced sample of one pair for the given epoch, deterministic in `seed`.
pub fn sample_pair<T: Real>(model: &IdamModel<T>, pair: &TrainPair<T>, cfg: &TrainConfig, stream: u64) -> Result<SampledPair<T>> {
    let m = cfg.sample_size.unwrap_or_else(|| model.config.keep_count(pair.source.len()));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream));
    let b = balanced_sample(&pair.source, &pair.target, &pair.gt, m, T::lit(model.config.match_radius), &mut rng)?;
    SampledPair::from_indices(pair, model, &b.source_index, &b.target_index)
}

fn finite<T: Real>(x: T) -> bool {
    x.is_finite()
}

/// Adam on every pair in a shuffled order each epoch (batch size 1).
/// `on_epoch` sees each epoch's mean losses as soon as it finishes.
pub fn train<T: Real>(
    model: &mut IdamModel<T>,
    pairs: &[TrainPair<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLosses, &IdamModel<T>),
) -> Result<Vec<EpochLosses>> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    let mut states: Vec<AdamState<T>> = model.heads().iter().map(|h| AdamState::new(h)).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX - cfg.start_epoch as u64));
    for epoch in cfg.start_epoch + 1..=cfg.start_epoch + cfg.epochs {
        let start = Instant::now();
        let adam = AdamConfig { lr: cfg.lr_at(epoch), ..cfg.adam };
        order.shuffle(&mut shuffle_rng);
        let (mut sm, mut sn, mut sh) = (0.0, 0.0, 0.0);
        for &p in &order {
            let stream = ((epoch - 1) * pairs.len() + p) as u64;
            let sample = sample_pair(model, &pairs[p], cfg, stream)?;
            let out = pair_loss(model, &sample, None)?;
            let (m, n, h) = (out.matching.to_f64_lossy(), out.negative_entropy.to_f64_lossy(), out.hybrid.to_f64_lossy());
            if !(finite(out.total()) && out.grads.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    pair: p,
                    detail: format!("matching {m}, negative entropy {n}, hybrid {h}, finite gradients {}", out.grads.is_finite()),
                });
            }
            sm += m;
            sn += n;
            sh += h;
            let grads: [&Mlp<T>; 3] = out.grads.heads();
            for ((head, state), g) in model.heads_mut().into_iter().zip(states.iter_mut()).zip(grads) {
                state.step(&adam, head, g)?;
            }
        }
        let k = pairs.len() as f64;
        let entry = EpochLosses {
            epoch,
            match_loss: sm / k,
            neg_entropy_loss: sn / k,
            hybrid_loss: sh / k,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry, model);
        log.push(entry);
    }
    Ok(log)
}
