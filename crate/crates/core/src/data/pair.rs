use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{random_transform, Vec3};
use crate::{Cloud, Transform};

use super::manifest::{ManifestEntry, Split};

/// Centers on the centroid and scales so the farthest point has norm 1.
pub fn normalize_unit_sphere(points: Vec<Vec3<f64>>) -> Result<Cloud> {
    let pc = Cloud::new(points)?;
    let c = pc.centroid();
    let centered: Vec<Vec3<f64>> = pc.points().iter().map(|p| *p - c).collect();
    let radius = centered.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    Cloud::new(centered.into_iter().map(|p| p.scale(1.0 / radius)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    pub sigma: f64,
    pub clip: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma: 0.01, clip: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairConfig {
    pub rot_max_deg: f64,
    pub trans_max: f64,
    /// Points kept per cloud when cropping to partial overlap.
    pub crop: Option<usize>,
    pub far_distance: f64,
    pub noise: Option<NoiseConfig>,
}

impl Default for PairConfig {
    fn default() -> Self {
        Self { rot_max_deg: 45.0, trans_max: 0.5, crop: Some(768), far_distance: 5.0, noise: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub shape_id: String,
    pub seed: u64,
    pub cropped: bool,
    pub noisy: bool,
}

#[derive(Clone, Debug)]
pub struct RegistrationPair {
    pub source: Cloud,
    pub target: Cloud,
    pub gt: Transform,
    pub provenance: Provenance,
}

impl RegistrationPair {
    pub fn with_origin(mut self, shape_id: impl Into<String>, seed: u64) -> Self {
        self.provenance.shape_id = shape_id.into();
        self.provenance.seed = seed;
        self
    }
}

/// Indices of the `k` points nearest `far`, ties to the lower index, returned ascending.
fn nearest_indices(points: &[Vec3<f64>], far: &Vec3<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (p.distance_squared(far), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = order[..k].iter().map(|&(_, i)| i).collect();
    keep.sort_unstable();
    keep
}

fn add_noise<R: Rng + ?Sized>(pc: &Cloud, noise: &NoiseConfig, rng: &mut R) -> Result<Cloud> {
    let normal = Normal::new(0.0, noise.sigma).map_err(|e| Error::InvalidInput(format!("noise sigma: {e}")))?;
    let pts = pc
        .points()
        .iter()
        .map(|p| {
            let mut q = *p;
            for k in 0..3 {
                q.0[k] += normal.sample(rng).clamp(-noise.clip, noise.clip);
            }
            q
        })
        .collect();
    Cloud::new(pts)
}

/// Source is `pc`, target its image under a random rigid motion, optionally both
/// cropped towards a shared far point and perturbed with clipped Gaussian noise.
/// Draw order: transform, crop direction, source noise, target noise.
pub fn make_pair<R: Rng + ?Sized>(pc: &Cloud, cfg: &PairConfig, rng: &mut R) -> Result<RegistrationPair> {
    if let Some(k) = cfg.crop {
        if k == 0 || k > pc.len() {
            return Err(Error::OutOfRange { what: "crop size", value: k, min: 1, max: pc.len() });
        }
    }
    let gt = random_transform(cfg.rot_max_deg, cfg.trans_max, rng);
    let mut source = pc.clone();
    let mut target = gt.apply(pc);
    if let Some(k) = cfg.crop {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let s = (1.0 - z * z).max(0.0).sqrt();
        let far_t = Vec3::new(s * phi.cos(), s * phi.sin(), z).scale(cfg.far_distance);
        let far_s = gt.inverse().apply_point(&far_t);
        source = source.select(&nearest_indices(source.points(), &far_s, k))?;
        target = target.select(&nearest_indices(target.points(), &far_t, k))?;
    }
    if let Some(noise) = &cfg.noise {
        source = add_noise(&source, noise, rng)?;
        target = add_noise(&target, noise, rng)?;
    }
    Ok(RegistrationPair {
        source,
        target,
        gt,
        provenance: Provenance { shape_id: String::new(), seed: 0, cropped: cfg.crop.is_some(), noisy: cfg.noise.is_some() },
    })
}

/// SplitMix64 finalizer over `base` and a stream index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pair generator so pairs can be produced independently and in any order.
pub fn pair_seed(base: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, index as u64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    UnseenShapes,
    UnseenCategories,
    Noisy,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Self::UnseenShapes => "unseen-shapes",
            Self::UnseenCategories => "unseen-categories",
            Self::Noisy => "noisy",
        }
    }

    pub fn noisy(self) -> bool {
        self == Self::Noisy
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Self::UnseenShapes, Self::UnseenCategories, Self::Noisy]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol {s:?} (expected unseen-shapes, unseen-categories or noisy)")))
    }
}

/// Entries used for `split` under `protocol`. Unseen-categories keeps the first half
/// of the categories (in order of first appearance, rounded up) for training and the
/// rest for testing; the other protocols follow the split tags.
pub fn protocol_entries(entries: &[ManifestEntry], protocol: Protocol, split: Split) -> Vec<ManifestEntry> {
    match protocol {
        Protocol::UnseenShapes | Protocol::Noisy => entries.iter().filter(|e| e.split == split).cloned().collect(),
        Protocol::UnseenCategories => {
            let mut cats: Vec<&str> = Vec::new();
            for e in entries {
                if !cats.contains(&e.category.as_str()) {
                    cats.push(&e.category);
                }
            }
            let train_cats = &cats[..cats.len().div_ceil(2)];
            entries
                .iter()
                .filter(|e| e.split == split && (train_cats.contains(&e.category.as_str()) == (split == Split::Train)))
                .cloned()
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_primitive, PrimitiveSpec, ShapeSource};

    fn cloud(seed: u64) -> Cloud {
        let spec: PrimitiveSpec = "box:1,0.6,0.3".parse().unwrap();
        synth_primitive(&spec, 1024, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn crop_sizes() {
        let pc = cloud(1);
        let pair = make_pair(&pc, &PairConfig::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(pair.source.len(), 768);
        assert_eq!(pair.target.len(), 768);
        assert!(pair.provenance.cropped && !pair.provenance.noisy);
    }

    #[test]
    fn full_overlap_is_exact_image() {
        let pc = cloud(3);
        let cfg = PairConfig { crop: None, ..Default::default() };
        let pair = make_pair(&pc, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(pair.source.points(), pc.points());
        for (s, t) in pair.source.points().iter().zip(pair.target.points()) {
            assert!(pair.gt.apply_point(s).distance(t) < 1e-9);
        }
        assert!(pair.gt.rotation_error_deg(&Transform::identity()) <= 45.0 * 3f64.sqrt());
    }

    #[test]
    fn cropped_source_images_lie_in_target_cloud() {
        let pc = cloud(5);
        for seed in 0..10 {
            let pair = make_pair(&pc, &PairConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let full = pair.gt.apply(&pc);
            let idx = crate::neighbor::SpatialIndex::new(full.points());
            let tidx = crate::neighbor::SpatialIndex::new(pair.target.points());
            let mut shared = 0;
            for s in pair.source.points() {
                let q = pair.gt.apply_point(s);
                assert!(idx.nearest(&q).unwrap().distance < 1e-9);
                shared += usize::from(tidx.nearest(&q).unwrap().distance < 1e-9);
            }
            // Same far point in both frames: the retained regions coincide.
            assert!(shared >= 760, "{shared}");
        }
    }

    #[test]
    fn noise_is_clipped() {
        let pc = cloud(6);
        let cfg = PairConfig { crop: None, noise: Some(NoiseConfig::default()), ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_dev: f64 = 0.0;
        let mut draws = 0;
        while draws < 1_000_000 {
            let pair = make_pair(&pc, &cfg, &mut rng).unwrap();
            for (p, s) in pc.points().iter().zip(pair.source.points()) {
                for k in 0..3 {
                    max_dev = max_dev.max((p.0[k] - s.0[k]).abs());
                }
            }
            let clean = pair.gt.apply(&pc);
            for (c, t) in clean.points().iter().zip(pair.target.points()) {
                for k in 0..3 {
                    max_dev = max_dev.max((c.0[k] - t.0[k]).abs());
                }
            }
            draws += 6 * pc.len();
        }
        assert!(max_dev <= 0.05 + 1e-12, "{max_dev}");
        assert!(max_dev > 0.03);
    }

    #[test]
    fn bit_reproducible() {
        let pc = cloud(8);
        let cfg = PairConfig { noise: Some(NoiseConfig::default()), ..Default::default() };
        let a = make_pair(&pc, &cfg, &mut pair_seed(9, 3)).unwrap();
        let b = make_pair(&pc, &cfg, &mut pair_seed(9, 3)).unwrap();
        assert_eq!(a.source.points(), b.source.points());
        assert_eq!(a.target.points(), b.target.points());
        assert_eq!(a.gt.to_row_major(), b.gt.to_row_major());
        let c = make_pair(&pc, &cfg, &mut pair_seed(9, 4)).unwrap();
        assert_ne!(a.gt.to_row_major(), c.gt.to_row_major());
    }

    #[test]
    fn crop_larger_than_cloud() {
        let pc = cloud(10);
        let cfg = PairConfig { crop: Some(2000), ..Default::default() };
        assert!(make_pair(&pc, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn protocol_splits() {
        let mk = |split, cat: &str| ManifestEntry { split, category: cat.into(), shape: ShapeSource::Mesh(format!("{cat}.off").into()) };
        let entries = vec![
            mk(Split::Train, "a"),
            mk(Split::Test, "a"),
            mk(Split::Train, "b"),
            mk(Split::Test, "b"),
            mk(Split::Train, "c"),
            mk(Split::Test, "c"),
        ];
        let cats = |v: Vec<ManifestEntry>| v.into_iter().map(|e| e.category).collect::<Vec<_>>();
        assert_eq!(cats(protocol_entries(&entries, Protocol::UnseenShapes, Split::Train)), ["a", "b", "c"]);
        assert_eq!(cats(protocol_entries(&entries, Protocol::UnseenCategories, Split::Train)), ["a", "b"]);
        assert_eq!(cats(protocol_entries(&entries, Protocol::UnseenCategories, Split::Test)), ["c"]);
        assert!("clean".parse::<Protocol>().is_err());
        assert_eq!("noisy".parse::<Protocol>().unwrap(), Protocol::Noisy);
    }
}
