use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::Cloud;

use super::manifest::{ManifestEntry, ShapeSource, Split};
use super::mesh::{load_mesh, sample_surface};
use super::pair::pair_seed;
use super::primitive::{synth_primitive, PrimitiveKind, PrimitiveSpec};

/// A primitive of the given kind with randomized proportions.
pub fn random_primitive<R: Rng + ?Sized>(kind: PrimitiveKind, rng: &mut R) -> PrimitiveSpec {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let dims = match kind {
        PrimitiveKind::Sphere => vec![],
        PrimitiveKind::Box => vec![u(0.4, 1.2), u(0.4, 1.2), u(0.4, 1.2)],
        PrimitiveKind::Cylinder => vec![u(0.3, 0.7), u(0.8, 2.0)],
        PrimitiveKind::Torus => vec![1.0, u(0.15, 0.45)],
    };
    PrimitiveSpec::new(kind, dims).expect("ranges produce valid primitives")
}

/// `n_train + n_test` primitive shapes cycling through `kinds`, categorized by kind.
pub fn synthetic_manifest(kinds: &[PrimitiveKind], n_train: usize, n_test: usize, seed: u64) -> Vec<ManifestEntry> {
    let mut rng = pair_seed(seed, usize::MAX);
    (0..n_train + n_test)
        .map(|i| {
            let kind = kinds[i % kinds.len()];
            ManifestEntry {
                split: if i < n_train { Split::Train } else { Split::Test },
                category: kind.name().to_string(),
                shape: ShapeSource::Primitive(random_primitive(kind, &mut rng)),
            }
        })
        .collect()
}

/// Samples `n` normalized surface points from a manifest shape. Relative mesh paths
/// resolve against `base`.
pub fn load_shape<R: Rng + ?Sized>(shape: &ShapeSource, base: &Path, n: usize, rng: &mut R) -> Result<Cloud> {
    match shape {
        ShapeSource::Primitive(spec) => synth_primitive(spec, n, rng),
        ShapeSource::Mesh(p) => sample_surface(&load_mesh(base.join(p))?, n, rng),
    }
}
