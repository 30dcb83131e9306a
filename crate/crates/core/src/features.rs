//! Per-point local shape descriptors behind a pluggable extractor interface.
//! FPFH (Fast Point Feature Histograms) is the shipped implementation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, PointCloud, Vec3};
use crate::linalg::symmetric_eigen;
use crate::neighbor::SpatialIndex;
use crate::nn::Matrix;
use crate::scalar::Real;

/// `N × K` descriptor matrix, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<T> {
    features: Matrix<T>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(features: Matrix<T>) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::InvalidInput("feature matrix has non-finite entries".into()));
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { features: self.features.select_rows(indices) }
    }
}

/// Anything that maps a cloud to one descriptor row per point.
pub trait FeatureExtractor<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;
    /// Descriptor width `K`.
    fn dim(&self) -> usize;
    fn compute(&self, pc: &PointCloud<T>) -> Result<FeatureSet<T>>;
}

/// Runs the extractor and checks its output has one row per point.
pub fn extract<T: Real>(extractor: &dyn FeatureExtractor<T>, pc: &PointCloud<T>) -> Result<FeatureSet<T>> {
    let f = extractor.compute(pc)?;
    if f.len() != pc.len() || f.dim() != extractor.dim() {
        return Err(Error::ShapeMismatch(format!(
            "extractor {} produced {}×{} for {} points (K = {})",
            extractor.name(),
            f.len(),
            f.dim(),
            pc.len(),
            extractor.dim()
        )));
    }
    Ok(f)
}

/// Builds an extractor from its configuration name: `"fpfh"` or `"stub"`.
pub fn extractor_by_name<T: Real>(name: &str, fpfh: FpfhConfig) -> Result<Box<dyn FeatureExtractor<T>>> {
    match name {
        "fpfh" => {
            fpfh.validate()?;
            Ok(Box::new(Fpfh(fpfh)))
        }
        "stub" => Ok(Box::new(ConstantFeatures { dim: fpfh.dim(), value: 1.0 })),
        other => Err(Error::Config(format!("unknown feature extractor {other:?} (expected \"fpfh\" or \"stub\")"))),
    }
}

/// Every row equal to `value`; used to exercise the pipeline without shape cues.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFeatures {
    pub dim: usize,
    pub value: f64,
}

impl<T: Real> FeatureExtractor<T> for ConstantFeatures {
    fn name(&self) -> &'static str {
        "stub"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn compute(&self, pc: &PointCloud<T>) -> Result<FeatureSet<T>> {
        FeatureSet::new(Matrix::from_fn(pc.len(), self.dim, |_, _| T::lit(self.value)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpfhConfig {
    pub normal_radius: f64,
    pub feature_radius: f64,
    pub bins_per_angle: usize,
}

impl Default for FpfhConfig {
    fn default() -> Self {
        Self { normal_radius: 0.1, feature_radius: 0.2, bins_per_angle: 11 }
    }
}

impl FpfhConfig {
    pub fn dim(&self) -> usize {
        3 * self.bins_per_angle
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.normal_radius > 0.0) || !(self.feature_radius > 0.0) {
            return Err(Error::Config("FPFH radii must be positive".into()));
        }
        if self.bins_per_angle < 2 {
            return Err(Error::Config("FPFH needs at least 2 bins per angle".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Fpfh(pub FpfhConfig);

impl<T: Real> FeatureExtractor<T> for Fpfh {
    fn name(&self) -> &'static str {
        "fpfh"
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn compute(&self, pc: &PointCloud<T>) -> Result<FeatureSet<T>> {
        compute_fpfh(pc, &self.0)
    }
}

const NORMAL_FALLBACK_K: usize = 10;
const SWAP_TIE_TOL: f64 = 1e-12;

/// Unit normals from the smallest-eigenvalue eigenvector of each point's radius
/// neighborhood covariance, oriented away from the cloud centroid. Points with
/// fewer than 3 neighbors in `radius` use their 10 nearest neighbors instead.
pub fn estimate_normals<T: Real>(pc: &PointCloud<T>, radius: T) -> Result<Vec<Vec3<T>>> {
    let index = SpatialIndex::new(pc.points());
    estimate_normals_with_index(pc, &index, radius)
}

fn estimate_normals_with_index<T: Real>(pc: &PointCloud<T>, index: &SpatialIndex<T>, radius: T) -> Result<Vec<Vec3<T>>> {
    if pc.len() < 3 {
        return Err(Error::InvalidInput(format!("normal estimation needs at least 3 points, got {}", pc.len())));
    }
    let centroid = pc.centroid();
    pc.points()
        .par_iter()
        .map(|p| {
            let mut hood = index.radius_neighbors(p, radius)?;
            if hood.len() < 3 {
                hood = index.knn(p, NORMAL_FALLBACK_K.min(pc.len()))?;
            }
            let pts: Vec<Vec3<T>> = hood.iter().map(|n| pc.get(n.index)).collect();
            Ok(orient(plane_normal(&pts), *p - centroid))
        })
        .collect()
}

fn plane_normal<T: Real>(pts: &[Vec3<T>]) -> Vec3<T> {
    let inv = T::one() / T::from_usize_lossy(pts.len());
    let mean = pts.iter().fold(Vec3::zero(), |a, p| a + *p).scale(inv);
    let mut cov = Mat3::zero();
    for p in pts {
        let d = *p - mean;
        cov = cov + Mat3::outer(&d, &d);
    }
    let (_, vecs) = symmetric_eigen(&cov.scale(inv));
    let n = vecs.column(0);
    n.scale(T::one() / n.norm())
}

fn orient<T: Real>(n: Vec3<T>, outward: Vec3<T>) -> Vec3<T> {
    let d = n.dot(&outward);
    if d.abs() > T::lit(1e-9) * outward.norm() {
        return if d < T::zero() { -n } else { n };
    }
    // No usable viewpoint: make the largest-magnitude component positive.
    let k = (0..3).fold(0, |b, k| if n.0[k].abs() > n.0[b].abs() { k } else { b });
    if n.0[k] < T::zero() {
        -n
    } else {
        n
    }
}

/// Darboux-frame pair features `(α, φ, θ)` of a source/target oriented point pair,
/// with the source chosen as the point whose normal is more aligned with the
/// connecting line. `None` when the pair is degenerate.
pub fn pair_features<T: Real>(p1: &Vec3<T>, n1: &Vec3<T>, p2: &Vec3<T>, n2: &Vec3<T>) -> Option<[T; 3]> {
    let mut dp = *p2 - *p1;
    let dist = dp.norm();
    if dist == T::zero() {
        return None;
    }
    let a1 = n1.dot(&dp) / dist;
    let a2 = n2.dot(&dp) / dist;
    // Swap when acos(|a1|) > acos(|a2|). Near-ties (common when two points share a
    // neighborhood and so have identical normals) keep the given order.
    let (ns, nt, phi) = if a2.abs() - a1.abs() > T::lit(SWAP_TIE_TOL) {
        dp = -dp;
        (*n2, *n1, -a2)
    } else {
        (*n1, *n2, a1)
    };
    let v = dp.cross(&ns);
    let v_norm = v.norm();
    if v_norm == T::zero() {
        return None;
    }
    let v = v.scale(T::one() / v_norm);
    let w = ns.cross(&v);
    let alpha = v.dot(&nt);
    // θ sits on the ±π cut when w·nt vanishes; rounding noise must not pick the side.
    let y = w.dot(&nt);
    let y = if y.abs() <= T::lit(SWAP_TIE_TOL) { T::zero() } else { y };
    let theta = y.atan2(ns.dot(&nt));
    Some([alpha, phi, theta])
}

fn bin_of<T: Real>(value: T, lo: T, hi: T, bins: usize) -> usize {
    let b = ((value - lo) / (hi - lo) * T::from_usize_lossy(bins)).floor();
    if b < T::zero() {
        0
    } else {
        b.to_usize().unwrap_or(bins - 1).min(bins - 1)
    }
}

fn normalize_subhistograms<T: Real>(h: &mut [T], bins: usize) {
    let hundred = T::lit(100.0);
    for sub in h.chunks_mut(bins) {
        let s: T = sub.iter().copied().sum();
        if s > T::zero() {
            let f = hundred / s;
            sub.iter_mut().for_each(|v| *v *= f);
        }
    }
}

/// Two-pass FPFH with `3·bins_per_angle` columns laid out `[α | φ | θ]`;
/// each non-empty sub-histogram sums to 100.
pub fn compute_fpfh<T: Real>(pc: &PointCloud<T>, cfg: &FpfhConfig) -> Result<FeatureSet<T>> {
    cfg.validate()?;
    if pc.len() < 5 {
        return Err(Error::InvalidInput(format!("FPFH needs at least 5 points, got {}", pc.len())));
    }
    let bins = cfg.bins_per_angle;
    let k = cfg.dim();
    let index = SpatialIndex::new(pc.points());
    let normals = estimate_normals_with_index(pc, &index, T::lit(cfg.normal_radius))?;
    let radius = T::lit(cfg.feature_radius);

    let hoods: Vec<Vec<(usize, T)>> = pc
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(index
                .radius_neighbors(p, radius)?
                .into_iter()
                .filter(|n| n.index != i && n.distance > T::zero())
                .map(|n| (n.index, n.distance))
                .collect())
        })
        .collect::<Result<_>>()?;
    if hoods.iter().all(Vec::is_empty) {
        return Err(Error::InvalidInput(format!("feature radius {} leaves every point without neighbors", cfg.feature_radius)));
    }

    let pi = T::PI();
    let spfh: Vec<Vec<T>> = (0..pc.len())
        .into_par_iter()
        .map(|i| {
            let mut h = vec![T::zero(); k];
            let (p, n) = (pc.get(i), normals[i]);
            for &(j, _) in &hoods[i] {
                if let Some([alpha, phi, theta]) = pair_features(&p, &n, &pc.get(j), &normals[j]) {
                    h[bin_of(alpha, -T::one(), T::one(), bins)] += T::one();
                    h[bins + bin_of(phi, -T::one(), T::one(), bins)] += T::one();
                    h[2 * bins + bin_of(theta, -pi, pi, bins)] += T::one();
                }
            }
            normalize_subhistograms(&mut h, bins);
            h
        })
        .collect();

    let rows: Vec<T> = (0..pc.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut h = spfh[i].clone();
            for &(j, d) in &hoods[i] {
                let w = T::one() / d;
                h.iter_mut().zip(&spfh[j]).for_each(|(a, b)| *a += w * *b);
            }
            normalize_subhistograms(&mut h, bins);
            h
        })
        .collect();
    FeatureSet::new(Matrix::from_vec(pc.len(), k, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{random_rotation, RigidTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(rng: &mut ChaCha8Rng, n: usize) -> PointCloud<f64> {
        let pts = (0..n)
            .map(|_| loop {
                let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let r = v.norm();
                if r > 0.1 && r <= 1.0 {
                    break v.scale(1.0 / r);
                }
            })
            .collect();
        PointCloud::new(pts).unwrap()
    }

    /// Bumpy closed surface so FPFH rows differ from point to point.
    fn blob(rng: &mut ChaCha8Rng, n: usize) -> PointCloud<f64> {
        let s = sphere(rng, n);
        PointCloud::new(
            s.points()
                .iter()
                .map(|p| p.scale(1.0 + 0.25 * (3.0 * p.x()).sin() * (2.0 * p.y()).cos() + 0.1 * p.z() * p.z()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn planar_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let pts: Vec<Vec3<f64>> = (0..300).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0)).collect();
        let pc = PointCloud::new(pts).unwrap();
        let normals = estimate_normals(&pc, 0.2).unwrap();
        let first = normals[0].z().signum();
        for n in &normals {
            assert!((n.z().abs() - 1.0).abs() < 1e-12);
            assert_eq!(n.z().signum(), first);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let pc = sphere(&mut rng, 10000);
        let normals = estimate_normals(&pc, 0.15).unwrap();
        for (p, n) in pc.points().iter().zip(&normals) {
            let cos = n.dot(p).abs() / p.norm();
            assert!(cos > 5f64.to_radians().cos(), "normal off by {}°", cos.acos().to_degrees());
            assert!(n.dot(p) > 0.0, "normal should point outward");
        }
    }

    #[test]
    fn too_small_clouds_rejected() {
        let pc = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert!(estimate_normals(&pc, 0.5).is_err());
        let pc = PointCloud::from_arrays(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!(compute_fpfh(&pc, &FpfhConfig::default()).is_err());
    }

    #[test]
    fn isolated_points_are_an_error_when_all_isolated() {
        let pts: Vec<_> = (0..10).map(|i| Vec3::new(i as f64 * 10.0, (i * i) as f64, 0.5 * i as f64)).collect();
        let pc = PointCloud::new(pts).unwrap();
        assert!(compute_fpfh(&pc, &FpfhConfig::default()).is_err());
    }

    #[test]
    fn fpfh_shape_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        let pc = blob(&mut rng, 768);
        let f = compute_fpfh(&pc, &FpfhConfig::default()).unwrap();
        assert_eq!((f.len(), f.dim()), (768, 33));
        for i in 0..f.len() {
            for sub in f.row(i).chunks(11) {
                assert!(sub.iter().all(|v| *v >= 0.0));
                let s: f64 = sub.iter().sum();
                assert!(s == 0.0 || (s - 100.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fpfh_invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let pc = blob(&mut rng, 600);
        let t = RigidTransform::from_parts_unchecked(random_rotation(&mut rng), Vec3::new(0.3, -0.2, 0.4));
        let a = compute_fpfh(&pc, &FpfhConfig::default()).unwrap();
        let b = compute_fpfh(&t.apply(&pc), &FpfhConfig::default()).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-6);
    }

    #[test]
    fn fpfh_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(84);
        let pc = blob(&mut rng, 400);
        let mut perm: Vec<usize> = (0..400).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted = pc.select(&perm).unwrap();
        let a = compute_fpfh(&pc, &FpfhConfig::default()).unwrap();
        let b = compute_fpfh(&permuted, &FpfhConfig::default()).unwrap();
        assert!(a.select(&perm).matrix().max_abs_diff(b.matrix()) < 1e-9);
    }

    #[test]
    fn extractor_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(85);
        let pc = blob(&mut rng, 768);
        let fpfh = extractor_by_name::<f64>("fpfh", FpfhConfig::default()).unwrap();
        let f = extract(fpfh.as_ref(), &pc).unwrap();
        assert_eq!((f.len(), f.dim()), (768, 33));
        let stub = extractor_by_name::<f64>("stub", FpfhConfig::default()).unwrap();
        let s = extract(stub.as_ref(), &pc).unwrap();
        assert!((1..s.len()).all(|i| s.row(i) == s.row(0)));
        assert!(matches!(extractor_by_name::<f64>("gnn", FpfhConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = FpfhConfig { bins_per_angle: 1, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = FpfhConfig { feature_radius: 0.0, ..Default::default() };
        assert!(extractor_by_name::<f64>("fpfh", cfg).is_err());
    }

    #[test]
    fn pair_features_are_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(86);
        for _ in 0..100 {
            let r: Mat3<f64> = random_rotation(&mut rng);
            let s = sphere(&mut rng, 4);
            let (p1, n1, p2, n2) = (s.get(0), s.get(1), s.get(2), s.get(3));
            let a = pair_features(&p1, &n1, &p2, &n2).unwrap();
            let b = pair_features(&(r * p1), &(r * n1), &(r * p2), &(r * n2)).unwrap();
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_on_branch_cut_is_stable_under_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(505);
        let pc = crate::data::synth_primitive(&"torus:0.7,0.25".parse().unwrap(), 800, &mut rng).unwrap();
        let t = RigidTransform::from_parts_unchecked(Mat3::identity(), Vec3::new(0.7, -0.4, 0.9));
        let a = compute_fpfh(&pc, &FpfhConfig::default()).unwrap();
        let b = compute_fpfh(&t.apply(&pc), &FpfhConfig::default()).unwrap();
        assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-9);
    }
}
