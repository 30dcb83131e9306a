//! Point-to-point ICP, optionally trimmed.

use crate::error::{Error, Result};
use crate::geometry::{compose, PointCloud, RigidTransform, Vec3};
use crate::neighbor::SpatialIndex;
use crate::procrustes::{solve_weighted_procrustes, CorrespondenceSet};
use crate::registration::{IterationRecord, RegistrationResult};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcpConfig {
    pub max_iterations: usize,
    /// Stop once an update rotates by less than this (radians) and translates by less than this.
    pub tolerance: f64,
    /// Fraction of correspondences with the largest residuals dropped each step.
    pub trim_fraction: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-6, trim_fraction: 0.0 }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::Config(format!("trim_fraction must lie in [0, 1), got {}", self.trim_fraction)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpTrace<T> {
    /// Mean squared distance of the correspondences found at each iteration.
    pub objectives: Vec<T>,
    pub converged: bool,
}

pub fn icp_register<T: Real>(src: &PointCloud<T>, tgt: &PointCloud<T>, cfg: &IcpConfig) -> Result<RegistrationResult<T>> {
    Ok(icp_register_traced(src, tgt, cfg)?.0)
}

pub fn icp_register_traced<T: Real>(src: &PointCloud<T>, tgt: &PointCloud<T>, cfg: &IcpConfig) -> Result<(RegistrationResult<T>, IcpTrace<T>)> {
    cfg.validate()?;
    if src.len() < 3 || tgt.len() < 3 {
        return Err(Error::InvalidInput(format!("ICP needs at least 3 points per cloud, got {} and {}", src.len(), tgt.len())));
    }
    let index = SpatialIndex::new(tgt.points());
    let tol = T::lit(cfg.tolerance);
    let n_keep = ((1.0 - cfg.trim_fraction) * src.len() as f64).ceil().max(3.0) as usize;
    let mut cur: Vec<Vec3<T>> = src.points().to_vec();
    let mut total = RigidTransform::identity();
    let mut iterations = Vec::new();
    let mut trace = IcpTrace { objectives: Vec::new(), converged: false };
    for _ in 0..cfg.max_iterations {
        let nn: Vec<(usize, T)> = cur
            .iter()
            .map(|p| {
                let n = index.nearest(p).expect("target is nonempty");
                (n.index, n.distance * n.distance)
            })
            .collect();
        let mut active: Vec<usize> = (0..cur.len()).collect();
        if n_keep < cur.len() {
            active.sort_by(|&a, &b| nn[a].1.partial_cmp(&nn[b].1).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
            active.truncate(n_keep);
            active.sort_unstable();
        }
        let objective = active.iter().map(|&i| nn[i].1).sum::<T>() / T::from_usize_lossy(active.len());
        if cfg.trim_fraction == 0.0 {
            if let Some(&prev) = trace.objectives.last() {
                // The alternating minimization can never raise the objective.
                debug_assert!(objective <= prev + T::lit(1e-12) * (T::one() + prev), "ICP objective rose from {prev} to {objective}");
            }
        }
        trace.objectives.push(objective);
        let corr = CorrespondenceSet::uniform(active.iter().map(|&i| cur[i]).collect(), active.iter().map(|&i| tgt.get(nn[i].0)).collect())?;
        let step = solve_weighted_procrustes(&corr)?;
        cur = cur.iter().map(|p| step.apply_point(p)).collect();
        total = compose(&step, &total);
        let small = step.rotation.rotation_angle() < tol && step.translation.norm() < tol;
        iterations.push(IterationRecord {
            transform: step,
            correspondences: active.iter().map(|&i| (i, nn[i].0)).collect(),
            weights: vec![T::one() / T::from_usize_lossy(active.len()); active.len()],
            degenerate: false,
        });
        if small {
            trace.converged = true;
            break;
        }
    }
    Ok((RegistrationResult { transform: total, iterations, scores: None }, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_primitive, PrimitiveSpec};
    use crate::geometry::{euler_deg_to_rotation, Mat3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud() -> PointCloud<f64> {
        synth_primitive(&"box:1,0.6,0.35".parse::<PrimitiveSpec>().unwrap(), 800, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn identical_clouds() {
        let pc = cloud();
        let (res, trace) = icp_register_traced(&pc, &pc, &IcpConfig::default()).unwrap();
        assert!(res.transform.rotation.max_abs_diff(&Mat3::identity()) < 1e-9);
        assert!(res.transform.translation.norm() < 1e-9);
        assert!(res.iterations.len() <= 2);
        assert!(trace.converged);
    }

    #[test]
    fn small_rotation_converges() {
        let pc = cloud();
        let gt = RigidTransform::from_parts_unchecked(euler_deg_to_rotation([5.0, 0.0, 0.0]), Vec3::new(0.02, -0.01, 0.0));
        let tgt = gt.apply(&pc);
        let (res, trace) = icp_register_traced(&pc, &tgt, &IcpConfig::default()).unwrap();
        assert!(res.transform.rotation_error_deg(&gt) < 0.1, "{}", res.transform.rotation_error_deg(&gt));
        assert!(trace.objectives.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(res.fold_iterations().rotation.max_abs_diff(&res.transform.rotation) < 1e-12);
    }

    #[test]
    fn trimming_and_config() {
        let pc = cloud();
        let cfg = IcpConfig { trim_fraction: 0.2, ..Default::default() };
        let res = icp_register(&pc, &pc, &cfg).unwrap();
        assert_eq!(res.iterations[0].correspondences.len(), 640);
        assert!(icp_register(&pc, &pc, &IcpConfig { trim_fraction: 1.0, ..Default::default() }).is_err());
        assert!(icp_register(&pc, &pc, &IcpConfig { max_iterations: 0, ..Default::default() }).is_err());
        let tiny = PointCloud::new(vec![Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(icp_register(&tiny, &pc, &IcpConfig::default()).is_err());
    }
}
