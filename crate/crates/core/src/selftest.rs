//! Fast randomized property checks over the numeric core, runnable from a
//! release binary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{icp_register, IcpConfig};
use crate::data::{synth_primitive, PrimitiveSpec};
use crate::features::{compute_fpfh, FpfhConfig};
use crate::geometry::{random_rotation, random_transform, Mat3, PointCloud, RigidTransform, Vec3};
use crate::neighbor::SpatialIndex;
use crate::nn::{row_softmax, Matrix, Mlp, OutputActivation};
use crate::pipeline::median_weights;
use crate::procrustes::{solve_weighted_procrustes, CorrespondenceSet};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3<f64>> {
    (0..n).map(|_| Vec3::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect()
}

fn procrustes(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let gt = RigidTransform::from_parts_unchecked(random_rotation(rng), Vec3::new(rng.random(), rng.random(), rng.random()));
        let src = random_points(rng, 20);
        let tgt = src.iter().map(|p| gt.apply_point(p)).collect();
        let w = (0..20).map(|_| rng.random::<f64>() + 0.01).collect();
        match CorrespondenceSet::new(src, tgt, w).and_then(|c| solve_weighted_procrustes(&c)) {
            Ok(t) => worst = worst.max(t.rotation_error_deg(&gt)).max((t.translation - gt.translation).norm()),
            Err(e) => return check("procrustes", false, e.to_string()),
        }
    }
    check("procrustes", worst < 1e-9, format!("worst error {worst:.2e}"))
}

fn knn(rng: &mut ChaCha8Rng) -> Check {
    for _ in 0..20 {
        let n = rng.random_range(1..500);
        let pts = random_points(rng, n);
        let idx = SpatialIndex::new(&pts);
        let q = random_points(rng, 1)[0];
        let k = rng.random_range(1..=n);
        let mut brute: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (p.distance_squared(&q), i)).collect();
        brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<usize> = idx.knn(&q, k).map(|v| v.iter().map(|n| n.index).collect()).unwrap_or_default();
        if got != brute[..k].iter().map(|b| b.1).collect::<Vec<_>>() {
            return check("knn", false, format!("mismatch for n={n}, k={k}"));
        }
    }
    check("knn", true, "20 clouds agree with brute force".into())
}

fn fpfh(rng: &mut ChaCha8Rng) -> Check {
    let spec: PrimitiveSpec = "box:1,0.7,0.4".parse().expect("valid spec");
    let pc = match synth_primitive(&spec, 600, rng) {
        Ok(pc) => pc,
        Err(e) => return check("fpfh-invariance", false, e.to_string()),
    };
    let t = random_transform(45.0, 0.5, rng);
    let cfg = FpfhConfig::default();
    match (compute_fpfh(&pc, &cfg), compute_fpfh(&t.apply(&pc), &cfg)) {
        (Ok(a), Ok(b)) => {
            let d = a.matrix().max_abs_diff(b.matrix());
            check("fpfh-invariance", d < 1e-6, format!("max difference {d:.2e}"))
        }
        (Err(e), _) | (_, Err(e)) => check("fpfh-invariance", false, e.to_string()),
    }
}

fn similarity_rows(rng: &mut ChaCha8Rng) -> Check {
    for m in [8, 64, 128] {
        let z = Matrix::from_fn(m, m, |_, _| rng.random::<f64>() * 20.0 - 10.0);
        let s = row_softmax(&z);
        if (0..m).any(|i| (s.row(i).iter().sum::<f64>() - 1.0).abs() > 1e-6) {
            return check("similarity-rows", false, format!("row sum off at M={m}"));
        }
        let v: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 0.9 + 0.05).collect();
        let w = match median_weights(&v) {
            Ok(w) => w,
            Err(e) => return check("similarity-rows", false, e.to_string()),
        };
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 || w.iter().filter(|&&x| x == 0.0).count() < m / 2 {
            return check("similarity-rows", false, format!("hybrid weights off at M={m}"));
        }
    }
    check("similarity-rows", true, "M = 8, 64, 128".into())
}

fn gradients(rng: &mut ChaCha8Rng) -> Check {
    let mut worst: f64 = 0.0;
    for (sizes, act) in [(vec![6, 8, 5, 1], OutputActivation::Identity), (vec![5, 7, 1], OutputActivation::Sigmoid)] {
        let net = match Mlp::<f64>::new(&sizes, act, rng) {
            Ok(n) => n,
            Err(e) => return check("gradients", false, e.to_string()),
        };
        let x = Matrix::from_fn(4, sizes[0], |_, _| rng.random::<f64>() - 0.5);
        let loss = |n: &Mlp<f64>| n.forward(&x).map(|(y, _)| y.data().iter().map(|v| v * v).sum::<f64>()).unwrap_or(f64::NAN);
        let (y, cache) = net.forward(&x).expect("shapes agree");
        let grads = net.backward(&cache, &y.map(|v| 2.0 * v)).expect("shapes agree").1.params();
        let base = net.params();
        let eps = 1e-6;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += eps;
            let mut plus = net.clone();
            plus.set_params(&p).expect("same length");
            p[k] -= 2.0 * eps;
            let mut minus = net.clone();
            minus.set_params(&p).expect("same length");
            let num = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            worst = worst.max((num - grads[k]).abs() / num.abs().max(grads[k].abs()).max(1e-6));
        }
    }
    check("gradients", worst < 1e-4, format!("worst relative error {worst:.2e}"))
}

fn icp(rng: &mut ChaCha8Rng) -> Check {
    let spec: PrimitiveSpec = "box:1,0.6,0.35".parse().expect("valid spec");
    let pc = match synth_primitive(&spec, 500, rng) {
        Ok(pc) => pc,
        Err(e) => return check("icp", false, e.to_string()),
    };
    let gt = RigidTransform::from_parts_unchecked(Mat3::rot_z(5f64.to_radians()), Vec3::new(0.02, 0.0, -0.01));
    let tgt: PointCloud<f64> = gt.apply(&pc);
    match icp_register(&pc, &tgt, &IcpConfig::default()) {
        Ok(r) => {
            let e = r.transform.rotation_error_deg(&gt);
            check("icp", e < 0.1, format!("rotation error {e:.2e} deg"))
        }
        Err(e) => check("icp", false, e.to_string()),
    }
}

/// Runs every check with generators derived from `seed`.
pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![procrustes(&mut rng), knn(&mut rng), fpfh(&mut rng), similarity_rows(&mut rng), gradients(&mut rng), icp(&mut rng)]
}
