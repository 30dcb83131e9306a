//! Points, rigid transforms, Euler decomposition and registration error metrics.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A 3-vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3<T>(pub [T; 3]);

impl<T: Real> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 3])
    }

    pub fn x(&self) -> T {
        self.0[0]
    }
    pub fn y(&self) -> T {
        self.0[1]
    }
    pub fn z(&self) -> T {
        self.0[2]
    }

    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn cross(&self, o: &Self) -> Self {
        let [a1, a2, a3] = self.0;
        let [b1, b2, b3] = o.0;
        Self([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    pub fn distance_squared(&self, o: &Self) -> T {
        (*self - *o).norm_squared()
    }

    pub fn distance(&self, o: &Self) -> T {
        self.distance_squared(o).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Vec3<U> {
        Vec3(self.0.map(|c| U::lit(c.to_f64_lossy())))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self(self.0.map(|c| -c))
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat3<T>(pub [[T; 3]; 3]);

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn zero() -> Self {
        Self([[T::zero(); 3]; 3])
    }

    pub fn from_rows(r0: [T; 3], r1: [T; 3], r2: [T; 3]) -> Self {
        Self([r0, r1, r2])
    }

    pub fn from_diagonal(d: [T; 3]) -> Self {
        let mut m = Self::zero();
        for (i, v) in d.into_iter().enumerate() {
            m.0[i][i] = v;
        }
        m
    }

    /// `a bᵀ`
    pub fn outer(a: &Vec3<T>, b: &Vec3<T>) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a.0[i] * b.0[j];
            }
        }
        m
    }

    pub fn rot_x(angle_rad: T) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self([[o, z, z], [z, c, -s], [z, s, c]])
    }

    pub fn rot_y(angle_rad: T) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self([[c, z, s], [z, o, z], [-s, z, c]])
    }

    pub fn rot_z(angle_rad: T) -> Self {
        let (s, c) = angle_rad.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self([[c, -s, z], [s, c, z], [z, z, o]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> T {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let m = &self.0;
        Vec3([
            m[0][0] * v.0[0] + m[0][1] * v.0[1] + m[0][2] * v.0[2],
            m[1][0] * v.0[0] + m[1][1] * v.0[1] + m[1][2] * v.0[2],
            m[2][0] * v.0[0] + m[2][1] * v.0[1] + m[2][2] * v.0[2],
        ])
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.map(|r| r.map(|v| v * s)))
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut d = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        d
    }

    /// Rotation angle (radians) of a rotation matrix, from its trace.
    pub fn rotation_angle(&self) -> T {
        let two = T::lit(2.0);
        let c = ((self.trace() - T::one()) / two).max(-T::one()).min(T::one());
        // acos loses precision near 0; use the antisymmetric part there.
        let m = &self.0;
        let s = Vec3([m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]]).norm() / two;
        s.atan2(c)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Mat3<U> {
        Mat3(self.0.map(|r| r.map(|v| U::lit(v.to_f64_lossy()))))
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = self.0[i][0] * o.0[0][j] + self.0[i][1] * o.0[1][j] + self.0[i][2] * o.0[2][j];
            }
        }
        r
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        self.mul_vec(&v)
    }
}

impl<T: Real> Add for Mat3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }
}

/// Ordered list of 3D positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<T> {
    points: Vec<Vec3<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn from_arrays(points: &[[T; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|&p| Vec3(p)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3<T>> {
        self.points
    }

    pub fn get(&self, i: usize) -> Vec3<T> {
        self.points[i]
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    pub fn centroid(&self) -> Vec3<T> {
        let mut c = Vec3::zero();
        for p in &self.points {
            c = c + *p;
        }
        c.scale(T::one() / T::from_usize_lossy(self.points.len()))
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud { points: self.points.iter().map(Vec3::cast).collect() }
    }
}

/// Rotation plus translation; `x ↦ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zero() }
    }

    /// Checks orthonormality and `det = +1` within `tol`.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>, tol: T) -> Result<Self> {
        let t = Self { rotation, translation };
        if !t.is_proper_rotation(tol) {
            return Err(Error::InvalidInput("rotation is not orthonormal with det +1".into()));
        }
        if !translation.is_finite() {
            return Err(Error::InvalidInput("translation is not finite".into()));
        }
        Ok(t)
    }

    pub fn from_parts_unchecked(rotation: Mat3<T>, translation: Vec3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn is_proper_rotation(&self, tol: T) -> bool {
        let r = &self.rotation;
        r.is_finite()
            && (r.transpose() * *r).max_abs_diff(&Mat3::identity()) <= tol
            && (r.determinant() - T::one()).abs() <= tol
    }

    pub fn apply_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn apply(&self, pc: &PointCloud<T>) -> PointCloud<T> {
        PointCloud { points: pc.points.iter().map(|p| self.apply_point(p)).collect() }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -rt.mul_vec(&self.translation) }
    }

    /// Rotation angle of `selfᵀ·other` in degrees.
    pub fn rotation_error_deg(&self, other: &Self) -> T {
        (self.rotation.transpose() * other.rotation).rotation_angle().to_degrees()
    }

    /// Row-major rotation followed by translation.
    pub fn to_row_major(&self) -> [T; 12] {
        let r = &self.rotation.0;
        let t = &self.translation.0;
        [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2], t[0], t[1], t[2]]
    }

    pub fn from_row_major(v: &[T; 12]) -> Self {
        Self {
            rotation: Mat3([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]),
            translation: Vec3([v[9], v[10], v[11]]),
        }
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform { rotation: self.rotation.cast(), translation: self.translation.cast() }
    }
}

/// `inner` first, then `outer`.
pub fn compose<T: Real>(outer: &RigidTransform<T>, inner: &RigidTransform<T>) -> RigidTransform<T> {
    RigidTransform {
        rotation: outer.rotation * inner.rotation,
        translation: outer.rotation.mul_vec(&inner.translation) + outer.translation,
    }
}

pub fn apply_transform<T: Real>(t: &RigidTransform<T>, pc: &PointCloud<T>) -> PointCloud<T> {
    t.apply(pc)
}

const GIMBAL_EPS: f64 = 1e-9;

/// Intrinsic Z-Y-X Euler angles `[yaw, pitch, roll]` in degrees, such that
/// `r = Rz(yaw)·Ry(pitch)·Rx(roll)`.
///
/// Each angle lies in (−180, 180] and pitch in [−90, 90]. At gimbal lock
/// (`|r[2][0]| ≥ 1 − 1e-9`) roll is set to 0 and the remaining freedom goes to yaw.
pub fn rotation_to_euler_deg<T: Real>(r: &Mat3<T>) -> [T; 3] {
    let m = &r.0;
    let (yaw, pitch, roll);
    if m[2][0].abs() >= T::one() - T::lit(GIMBAL_EPS) {
        let half_pi = T::FRAC_PI_2();
        roll = T::zero();
        pitch = if m[2][0] < T::zero() { half_pi } else { -half_pi };
        yaw = (-m[0][1]).atan2(m[1][1]);
    } else {
        pitch = (-m[2][0]).atan2((m[2][1] * m[2][1] + m[2][2] * m[2][2]).sqrt());
        yaw = m[1][0].atan2(m[0][0]);
        roll = m[2][1].atan2(m[2][2]);
    }
    [wrap_deg(yaw.to_degrees()), pitch.to_degrees(), wrap_deg(roll.to_degrees())]
}

/// Inverse of [`rotation_to_euler_deg`].
pub fn euler_deg_to_rotation<T: Real>(angles: [T; 3]) -> Mat3<T> {
    let [yaw, pitch, roll] = angles.map(|a| a.to_radians());
    Mat3::rot_z(yaw) * Mat3::rot_y(pitch) * Mat3::rot_x(roll)
}

/// Maps an angle in degrees into (−180, 180].
pub fn wrap_deg<T: Real>(a: T) -> T {
    let full = T::lit(360.0);
    let half = T::lit(180.0);
    let mut w = a % full;
    if w > half {
        w -= full;
    } else if w <= -half {
        w += full;
    }
    w
}

/// Pooled rotation (degrees) and translation error statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationMetrics<T> {
    pub rmse_rot_deg: T,
    pub mae_rot_deg: T,
    pub rmse_trans: T,
    pub mae_trans: T,
}

/// Rotation errors are per-Euler-angle differences (wrapped into (−180, 180]),
/// translation errors per component; each pool spans samples × 3.
pub fn compute_metrics<T: Real>(
    pred: &[RigidTransform<T>],
    gt: &[RigidTransform<T>],
) -> Result<RegistrationMetrics<T>> {
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth transforms",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no transforms to evaluate".into()));
    }
    let (mut rot_sq, mut rot_abs, mut tr_sq, mut tr_abs) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (p, g) in pred.iter().zip(gt) {
        let ep = rotation_to_euler_deg(&p.rotation);
        let eg = rotation_to_euler_deg(&g.rotation);
        for k in 0..3 {
            let d = wrap_deg(ep[k] - eg[k]);
            rot_sq += d * d;
            rot_abs += d.abs();
            let dt = p.translation.0[k] - g.translation.0[k];
            tr_sq += dt * dt;
            tr_abs += dt.abs();
        }
    }
    let n = T::from_usize_lossy(3 * pred.len());
    Ok(RegistrationMetrics {
        rmse_rot_deg: (rot_sq / n).sqrt(),
        mae_rot_deg: rot_abs / n,
        rmse_trans: (tr_sq / n).sqrt(),
        mae_trans: tr_abs / n,
    })
}

/// `Rz(a)·Ry(b)·Rx(c)` with each angle uniform in `[0, rot_max_deg]`, translation
/// components uniform in `[−trans_max, trans_max]`. Draw order: a, b, c, tx, ty, tz.
pub fn random_transform<T: Real, R: Rng + ?Sized>(rot_max_deg: T, trans_max: T, rng: &mut R) -> RigidTransform<T> {
    let mut angle = || T::lit(rng.random::<f64>()) * rot_max_deg;
    let (a, b, c) = (angle(), angle(), angle());
    let rotation = Mat3::rot_z(a.to_radians()) * Mat3::rot_y(b.to_radians()) * Mat3::rot_x(c.to_radians());
    let mut shift = || (T::lit(rng.random::<f64>()) * T::lit(2.0) - T::one()) * trans_max;
    let translation = Vec3([shift(), shift(), shift()]);
    RigidTransform { rotation, translation }
}

/// Uniformly distributed random rotation (Shoemake quaternion sampling).
pub fn random_rotation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Mat3<T> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = [a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos()];
    let [w, x, y, z] = q.map(T::lit);
    let two = T::lit(2.0);
    let one = T::one();
    Mat3([
        [one - two * (y * y + z * z), two * (x * y - z * w), two * (x * z + y * w)],
        [two * (x * y + z * w), one - two * (x * x + z * z), two * (y * z - x * w)],
        [two * (x * z - y * w), two * (y * z + x * w), one - two * (x * x + y * y)],
    ])
}
