use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::Cloud;

use super::pair::normalize_unit_sphere;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Sphere,
    Box,
    Cylinder,
    Torus,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [Self::Sphere, Self::Box, Self::Cylinder, Self::Torus];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sphere => "sphere",
            Self::Box => "box",
            Self::Cylinder => "cylinder",
            Self::Torus => "torus",
        }
    }

    /// Number of shape parameters and their defaults.
    /// box: side lengths; cylinder: radius, height; torus: major, minor radius.
    pub fn default_dims(self) -> &'static [f64] {
        match self {
            Self::Sphere => &[],
            Self::Box => &[2.0, 2.0, 2.0],
            Self::Cylinder => &[1.0, 2.0],
            Self::Torus => &[1.0, 0.25],
        }
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown primitive kind {s:?} (expected sphere, box, cylinder or torus)")))
    }
}

/// A primitive with explicit dimensions, written `kind` or `kind:d1,d2,...`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveSpec {
    pub kind: PrimitiveKind,
    pub dims: Vec<f64>,
}

impl PrimitiveSpec {
    pub fn new(kind: PrimitiveKind, dims: Vec<f64>) -> Result<Self> {
        let want = kind.default_dims().len();
        if dims.len() != want {
            return Err(Error::InvalidInput(format!("{} takes {want} dimensions, got {}", kind.name(), dims.len())));
        }
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidInput(format!("{} dimensions must be positive: {dims:?}", kind.name())));
        }
        if kind == PrimitiveKind::Torus && dims[1] >= dims[0] {
            return Err(Error::InvalidInput("torus minor radius must be below the major radius".into()));
        }
        Ok(Self { kind, dims })
    }

    pub fn unit(kind: PrimitiveKind) -> Self {
        Self { kind, dims: kind.default_dims().to_vec() }
    }
}

impl FromStr for PrimitiveSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (kind, dims) = match s.split_once(':') {
            None => return Ok(Self::unit(s.parse()?)),
            Some((k, d)) => (k.parse::<PrimitiveKind>()?, d),
        };
        let dims = dims
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad primitive dimension {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, dims)
    }
}

impl fmt::Display for PrimitiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.dims.as_slice() != self.kind.default_dims() {
            let d: Vec<String> = self.dims.iter().map(|v| v.to_string()).collect();
            write!(f, ":{}", d.join(","))?;
        }
        Ok(())
    }
}

fn unit_sphere_point<R: Rng + ?Sized>(rng: &mut R) -> Vec3<f64> {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Area-uniform surface samples at the primitive's own scale, centered on its
/// geometric center (no normalization).
pub fn sample_primitive_raw<R: Rng + ?Sized>(spec: &PrimitiveSpec, n: usize, rng: &mut R) -> Result<Vec<Vec3<f64>>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    let d = &spec.dims;
    let pts = match spec.kind {
        PrimitiveKind::Sphere => (0..n).map(|_| unit_sphere_point(rng)).collect(),
        PrimitiveKind::Box => {
            let h = [d[0] / 2.0, d[1] / 2.0, d[2] / 2.0];
            // Face pair normal to axis k has area (2h_a)(2h_b) each.
            let areas = [d[1] * d[2], d[0] * d[2], d[0] * d[1]];
            let total: f64 = areas.iter().sum();
            (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * total;
                    let k = if u < areas[0] { 0 } else if u < areas[0] + areas[1] { 1 } else { 2 };
                    let mut p = [0.0; 3];
                    for (a, v) in p.iter_mut().enumerate() {
                        *v = if a == k {
                            if rng.random::<bool>() { h[a] } else { -h[a] }
                        } else {
                            (2.0 * rng.random::<f64>() - 1.0) * h[a]
                        };
                    }
                    Vec3(p)
                })
                .collect()
        }
        PrimitiveKind::Cylinder => {
            let (r, h) = (d[0], d[1]);
            let side = 2.0 * PI * r * h;
            let cap = PI * r * r;
            (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * (side + 2.0 * cap);
                    let phi = 2.0 * PI * rng.random::<f64>();
                    if u < side {
                        Vec3::new(r * phi.cos(), r * phi.sin(), (rng.random::<f64>() - 0.5) * h)
                    } else {
                        let rho = r * rng.random::<f64>().sqrt();
                        let z = if u < side + cap { h / 2.0 } else { -h / 2.0 };
                        Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
                    }
                })
                .collect()
        }
        PrimitiveKind::Torus => {
            let (big, small) = (d[0], d[1]);
            (0..n)
                .map(|_| {
                    // Tube angle by rejection: density ∝ (R + r cos v).
                    let v = loop {
                        let v = 2.0 * PI * rng.random::<f64>();
                        if rng.random::<f64>() * (big + small) <= big + small * v.cos() {
                            break v;
                        }
                    };
                    let u = 2.0 * PI * rng.random::<f64>();
                    let rho = big + small * v.cos();
                    Vec3::new(rho * u.cos(), rho * u.sin(), small * v.sin())
                })
                .collect()
        }
    };
    Ok(pts)
}

/// Surface samples of a primitive, normalized like mesh samples.
pub fn synth_primitive<R: Rng + ?Sized>(spec: &PrimitiveSpec, n: usize, rng: &mut R) -> Result<Cloud> {
    normalize_unit_sphere(sample_primitive_raw(spec, n, rng)?)
}
