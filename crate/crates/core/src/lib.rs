//! Learned rigid point-cloud registration: a similarity matrix over feature and
//! distance channels, learned point elimination, and repeated weighted Procrustes.
//! Also an ICP baseline and the data generation and evaluation tooling.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common double-precision case.

pub mod error;
pub mod baselines;
pub mod data;
pub mod features;
pub mod geometry;
pub mod linalg;
pub mod neighbor;
pub mod nn;
pub mod pipeline;
pub mod procrustes;
pub mod registration;
pub mod scalar;
pub mod selftest;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vector3 = geometry::Vec3<f64>;
pub type Matrix3 = geometry::Mat3<f64>;
pub type Cloud = geometry::PointCloud<f64>;
pub type Transform = geometry::RigidTransform<f64>;
pub type Metrics = geometry::RegistrationMetrics<f64>;
pub type KdTree = neighbor::SpatialIndex<f64>;
pub type Correspondences = procrustes::CorrespondenceSet<f64>;
pub type DenseMatrix = nn::Matrix<f64>;
pub type Network = nn::Mlp<f64>;
pub type Model = pipeline::IdamModel<f64>;
pub type Registration = registration::RegistrationResult<f64>;

pub type Cloud32 = geometry::PointCloud<f32>;
pub type Transform32 = geometry::RigidTransform<f32>;
pub type Network32 = nn::Mlp<f32>;
pub type Model32 = pipeline::IdamModel<f32>;
