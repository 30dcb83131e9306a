//! Dataset ingestion and the pair-generation protocol: meshes are sampled into
//! unit-normalized clouds, each cloud becomes a (source, target, ground truth)
//! triple with optional partial-overlap cropping and clipped Gaussian noise.

mod manifest;
mod mesh;
mod pair;
mod primitive;
mod synthetic;
mod xyz;

pub use manifest::{read_manifest, write_manifest, ManifestEntry, ShapeSource, Split};
pub use mesh::{load_mesh, parse_off, parse_ply, sample_surface, TriangleMesh};
pub use pair::{
    derive_seed, make_pair, normalize_unit_sphere, pair_seed, protocol_entries, NoiseConfig, PairConfig, Protocol, Provenance,
    RegistrationPair,
};
pub use primitive::{sample_primitive_raw, synth_primitive, PrimitiveKind, PrimitiveSpec};
pub use synthetic::{load_shape, random_primitive, synthetic_manifest};
pub use xyz::{
    format_transform, parse_transform, read_pair, read_pair_list, read_xyz, write_pair, write_pair_list, write_xyz, PairListEntry,
};
