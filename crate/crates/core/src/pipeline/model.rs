use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::nn::{load_params, save_params, Architecture, Matrix, Mlp, OutputActivation};
use crate::scalar::Real;

/// Width of the similarity head's penultimate layer, which doubles as the
/// per-pair feature map fed to validity pooling.
pub const PAIR_FEATURE_DIM: usize = 32;
pub const SIMILARITY_HIDDEN: [usize; 2] = [64, PAIR_FEATURE_DIM];
pub const SIGNIFICANCE_HIDDEN: [usize; 2] = [64, 32];
pub const VALIDITY_HIDDEN: [usize; 1] = [32];

const META_TAG: &[u8; 4] = b"cfg1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdamConfig {
    /// Per-point descriptor width K.
    pub feature_dim: usize,
    pub n_iter: usize,
    /// Radius deciding whether a match counts as correct.
    pub match_radius: f64,
    /// Fraction of points kept by hard elimination (rounded up).
    pub keep_ratio: f64,
    /// Multiplier applied to raw descriptors before they enter the heads.
    pub feature_scale: f64,
}

impl Default for IdamConfig {
    fn default() -> Self {
        Self { feature_dim: 33, n_iter: 3, match_radius: 0.1, keep_ratio: 1.0 / 6.0, feature_scale: 1.0 }
    }
}

impl IdamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if !(self.match_radius.is_finite() && self.match_radius > 0.0) {
            return Err(Error::Config(format!("match_radius must be positive, got {}", self.match_radius)));
        }
        if !(self.keep_ratio > 0.0 && self.keep_ratio <= 1.0) {
            return Err(Error::Config(format!("keep_ratio must lie in (0, 1], got {}", self.keep_ratio)));
        }
        if !(self.feature_scale.is_finite() && self.feature_scale > 0.0) {
            return Err(Error::Config(format!("feature_scale must be positive, got {}", self.feature_scale)));
        }
        Ok(())
    }

    /// `⌈n · keep_ratio⌉`, robust to the ratio not being exactly representable.
    pub fn keep_count(&self, n: usize) -> usize {
        let exact = n as f64 * self.keep_ratio;
        let rounded = exact.round();
        if (exact - rounded).abs() < 1e-9 * exact.max(1.0) {
            rounded as usize
        } else {
            exact.ceil() as usize
        }
    }

    pub fn architectures(&self) -> [Architecture; 3] {
        let k = self.feature_dim;
        [
            Architecture { sizes: [vec![2 * k + 4], SIMILARITY_HIDDEN.to_vec(), vec![1]].concat(), output: OutputActivation::Identity },
            Architecture { sizes: [vec![k], SIGNIFICANCE_HIDDEN.to_vec(), vec![1]].concat(), output: OutputActivation::Identity },
            Architecture { sizes: [vec![PAIR_FEATURE_DIM], VALIDITY_HIDDEN.to_vec(), vec![1]].concat(), output: OutputActivation::Sigmoid },
        ]
    }

    fn encode(&self) -> Vec<u8> {
        let mut b = META_TAG.to_vec();
        b.extend_from_slice(&(self.feature_dim as u32).to_le_bytes());
        b.extend_from_slice(&(PAIR_FEATURE_DIM as u32).to_le_bytes());
        b.extend_from_slice(&(self.n_iter as u32).to_le_bytes());
        for v in [self.match_radius, self.keep_ratio, self.feature_scale] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn decode(b: &[u8]) -> Result<Self> {
        if b.len() != 4 + 12 + 24 || &b[..4] != META_TAG {
            return Err(Error::Format("checkpoint metadata is not a model configuration".into()));
        }
        let u = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap()) as usize;
        let f = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        if u(8) != PAIR_FEATURE_DIM {
            return Err(Error::DimensionMismatch(format!("checkpoint pair-feature width {} (expected {PAIR_FEATURE_DIM})", u(8))));
        }
        let cfg = Self { feature_dim: u(4), n_iter: u(12), match_radius: f(16), keep_ratio: f(24), feature_scale: f(32) };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The three learned heads plus the settings that shape inference.
#[derive(Clone, Debug, PartialEq)]
pub struct IdamModel<T> {
    pub config: IdamConfig,
    /// `(2K+4) → 64 → 32 → 1`, applied to every (source, target) pair.
    pub similarity: Mlp<T>,
    /// `K → 64 → 32 → 1`, linear output.
    pub significance: Mlp<T>,
    /// `32 → 32 → 1`, sigmoid output.
    pub validity: Mlp<T>,
}

impl<T: Real> IdamModel<T> {
    pub fn new<R: Rng + ?Sized>(config: IdamConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let [a, b, c] = config.architectures();
        Ok(Self {
            config,
            similarity: Mlp::new(&a.sizes, a.output, rng)?,
            significance: Mlp::new(&b.sizes, b.output, rng)?,
            validity: Mlp::new(&c.sizes, c.output, rng)?,
        })
    }

    pub fn zeros(config: IdamConfig) -> Result<Self> {
        config.validate()?;
        let [a, b, c] = config.architectures();
        Ok(Self {
            config,
            similarity: Mlp::zeros(&a.sizes, a.output)?,
            significance: Mlp::zeros(&b.sizes, b.output)?,
            validity: Mlp::zeros(&c.sizes, c.output)?,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            similarity: self.similarity.zeros_like(),
            significance: self.significance.zeros_like(),
            validity: self.validity.zeros_like(),
        }
    }

    pub fn heads(&self) -> [&Mlp<T>; 3] {
        [&self.similarity, &self.significance, &self.validity]
    }

    pub fn heads_mut(&mut self) -> [&mut Mlp<T>; 3] {
        [&mut self.similarity, &mut self.significance, &mut self.validity]
    }

    pub fn is_finite(&self) -> bool {
        self.heads().iter().all(|h| h.is_finite())
    }

    /// Raw descriptors scaled by `feature_scale`, checked against K.
    pub fn prepare_features(&self, f: &FeatureSet<T>) -> Result<Matrix<T>> {
        if f.dim() != self.config.feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "features have {} channels, model expects {}",
                f.dim(),
                self.config.feature_dim
            )));
        }
        let s = T::lit(self.config.feature_scale);
        Ok(f.matrix().map(|v| v * s))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_params(path, &self.heads(), &self.config.encode())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (heads, meta) = load_params::<T>(path)?;
        let config = IdamConfig::decode(&meta)?;
        let expected = config.architectures();
        if heads.len() != 3 {
            return Err(Error::DimensionMismatch(format!("checkpoint has {} heads, expected 3", heads.len())));
        }
        for (h, a) in heads.iter().zip(&expected) {
            if Architecture::from(h) != *a {
                return Err(Error::DimensionMismatch(format!("head {:?} does not match configuration {:?}", Architecture::from(h), a)));
            }
        }
        let mut it = heads.into_iter();
        Ok(Self { config, similarity: it.next().unwrap(), significance: it.next().unwrap(), validity: it.next().unwrap() })
    }
}
