use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use idam_core::data::{NoiseConfig, PairConfig, Protocol};
use idam_core::features::FpfhConfig;
use idam_core::pipeline::IdamConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub benchmark: BenchmarkConfig,
    pub register: RegisterConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Shape manifest; synthetic primitives are generated when absent.
    pub manifest: Option<PathBuf>,
    /// Synthetic shapes per split (ignored with a manifest).
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    /// Caps on emitted pairs per split when reading a manifest.
    pub max_train: Option<usize>,
    pub max_test: Option<usize>,
    pub protocol: String,
    pub points: usize,
    /// Points kept per cloud; `null` keeps full overlap.
    pub crop: Option<usize>,
    pub rot_max_deg: f64,
    pub trans_max: f64,
    pub far_distance: f64,
    pub noise_sigma: f64,
    pub noise_clip: f64,
    /// Directory holding generated pairs and their listing.
    pub dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            synthetic_train: 200,
            synthetic_test: 50,
            max_train: None,
            max_test: None,
            protocol: "unseen-shapes".into(),
            points: 1024,
            crop: Some(768),
            rot_max_deg: 45.0,
            trans_max: 0.5,
            far_distance: 5.0,
            noise_sigma: 0.01,
            noise_clip: 0.05,
            dir: "pairs".into(),
        }
    }
}

impl DataConfig {
    pub fn protocol(&self) -> Result<Protocol> {
        Ok(self.protocol.parse()?)
    }

    pub fn pair_config(&self) -> Result<PairConfig> {
        let noisy = self.protocol()?.noisy();
        Ok(PairConfig {
            rot_max_deg: self.rot_max_deg,
            trans_max: self.trans_max,
            crop: self.crop,
            far_distance: self.far_distance,
            noise: noisy.then_some(NoiseConfig { sigma: self.noise_sigma, clip: self.noise_clip }),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// `fpfh` or `stub`.
    pub extractor: String,
    pub normal_radius: f64,
    pub feature_radius: f64,
    pub bins_per_angle: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let f = FpfhConfig::default();
        Self { extractor: "fpfh".into(), normal_radius: f.normal_radius, feature_radius: f.feature_radius, bins_per_angle: f.bins_per_angle }
    }
}

impl FeatureConfig {
    pub fn fpfh(&self) -> FpfhConfig {
        FpfhConfig { normal_radius: self.normal_radius, feature_radius: self.feature_radius, bins_per_angle: self.bins_per_angle }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub checkpoint: PathBuf,
    pub n_iter: usize,
    pub match_radius: f64,
    pub keep_ratio: f64,
    pub feature_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = IdamConfig::default();
        Self { checkpoint: "model.idam".into(), n_iter: d.n_iter, match_radius: d.match_radius, keep_ratio: d.keep_ratio, feature_scale: 0.01 }
    }
}

impl ModelConfig {
    pub fn idam(&self, feature_dim: usize) -> IdamConfig {
        IdamConfig {
            feature_dim,
            n_iter: self.n_iter,
            match_radius: self.match_radius,
            keep_ratio: self.keep_ratio,
            feature_scale: self.feature_scale,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay_epoch: usize,
    pub lr_decay_factor: f64,
    pub weight_decay: f64,
    /// Continue from the existing checkpoint instead of a fresh model.
    pub resume: bool,
    /// Epochs already completed by the resumed checkpoint (for the lr schedule).
    pub start_epoch: usize,
    pub loss_csv: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 40,
            lr: 1e-4,
            lr_decay_epoch: 30,
            lr_decay_factor: 0.1,
            weight_decay: 1e-3,
            resume: false,
            start_epoch: 0,
            loss_csv: "train_loss.csv".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Any of `idam`, `icp`, `oracle` (returns the ground truth; for debugging).
    pub methods: Vec<String>,
    /// `train` or `test`.
    pub split: String,
    pub output: PathBuf,
    pub transforms: PathBuf,
    /// Overrides the checkpoint's iteration count.
    pub n_iter: Option<usize>,
    pub uniform_weights: bool,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    pub icp_trim: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: vec!["idam".into(), "icp".into()],
            split: "test".into(),
            output: "benchmark.csv".into(),
            transforms: "benchmark_transforms.tsv".into(),
            n_iter: None,
            uniform_weights: false,
            icp_max_iterations: 50,
            icp_tolerance: 1e-6,
            icp_trim: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RegisterConfig {
    /// Per-point significance/validity CSV.
    pub dump: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        // Validate the file alone first so unknown keys are reported against it.
        serde_json::from_value::<RunConfig>(value.clone()).context("invalid config")?;
        let mut full = serde_json::to_value(serde_json::from_value::<RunConfig>(value.take())?)?;
        for o in overrides {
            apply_override(&mut full, o)?;
        }
        serde_json::from_value(full).context("invalid config after overrides")
    }

    pub fn to_compact_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as JSON, falling back to a plain string.
fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    let parsed = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| anyhow!("{key}: {} is not a section", parts[..i].join(".")))?;
        let slot = obj.get_mut(*part).ok_or_else(|| anyhow!("unknown config key {key:?}"))?;
        if i + 1 == parts.len() {
            *slot = parsed;
            return Ok(());
        }
        node = slot;
    }
    bail!("empty override key")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&c.to_compact_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides() {
        let c = RunConfig::load(None, &["seed=7".into(), "train.lr=0.003".into(), "data.crop=null".into(), "data.protocol=noisy".into()]).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.lr, 0.003);
        assert_eq!(c.data.crop, None);
        assert_eq!(c.data.protocol, "noisy");
        assert!(RunConfig::load(None, &["train.learning_rate=1".into()]).is_err());
        assert!(RunConfig::load(None, &["seed".into()]).is_err());
        assert!(RunConfig::load(None, &["seed=\"x\"".into()]).is_err());
    }

    #[test]
    fn unknown_file_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 1, "trian": {}}"#).unwrap();
        assert!(RunConfig::load(Some(&p), &[]).is_err());
        fs::write(&p, r#"{"seed": 1, "train": {"epochs": 2}}"#).unwrap();
        let c = RunConfig::load(Some(&p), &[]).unwrap();
        assert_eq!((c.seed, c.train.epochs, c.train.lr), (1, 2, 1e-4));
    }
}
