use std::path::Path;

use anyhow::{bail, Context, Result};
use idam_core::data::{read_pair, read_pair_list, PairListEntry, RegistrationPair, Split};
use idam_core::features::{extract, extractor_by_name, FeatureExtractor, FeatureSet};
use idam_core::{Cloud, Model};

use crate::config::RunConfig;

pub const PAIR_LIST: &str = "pairs.tsv";
pub const SHAPE_MANIFEST: &str = "shapes.tsv";

pub fn extractor(cfg: &RunConfig) -> Result<Box<dyn FeatureExtractor<f64>>> {
    Ok(extractor_by_name(&cfg.features.extractor, cfg.features.fpfh())?)
}

pub fn features(ex: &dyn FeatureExtractor<f64>, pc: &Cloud) -> Result<FeatureSet<f64>> {
    Ok(extract(ex, pc)?)
}

pub fn parse_split(s: &str) -> Result<Split> {
    s.parse::<Split>().map_err(anyhow::Error::msg)
}

/// Generated pairs of one split, in listing order.
pub fn load_split(dir: &Path, split: Split) -> Result<Vec<(PairListEntry, RegistrationPair)>> {
    let list_path = dir.join(PAIR_LIST);
    let entries = read_pair_list(&list_path).with_context(|| format!("reading pair listing {}", list_path.display()))?;
    entries
        .into_iter()
        .filter(|e| e.split == split)
        .map(|e| {
            let p = read_pair(dir, &e).with_context(|| format!("reading pair {}", e.id))?;
            Ok((e, p))
        })
        .collect()
}

pub fn load_model(path: &Path, feature_dim: usize) -> Result<Model> {
    if !path.exists() {
        bail!("checkpoint {} not found", path.display());
    }
    let model = Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if model.config.feature_dim != feature_dim {
        bail!(
            "checkpoint {} expects {}-channel features but the configured extractor produces {feature_dim}",
            path.display(),
            model.config.feature_dim
        );
    }
    Ok(model)
}

/// Comment line recording seed and the full configuration.
pub fn header_comment(cfg: &RunConfig) -> String {
    format!("# seed={} config={}", cfg.seed, cfg.to_compact_json())
}

/// Like C's `%.{sig}g`: `sig` significant digits, trailing zeros removed.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= sig as i32 {
        let m = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.0, 9), "0");
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(-0.123456789123, 9), "-0.123456789");
        assert_eq!(format_sig(123456.7891234, 9), "123456.789");
        assert_eq!(format_sig(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_sig(2.0e12, 9), "2e+12");
        assert_eq!(format_sig(0.99999999999, 9), "1");
        assert_eq!(format_sig(0.0001, 9), "0.0001");
    }
}
