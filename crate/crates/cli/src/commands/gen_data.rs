use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use idam_core::data::{
    load_shape, make_pair, pair_seed, protocol_entries, read_manifest, synthetic_manifest, write_manifest, write_pair, write_pair_list,
    PairListEntry, PrimitiveKind, Split,
};

use crate::common::{header_comment, PAIR_LIST, SHAPE_MANIFEST};
use crate::config::RunConfig;

#[derive(Debug, PartialEq, Eq)]
pub struct Summary {
    pub train: usize,
    pub test: usize,
}

pub fn run(cfg: &RunConfig) -> Result<Summary> {
    let d = &cfg.data;
    let protocol = d.protocol()?;
    let pair_cfg = d.pair_config()?;
    let (shapes, base) = match &d.manifest {
        Some(m) => (
            read_manifest(m).with_context(|| format!("reading manifest {}", m.display()))?,
            m.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (synthetic_manifest(&PrimitiveKind::ALL, d.synthetic_train, d.synthetic_test, cfg.seed), Default::default()),
    };
    let mut train = protocol_entries(&shapes, protocol, Split::Train);
    let mut test = protocol_entries(&shapes, protocol, Split::Test);
    if let Some(n) = d.max_train {
        train.truncate(n);
    }
    if let Some(n) = d.max_test {
        test.truncate(n);
    }
    fs::create_dir_all(&d.dir).with_context(|| format!("creating {}", d.dir.display()))?;
    let mut listing = Vec::with_capacity(train.len() + test.len());
    for (k, entry) in train.iter().chain(&test).enumerate() {
        let mut rng = pair_seed(cfg.seed, k);
        let pc = load_shape(&entry.shape, &base, d.points, &mut rng).with_context(|| format!("sampling shape {}", entry.shape))?;
        let pair = make_pair(&pc, &pair_cfg, &mut rng)?;
        let id = format!("{k:06}");
        write_pair(&d.dir, &id, &pair)?;
        listing.push(PairListEntry {
            id,
            split: entry.split,
            category: entry.category.clone(),
            shape: entry.shape.to_string(),
            seed: cfg.seed,
            cropped: pair.provenance.cropped,
            noisy: pair.provenance.noisy,
        });
    }
    let comment = format!("{}\nprotocol={}", &header_comment(cfg)[2..], protocol.name());
    write_pair_list(d.dir.join(PAIR_LIST), &listing, &comment)?;
    write_manifest(d.dir.join(SHAPE_MANIFEST), &[train.clone(), test.clone()].concat())?;
    let summary = Summary { train: train.len(), test: test.len() };
    println!("protocol {}: wrote {} train and {} test pairs to {}", protocol.name(), summary.train, summary.test, d.dir.display());
    Ok(summary)
}
