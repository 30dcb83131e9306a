use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{bail, Context, Result};
use idam_core::data::{derive_seed, Split};
use idam_core::nn::AdamConfig;
use idam_core::pipeline::{train, TrainConfig, TrainPair};
use idam_core::Model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::common::{extractor, features, header_comment, load_model, load_split};
use crate::config::RunConfig;

pub const LOSS_COLUMNS: &str = "epoch,match_loss,neg_entropy_loss,hybrid_loss,wall_seconds";

pub fn run(cfg: &RunConfig) -> Result<usize> {
    let ex = extractor(cfg)?;
    let pairs = load_split(&cfg.data.dir, Split::Train)?;
    if pairs.is_empty() {
        bail!("no training pairs in {}", cfg.data.dir.display());
    }
    let train_pairs = pairs
        .into_iter()
        .map(|(_, p)| {
            Ok(TrainPair {
                source_features: features(ex.as_ref(), &p.source)?,
                target_features: features(ex.as_ref(), &p.target)?,
                source: p.source,
                target: p.target,
                gt: p.gt,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ckpt = &cfg.model.checkpoint;
    let mut model = if cfg.train.resume {
        load_model(ckpt, ex.dim())?
    } else {
        Model::new(cfg.model.idam(ex.dim()), &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x1d_a3)))?
    };
    let t = &cfg.train;
    let tc = TrainConfig {
        epochs: t.epochs,
        adam: AdamConfig { lr: t.lr, weight_decay: t.weight_decay, ..AdamConfig::default() },
        lr_decay_epoch: t.lr_decay_epoch,
        lr_decay_factor: t.lr_decay_factor,
        seed: cfg.seed,
        sample_size: None,
        start_epoch: t.start_epoch,
    };
    let file = File::create(&t.loss_csv).with_context(|| format!("creating {}", t.loss_csv.display()))?;
    let mut csv = BufWriter::new(file);
    writeln!(csv, "{}", header_comment(cfg))?;
    writeln!(csv, "{LOSS_COLUMNS}")?;
    csv.flush()?;
    let mut io_err = None;
    let log = train(&mut model, &train_pairs, &tc, |e, _| {
        println!(
            "epoch {}: match {:.6} neg-entropy {:.6} hybrid {:.6} ({:.1}s)",
            e.epoch, e.match_loss, e.neg_entropy_loss, e.hybrid_loss, e.wall_seconds
        );
        let r = writeln!(csv, "{},{},{},{},{}", e.epoch, e.match_loss, e.neg_entropy_loss, e.hybrid_loss, e.wall_seconds).and_then(|_| csv.flush());
        if let Err(err) = r {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("writing loss log");
    }
    model.save(ckpt).with_context(|| format!("writing checkpoint {}", ckpt.display()))?;
    println!("trained {} epochs on {} pairs; checkpoint {}", log.len(), train_pairs.len(), ckpt.display());
    Ok(log.len())
}
