use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use idam_core::data::read_xyz;
use idam_core::pipeline::{register_with, RegisterOptions};
use idam_core::Transform;

use crate::common::{extractor, features, format_sig, load_model};
use crate::config::RunConfig;

pub const DUMP_COLUMNS: &str = "cloud,index,x,y,z,significance,validity";

pub fn run(cfg: &RunConfig, src: &Path, tgt: &Path) -> Result<Transform> {
    let ex = extractor(cfg)?;
    let model = load_model(&cfg.model.checkpoint, ex.dim())?;
    let source = read_xyz(src).with_context(|| format!("reading {}", src.display()))?;
    let target = read_xyz(tgt).with_context(|| format!("reading {}", tgt.display()))?;
    let fs_src = features(ex.as_ref(), &source)?;
    let fs_tgt = features(ex.as_ref(), &target)?;
    let opts = RegisterOptions { keep_scores: cfg.register.dump.is_some(), ..Default::default() };
    let res = register_with(&source, &target, &fs_src, &fs_tgt, &model, &opts)?;
    let line: Vec<String> = res.transform.to_row_major().iter().map(|v| format_sig(*v, 9)).collect();
    println!("{}", line.join(" "));
    if let (Some(path), Some(scores)) = (&cfg.register.dump, &res.scores) {
        let mut out = format!("{DUMP_COLUMNS}\n");
        for (k, &i) in scores.source_kept.iter().enumerate() {
            let p = source.get(i);
            let _ = writeln!(out, "source,{i},{},{},{},{},{}", p.x(), p.y(), p.z(), scores.source_significance[k], scores.validity[k]);
        }
        for (k, &j) in scores.target_kept.iter().enumerate() {
            let p = target.get(j);
            let _ = writeln!(out, "target,{j},{},{},{},{},", p.x(), p.y(), p.z(), scores.target_significance[k]);
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(res.transform)
}
