use std::fmt::Write as _;
use std::fs;
use std::time::Instant;

use anyhow::{bail, Result};
use idam_core::baselines::{icp_register, IcpConfig};
use idam_core::data::format_transform;
use idam_core::geometry::compute_metrics;
use idam_core::pipeline::{register_with, RegisterOptions};
use idam_core::{Metrics, Transform};

use crate::common::{extractor, features, header_comment, load_model, load_split, parse_split};
use crate::config::RunConfig;

pub const METRIC_COLUMNS: &str = "method,RMSE_R_deg,MAE_R_deg,RMSE_t,MAE_t,sec_per_frame";

#[derive(Debug)]
pub struct MethodRow {
    pub method: String,
    pub metrics: Metrics,
    pub sec_per_frame: f64,
    pub transforms: Vec<Transform>,
}

pub fn run(cfg: &RunConfig) -> Result<Vec<MethodRow>> {
    let b = &cfg.benchmark;
    let pairs = load_split(&cfg.data.dir, parse_split(&b.split)?)?;
    if pairs.is_empty() {
        bail!("no {} pairs in {}", b.split, cfg.data.dir.display());
    }
    for m in &b.methods {
        if !matches!(m.as_str(), "idam" | "icp" | "oracle") {
            bail!("unknown method {m:?} (expected idam, icp or oracle)");
        }
    }
    let gt: Vec<Transform> = pairs.iter().map(|(_, p)| p.gt).collect();
    let mut rows = Vec::new();
    for method in &b.methods {
        let start = Instant::now();
        let transforms: Vec<Transform> = match method.as_str() {
            "idam" => {
                let ex = extractor(cfg)?;
                let model = load_model(&cfg.model.checkpoint, ex.dim())?;
                let opts = RegisterOptions { n_iter: b.n_iter, uniform_weights: b.uniform_weights, keep_scores: false };
                pairs
                    .iter()
                    .map(|(_, p)| {
                        let fs = features(ex.as_ref(), &p.source)?;
                        let ft = features(ex.as_ref(), &p.target)?;
                        Ok(register_with(&p.source, &p.target, &fs, &ft, &model, &opts)?.transform)
                    })
                    .collect::<Result<_>>()?
            }
            "icp" => {
                let icp = IcpConfig { max_iterations: b.icp_max_iterations, tolerance: b.icp_tolerance, trim_fraction: b.icp_trim };
                pairs.iter().map(|(_, p)| Ok(icp_register(&p.source, &p.target, &icp)?.transform)).collect::<Result<_>>()?
            }
            _ => gt.clone(),
        };
        let elapsed = start.elapsed().as_secs_f64();
        let sec_per_frame = (elapsed / pairs.len() as f64).max(f64::MIN_POSITIVE);
        rows.push(MethodRow { method: method.clone(), metrics: compute_metrics(&transforms, &gt)?, sec_per_frame, transforms });
    }
    let mut csv = format!("{}\n{METRIC_COLUMNS}\n", header_comment(cfg));
    let mut tf = format!("{}\nmethod\tid\ttransform\n", header_comment(cfg));
    for r in &rows {
        let m = &r.metrics;
        let _ = writeln!(csv, "{},{},{},{},{},{}", r.method, m.rmse_rot_deg, m.mae_rot_deg, m.rmse_trans, m.mae_trans, r.sec_per_frame);
        for ((e, _), t) in pairs.iter().zip(&r.transforms) {
            let _ = writeln!(tf, "{}\t{}\t{}", r.method, e.id, format_transform(t));
        }
        println!(
            "{:>7}: RMSE(R) {:.4} MAE(R) {:.4} RMSE(t) {:.5} MAE(t) {:.5} {:.4} s/frame",
            r.method, m.rmse_rot_deg, m.mae_rot_deg, m.rmse_trans, m.mae_trans, r.sec_per_frame
        );
    }
    fs::write(&b.output, csv)?;
    fs::write(&b.transforms, tf)?;
    Ok(rows)
}
