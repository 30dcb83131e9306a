use anyhow::{bail, Result};

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let checks = idam_core::selftest::run(cfg.seed);
    for c in &checks {
        println!("{} {:<16} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}
