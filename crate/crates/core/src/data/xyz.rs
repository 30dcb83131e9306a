use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::{Cloud, Transform};

use super::manifest::Split;
use super::pair::{Provenance, RegistrationPair};

/// Whitespace-separated `x y z`, one point per line, shortest round-trip formatting.
pub fn write_xyz(path: impl AsRef<Path>, pc: &Cloud) -> Result<()> {
    let mut out = String::with_capacity(pc.len() * 60);
    for p in pc.points() {
        let _ = writeln!(out, "{} {} {}", p.x(), p.y(), p.z());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<Cloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: format!("{e}") })?;
        if vals.len() < 3 {
            return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, msg: format!("expected 3 coordinates, found {}", vals.len()) });
        }
        let p = Vec3::new(vals[0], vals[1], vals[2]);
        if !p.is_finite() {
            return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, msg: "non-finite coordinate".into() });
        }
        pts.push(p);
    }
    if pts.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), line: 0, msg: "no points".into() });
    }
    Cloud::new(pts)
}

/// Row-major rotation then translation, space-separated on one line.
pub fn format_transform(t: &Transform) -> String {
    t.to_row_major().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_transform(text: &str) -> Result<Transform> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("transform: {e}")))?;
    let arr: [f64; 12] = vals.try_into().map_err(|v: Vec<f64>| Error::Format(format!("transform needs 12 numbers, found {}", v.len())))?;
    let t = Transform::from_row_major(&arr);
    if !t.is_proper_rotation(1e-6) {
        return Err(Error::Format("transform rotation is not a proper rotation".into()));
    }
    Ok(t)
}

/// One row of a generated pair listing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairListEntry {
    pub id: String,
    pub split: Split,
    pub category: String,
    pub shape: String,
    pub seed: u64,
    pub cropped: bool,
    pub noisy: bool,
}

const PAIR_LIST_HEADER: &str = "id\tsplit\tcategory\tshape\tseed\tcropped\tnoisy";

pub fn write_pair_list(path: impl AsRef<Path>, entries: &[PairListEntry], comment: &str) -> Result<()> {
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "{PAIR_LIST_HEADER}");
    for e in entries {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}\t{}", e.id, e.split, e.category, e.shape, e.seed, e.cropped, e.noisy);
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pair_list(path: impl AsRef<Path>) -> Result<Vec<PairListEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') || line == PAIR_LIST_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, split, category, shape, seed, cropped, noisy] = f.as_slice() else {
            return Err(bad(i + 1, format!("expected 7 tab-separated fields, found {}", f.len())));
        };
        let flag = |s: &str| s.parse::<bool>().map_err(|_| bad(i + 1, format!("invalid flag {s:?}")));
        out.push(PairListEntry {
            id: id.to_string(),
            split: split.parse().map_err(|m| bad(i + 1, m))?,
            category: category.to_string(),
            shape: shape.to_string(),
            seed: seed.parse().map_err(|_| bad(i + 1, format!("invalid seed {seed:?}")))?,
            cropped: flag(cropped)?,
            noisy: flag(noisy)?,
        });
    }
    Ok(out)
}

fn pair_paths(dir: &Path, id: &str) -> [PathBuf; 3] {
    [dir.join(format!("{id}_src.xyz")), dir.join(format!("{id}_tgt.xyz")), dir.join(format!("{id}_gt.txt"))]
}

pub fn write_pair(dir: impl AsRef<Path>, id: &str, pair: &RegistrationPair) -> Result<()> {
    let [s, t, g] = pair_paths(dir.as_ref(), id);
    write_xyz(s, &pair.source)?;
    write_xyz(t, &pair.target)?;
    fs::write(g, format_transform(&pair.gt) + "\n")?;
    Ok(())
}

pub fn read_pair(dir: impl AsRef<Path>, entry: &PairListEntry) -> Result<RegistrationPair> {
    let [s, t, g] = pair_paths(dir.as_ref(), &entry.id);
    Ok(RegistrationPair {
        source: read_xyz(s)?,
        target: read_xyz(t)?,
        gt: parse_transform(&fs::read_to_string(g)?)?,
        provenance: Provenance { shape_id: entry.shape.clone(), seed: entry.seed, cropped: entry.cropped, noisy: entry.noisy },
    })
}
