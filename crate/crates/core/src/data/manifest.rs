use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

use super::primitive::PrimitiveSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "test" => Ok(Self::Test),
            _ => Err(format!("unknown split tag {s:?}")),
        }
    }
}

const PRIMITIVE_PREFIX: &str = "primitive:";

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSource {
    Mesh(PathBuf),
    Primitive(PrimitiveSpec),
}

impl fmt::Display for ShapeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mesh(p) => write!(f, "{}", p.display()),
            Self::Primitive(s) => write!(f, "{PRIMITIVE_PREFIX}{s}"),
        }
    }
}

impl FromStr for ShapeSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix(PRIMITIVE_PREFIX) {
            Some(spec) => Ok(Self::Primitive(spec.parse()?)),
            None => Ok(Self::Mesh(PathBuf::from(s))),
        }
    }
}

/// One manifest line: `split<TAB>category<TAB>shape`, where shape is a mesh path
/// (relative paths resolve against the manifest's directory) or `primitive:<spec>`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub category: String,
    pub shape: ShapeSource,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = String::from("# split\tcategory\tshape\n");
    for e in entries {
        if e.category.contains(['\t', '\n']) || e.category.is_empty() {
            return Err(Error::InvalidInput(format!("category {:?} cannot be written", e.category)));
        }
        out.push_str(&format!("{}\t{}\t{}\n", e.split, e.category, e.shape));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [split, category, shape] = fields.as_slice() else {
            return Err(bad(i + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let split = split.parse().map_err(|m| bad(i + 1, m))?;
        if category.is_empty() {
            return Err(bad(i + 1, "empty category".into()));
        }
        let shape = shape.parse().map_err(|e: Error| bad(i + 1, e.to_string()))?;
        entries.push(ManifestEntry { split, category: category.to_string(), shape });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest() {
        let dir = std::env::temp_dir().join(format!("idam-manifest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("empty.tsv");
        fs::write(&p, "").unwrap();
        assert!(read_manifest(&p).unwrap().is_empty());
        write_manifest(&p, &[]).unwrap();
        assert!(read_manifest(&p).unwrap().is_empty());
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn round_trip_and_errors() {
        let dir = std::env::temp_dir().join(format!("idam-manifest-rt-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("m.tsv");
        let entries = vec![
            ManifestEntry { split: Split::Test, category: "chair".into(), shape: "chair/chair_0001.off".parse().unwrap() },
            ManifestEntry { split: Split::Train, category: "box".into(), shape: "primitive:box:1,0.5,0.25".parse().unwrap() },
            ManifestEntry { split: Split::Train, category: "sphere".into(), shape: "primitive:sphere".parse().unwrap() },
        ];
        write_manifest(&p, &entries).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), entries);

        fs::write(&p, "# header\ntrain\ta\tx.off\nvalidation\tb\ty.off\n").unwrap();
        match read_manifest(&p).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("validation"));
            }
            e => panic!("{e}"),
        }
        fs::write(&p, "train\ta\n").unwrap();
        assert!(matches!(read_manifest(&p).unwrap_err(), Error::Parse { line: 1, .. }));
        fs::write(&p, "train\ta\tprimitive:cone\n").unwrap();
        assert!(matches!(read_manifest(&p).unwrap_err(), Error::Parse { line: 1, .. }));
        fs::remove_dir_all(dir).unwrap();
    }
}
