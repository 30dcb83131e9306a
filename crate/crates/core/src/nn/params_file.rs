//! Binary parameter file, all integers and floats little-endian:
//!
//! ```text
//! "IDAM" | version u32 | meta_len u32 | meta bytes
//! | head_count u32
//! | per head: layer_count u32, output activation u8, (layer_count + 1) × u32 widths
//! | per head, per layer: weight (row-major f64) then bias (f64)
//! | CRC32 of every preceding byte (u32)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{Layer, Matrix, Mlp, OutputActivation};

pub const PARAM_FILE_MAGIC: &[u8; 4] = b"IDAM";
pub const PARAM_FILE_VERSION: u32 = 1;

/// Layer widths and output activation of one head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub sizes: Vec<usize>,
    pub output: OutputActivation,
}

impl<T: Real> From<&Mlp<T>> for Architecture {
    fn from(m: &Mlp<T>) -> Self {
        Self { sizes: m.sizes(), output: m.output_activation() }
    }
}

pub fn encode_params<T: Real>(heads: &[&Mlp<T>], meta: &[u8]) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAM_FILE_MAGIC);
    buf.extend_from_slice(&PARAM_FILE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta);
    buf.extend_from_slice(&(heads.len() as u32).to_le_bytes());
    for h in heads {
        let sizes = h.sizes();
        buf.extend_from_slice(&((sizes.len() - 1) as u32).to_le_bytes());
        buf.push(h.output_activation().code());
        for s in sizes {
            buf.extend_from_slice(&(s as u32).to_le_bytes());
        }
    }
    for h in heads {
        for p in h.params() {
            buf.extend_from_slice(&p.to_f64_lossy().to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

pub fn save_params<T: Real>(path: impl AsRef<Path>, heads: &[&Mlp<T>], meta: &[u8]) -> Result<()> {
    fs::write(path, encode_params(heads, meta))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_params<T: Real>(bytes: &[u8]) -> Result<(Vec<Mlp<T>>, Vec<u8>)> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if &body[..4] != PARAM_FILE_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32()?;
    if version != PARAM_FILE_VERSION {
        return Err(Error::Format(format!("unsupported version {version}, expected {PARAM_FILE_VERSION}")));
    }
    let meta_len = r.u32()? as usize;
    let meta = r.take(meta_len)?.to_vec();
    let head_count = r.u32()? as usize;
    let mut archs = Vec::with_capacity(head_count);
    for _ in 0..head_count {
        let layers = r.u32()? as usize;
        let output = OutputActivation::from_code(r.take(1)?[0]).ok_or_else(|| Error::Format("unknown output activation".into()))?;
        let sizes = (0..=layers).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        archs.push(Architecture { sizes, output });
    }
    let mut heads = Vec::with_capacity(head_count);
    for arch in archs {
        let mut layers = Vec::new();
        for w in arch.sizes.windows(2) {
            let weight = (0..w[0] * w[1]).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<_>>>()?;
            let bias = (0..w[1]).map(|_| r.f64().map(T::lit)).collect::<Result<Vec<_>>>()?;
            layers.push(Layer { weight: Matrix::from_vec(w[1], w[0], weight)?, bias });
        }
        heads.push(Mlp::from_layers(layers, arch.output)?);
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok((heads, meta))
}

/// Reads every head and the opaque metadata block.
pub fn load_params<T: Real>(path: impl AsRef<Path>) -> Result<(Vec<Mlp<T>>, Vec<u8>)> {
    decode_params(&fs::read(path)?)
}

/// Like [`load_params`], failing with [`Error::DimensionMismatch`] unless the stored
/// heads have exactly the expected architectures.
pub fn load_params_expecting<T: Real>(path: impl AsRef<Path>, expected: &[Architecture]) -> Result<(Vec<Mlp<T>>, Vec<u8>)> {
    let (heads, meta) = load_params(path)?;
    let found: Vec<Architecture> = heads.iter().map(Architecture::from).collect();
    if found != expected {
        return Err(Error::DimensionMismatch(format!("file holds {found:?}, expected {expected:?}")));
    }
    Ok((heads, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nets() -> (Mlp<f64>, Mlp<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        (
            Mlp::new(&[6, 8, 1], OutputActivation::Identity, &mut rng).unwrap(),
            Mlp::new(&[3, 2], OutputActivation::Sigmoid, &mut rng).unwrap(),
        )
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("idam-params-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.bin");
        let (a, b) = nets();
        save_params(&path, &[&a, &b], b"meta").unwrap();
        let (heads, meta) = load_params::<f64>(&path).unwrap();
        assert_eq!(meta, b"meta");
        assert_eq!(heads.len(), 2);
        for (x, y) in [(&a, &heads[0]), (&b, &heads[1])] {
            let bits = |m: &Mlp<f64>| m.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(x), bits(y));
            assert_eq!(x.output_activation(), y.output_activation());
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let (a, b) = nets();
        let bytes = encode_params(&[&a, &b], &[]);
        for cut in [bytes.len() - 1, bytes.len() - 9, bytes.len() / 2] {
            assert!(matches!(decode_params::<f64>(&bytes[..cut]), Err(Error::Checksum { .. })), "cut {cut}");
        }
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let (a, _) = nets();
        let mut bytes = encode_params(&[&a], &[]);
        bytes[40] ^= 0x10;
        assert!(matches!(decode_params::<f64>(&bytes), Err(Error::Checksum { .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let (a, _) = nets();
        let mut bytes = encode_params(&[&a], &[]);
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_params::<f64>(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn architecture_mismatch_rejected() {
        let dir = std::env::temp_dir().join(format!("idam-params-arch-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.bin");
        let (a, _) = nets();
        save_params(&path, &[&a], &[]).unwrap();
        let want = Architecture { sizes: vec![6, 16, 1], output: OutputActivation::Identity };
        assert!(matches!(load_params_expecting::<f64>(&path, &[want]), Err(Error::DimensionMismatch(_))));
        assert!(load_params_expecting::<f64>(&path, &[Architecture::from(&a)]).is_ok());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
