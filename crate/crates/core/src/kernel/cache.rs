//! On-disk Gram cache.
//!
//! File layout: 16-byte header (`b"GRAM"`, version `u32`, `N` `u32`,
//! reserved `u32`, all little-endian) followed by `N * N` little-endian `f64`
//! values in row-major order. Files are named by a SHA-256 over the sample
//! bytes and the kernel spec.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use sha2::{Digest, Sha256};

use super::{compute_gram, KernelSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GRAM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Content key of `(samples, spec)`.
pub fn cache_key(x: ArrayView2<f64>, spec: &KernelSpec) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("kernel spec serializes"));
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in x.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn encode_gram(gram: &Array2<f64>) -> Result<Vec<u8>> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gram.ncols(),
        });
    }
    let n32 = u32::try_from(n).map_err(|_| Error::Format("gram too large for cache header".into()))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * n * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&n32.to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for v in gram.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_gram(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing GRAM header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported gram cache version {version}")));
    }
    let n = word(8) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 8 * n * n {
        return Err(Error::Format(format!(
            "gram body has {} bytes, expected {}",
            body.len(),
            8 * n * n
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((n, n), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_gram(path: &Path, gram: &Array2<f64>) -> Result<()> {
    let bytes = encode_gram(gram)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_gram(path: &Path) -> Result<Array2<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_gram(&bytes)
}

/// Directory of cached Grams.
#[derive(Debug, Clone)]
pub struct GramCache {
    dir: PathBuf,
}

impl GramCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(GramCache { dir })
    }

    pub fn path_for(&self, x: ArrayView2<f64>, spec: &KernelSpec) -> PathBuf {
        self.dir.join(format!("{}.gram", cache_key(x, spec)))
    }

    /// Returns the cached Gram of `x` under `spec`, computing and storing it on
    /// a miss. The boolean is `true` on a cache hit.
    pub fn get_or_compute(&self, x: ArrayView2<f64>, spec: &KernelSpec) -> Result<(Array2<f64>, bool)> {
        let path = self.path_for(x, spec);
        if path.exists() {
            let g = read_gram(&path)?;
            if g.nrows() == x.nrows() {
                return Ok((g, true));
            }
            log::warn!("stale gram cache entry {}, recomputing", path.display());
        }
        let g = compute_gram(spec, x, x)?;
        write_gram(&path, &g)?;
        Ok((g, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn header_layout() {
        let g = array![[1.0, 0.5], [0.5, 1.0]];
        let b = encode_gram(&g).unwrap();
        assert_eq!(&b[..4], b"GRAM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 0);
        assert_eq!(b.len(), 16 + 32);
        assert_eq!(f64::from_le_bytes(b[24..32].try_into().unwrap()), 0.5);
        assert_eq!(decode_gram(&b).unwrap(), g);
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(decode_gram(b"GRAX\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
        let mut b = encode_gram(&array![[1.0]]).unwrap();
        b.pop();
        assert!(decode_gram(&b).is_err());
    }

    #[test]
    fn cache_hits_after_first_compute() {
        let dir = tempfile::tempdir().unwrap();
        let cache = GramCache::new(dir.path()).unwrap();
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        let spec = KernelSpec::gaussian(0.5);
        let (g1, hit1) = cache.get_or_compute(x.view(), &spec).unwrap();
        let (g2, hit2) = cache.get_or_compute(x.view(), &spec).unwrap();
        assert!(!hit1 && hit2);
        assert_eq!(g1, g2);
        let other = KernelSpec::gaussian(2.0);
        assert_ne!(cache.path_for(x.view(), &spec), cache.path_for(x.view(), &other));
    }
}
