//! Canonical parameter serialization, MD5 digests and run comparison.
//!
//! MD5 is used as an integrity fingerprint for bit-identical runs, not as a
//! security boundary.
//!
//! Canonical byte stream, parameters in lexicographic byte order of name:
//!
//! ```text
//! name (UTF-8) | 0x00 | rank (u64 LE) | extents (u64 LE each) | values (f32 LE, row-major)
//! ```

pub mod npy;

use std::fmt;
use std::path::Path;

use md5::{Digest, Md5};

use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

pub const DIGEST_FILE: &str = "digest.md5";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalDigest {
    /// 32 lowercase hex characters.
    pub hex: String,
    pub param_count: usize,
    pub total_bytes: usize,
}

impl CanonicalDigest {
    pub const ALGORITHM: &'static str = "MD5 (RFC 1321)";
}

impl fmt::Display for CanonicalDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex)
    }
}

pub fn canonical_bytes(params: &ParameterSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(params.num_values() * 4 + params.len() * 64);
    for (name, tensor) in params.iter() {
        if let Some(pos) = tensor.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameter '{name}' has non-finite value at offset {pos}"
            )));
        }
        out.extend_from_slice(name.as_bytes());
        out.push(0);
        out.extend_from_slice(&(tensor.rank() as u64).to_le_bytes());
        for &d in tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn md5_hex(bytes: &[u8]) -> String {
    Md5::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest(params: &ParameterSet) -> Result<CanonicalDigest> {
    let bytes = canonical_bytes(params)?;
    Ok(CanonicalDigest {
        hex: md5_hex(&bytes),
        param_count: params.num_values(),
        total_bytes: bytes.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub identical: bool,
    pub first_divergent_param: Option<String>,
    pub digests: (CanonicalDigest, CanonicalDigest),
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "identical: {}", self.identical)?;
        writeln!(f, "digest_a: {}", self.digests.0.hex)?;
        writeln!(f, "digest_b: {}", self.digests.1.hex)?;
        match &self.first_divergent_param {
            Some(name) => writeln!(f, "first_divergent_param: {name}"),
            None => writeln!(f, "first_divergent_param: -"),
        }
    }
}

fn same_bits(a: &Tensor<f32>, b: &Tensor<f32>) -> bool {
    a.shape() == b.shape()
        && a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// First name in canonical order that is missing from one side or differs
/// in shape or bits.
pub fn first_divergence(a: &ParameterSet, b: &ParameterSet) -> Option<String> {
    let mut names: Vec<&str> = a.names().chain(b.names()).collect();
    names.sort_unstable();
    names.dedup();
    names
        .into_iter()
        .find(|name| match (a.get(name), b.get(name)) {
            (Some(x), Some(y)) => !same_bits(x, y),
            _ => true,
        })
        .map(str::to_string)
}

pub fn compare_runs(a: &ParameterSet, b: &ParameterSet) -> Result<VerificationReport> {
    let da = digest(a)?;
    let db = digest(b)?;
    let first = first_divergence(a, b);
    Ok(VerificationReport {
        identical: first.is_none(),
        first_divergent_param: first,
        digests: (da, db),
    })
}

/// Writes `<name>.npy` per parameter plus the digest file.
pub fn save_dir(params: &ParameterSet, dir: &Path) -> Result<CanonicalDigest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let d = digest(params)?;
    for (name, tensor) in params.iter() {
        npy::write_npy(&dir.join(format!("{name}.npy")), tensor)?;
    }
    write_digest_file(&dir.join(DIGEST_FILE), &d)?;
    Ok(d)
}

/// Loads every `*.npy` in `dir` as an `f32` parameter named by its file stem.
pub fn load_dir(dir: &Path) -> Result<ParameterSet> {
    let mut params = ParameterSet::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "npy"))
        .collect();
    paths.sort();
    for path in paths {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Npy(format!("non-UTF-8 file name {}", path.display())))?
            .to_string();
        let tensor = match npy::read_npy(&path)? {
            npy::NpyArray::F32(t) => t,
            npy::NpyArray::F64(_) => {
                return Err(Error::Npy(format!(
                    "{}: parameters must be '<f4'",
                    path.display()
                )))
            }
        };
        params.insert(name, tensor)?;
    }
    Ok(params)
}

/// Single line of lowercase hex followed by a newline.
pub fn write_digest_file(path: &Path, d: &CanonicalDigest) -> Result<()> {
    std::fs::write(path, format!("{}\n", d.hex)).map_err(|e| Error::io(path, e))
}

pub fn read_digest_file(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let hex = text.trim_end_matches('\n');
    if hex.len() != 32 || !hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(Error::Parse {
            line: 1,
            message: format!("not an MD5 hex digest: '{hex}'"),
        });
    }
    Ok(hex.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f32) -> Tensor<f32> {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn empty_set_digest() {
        let p = ParameterSet::new();
        assert!(canonical_bytes(&p).unwrap().is_empty());
        let d = digest(&p).unwrap();
        assert_eq!(d.hex, "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!((d.param_count, d.total_bytes), (0, 0));
    }

    #[test]
    fn single_scalar_layout() {
        let mut p = ParameterSet::new();
        p.insert("a", scalar(0.0)).unwrap();
        let mut expected = vec![0x61, 0x00];
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&[0, 0, 0, 0]);
        assert_eq!(canonical_bytes(&p).unwrap(), expected);
    }

    #[test]
    fn insertion_order_irrelevant() {
        let mut a = ParameterSet::new();
        let mut b = ParameterSet::new();
        a.insert("x", scalar(1.0)).unwrap();
        a.insert("w", scalar(2.0)).unwrap();
        b.insert("w", scalar(2.0)).unwrap();
        b.insert("x", scalar(1.0)).unwrap();
        assert_eq!(canonical_bytes(&a).unwrap(), canonical_bytes(&b).unwrap());
    }

    #[test]
    fn non_finite_refused() {
        let mut p = ParameterSet::new();
        p.insert("a", scalar(f32::NAN)).unwrap();
        assert!(matches!(digest(&p), Err(Error::Numeric(_))));
    }

    #[test]
    fn bit_flip_detected_and_named() {
        let mut a = ParameterSet::new();
        a.insert("a", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        a.insert("b", Tensor::new(vec![2], vec![4.0, 5.0]).unwrap()).unwrap();
        a.insert("c", scalar(6.0)).unwrap();
        let mut b = a.clone();
        let v = &mut b.get_mut("b").unwrap().data_mut()[1];
        *v = f32::from_bits(v.to_bits() ^ 1);
        let r = compare_runs(&a, &b).unwrap();
        assert!(!r.identical);
        assert_eq!(r.first_divergent_param.as_deref(), Some("b"));
        assert_ne!(r.digests.0, r.digests.1);

        let same = compare_runs(&a, &a.clone()).unwrap();
        assert!(same.identical && same.first_divergent_param.is_none());
        assert_eq!(same.digests.0, same.digests.1);
    }

    #[test]
    fn missing_param_diverges() {
        let mut a = ParameterSet::new();
        a.insert("a", scalar(1.0)).unwrap();
        let mut b = a.clone();
        b.insert("0", scalar(1.0)).unwrap();
        assert_eq!(first_divergence(&a, &b).as_deref(), Some("0"));
    }

    #[test]
    fn dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParameterSet::new();
        p.insert("stem.weight", Tensor::new(vec![2, 1, 3], vec![0.5, -1.0, 2.0, 3.0, 1e-30, -0.0]).unwrap()).unwrap();
        p.insert("stem.bias", Tensor::zeros(&[2]).unwrap()).unwrap();
        let d = save_dir(&p, dir.path()).unwrap();
        let back = load_dir(dir.path()).unwrap();
        assert!(first_divergence(&p, &back).is_none());
        assert_eq!(read_digest_file(&dir.path().join(DIGEST_FILE)).unwrap(), d.hex);
    }
}
