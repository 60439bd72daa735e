//! SLERP merging of two weight files stored in the `QTNSR1` container.
//!
//! Layout: the 6-byte magic `QTNSR1`, a little-endian u32 header length, a
//! JSON array of `{name, dtype, shape, offset, nbytes}` entries, then the
//! payload. Offsets are relative to the start of the payload; values are
//! little-endian f32.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"QTNSR1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("not a tensor file: bad magic")]
    BadMagic,
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("bad header: {0}")]
    Header(String),
    #[error("tensor `{name}` lies outside the payload")]
    OutOfBounds { name: String },
    #[error("tensors `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("tensor name `{0}` appears twice")]
    DuplicateName(String),
    #[error("tensor sets differ: {0}")]
    Mismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f32>) -> Result<Self, MergeError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(MergeError::Header(format!(
                "tensor `{name}`: shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            name: name.to_string(),
            shape,
            data,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

/// Tensors in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub tensors: Vec<Tensor>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Names sorted, offsets packed.
    pub fn canonical(mut self) -> Self {
        self.tensors.sort_by(|a, b| a.name.cmp(&b.name));
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let index: Vec<IndexEntry> = self
            .tensors
            .iter()
            .map(|t| {
                let nbytes = 4 * t.data.len() as u64;
                let e = IndexEntry {
                    name: t.name.clone(),
                    dtype: "f32".into(),
                    shape: t.shape.clone(),
                    offset,
                    nbytes,
                };
                offset += nbytes;
                e
            })
            .collect();
        let header = serde_json::to_vec(&index).expect("index serializes");
        let mut out = Vec::with_capacity(10 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MergeError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(MergeError::BadMagic);
        }
        let rest = &bytes[MAGIC.len()..];
        if rest.len() < 4 {
            return Err(MergeError::Truncated("missing header length".into()));
        }
        let hlen = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        let rest = &rest[4..];
        if rest.len() < hlen {
            return Err(MergeError::Truncated(format!(
                "header claims {hlen} bytes, {} present",
                rest.len()
            )));
        }
        let index: Vec<IndexEntry> =
            serde_json::from_slice(&rest[..hlen]).map_err(|e| MergeError::Header(e.to_string()))?;
        let payload = &rest[hlen..];

        let mut names = BTreeSet::new();
        for e in &index {
            if !names.insert(e.name.as_str()) {
                return Err(MergeError::DuplicateName(e.name.clone()));
            }
            if e.dtype != "f32" {
                return Err(MergeError::Header(format!(
                    "tensor `{}` has dtype `{}`",
                    e.name, e.dtype
                )));
            }
            let expected = e
                .shape
                .iter()
                .try_fold(4u64, |acc, &d| acc.checked_mul(d as u64));
            if expected != Some(e.nbytes) {
                return Err(MergeError::Header(format!(
                    "tensor `{}`: nbytes does not match shape",
                    e.name
                )));
            }
            match e.offset.checked_add(e.nbytes) {
                Some(end) if end <= payload.len() as u64 => {}
                _ => {
                    return Err(MergeError::OutOfBounds {
                        name: e.name.clone(),
                    })
                }
            }
        }
        let mut spans: Vec<&IndexEntry> = index.iter().filter(|e| e.nbytes > 0).collect();
        spans.sort_by_key(|e| e.offset);
        for w in spans.windows(2) {
            if w[0].offset + w[0].nbytes > w[1].offset {
                return Err(MergeError::Overlap(w[0].name.clone(), w[1].name.clone()));
            }
        }

        let tensors = index
            .iter()
            .map(|e| {
                let raw = &payload[e.offset as usize..(e.offset + e.nbytes) as usize];
                Tensor {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect(),
                }
            })
            .collect();
        Ok(TensorFile { tensors })
    }

    pub fn read(path: &Path) -> Result<Self, MergeError> {
        let bytes =
            std::fs::read(path).map_err(|e| MergeError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), MergeError> {
        crate::io::write_atomic(path, &self.to_bytes()).map_err(|e| MergeError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MergeConfig {
    pub t: f64,
    pub parallel_threshold: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl MergeConfig {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            parallel_threshold: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<(), MergeError> {
        if !(0.0..=1.0).contains(&self.t) {
            return Err(MergeError::Config(format!(
                "t = {} is outside [0, 1]",
                self.t
            )));
        }
        if !(self.parallel_threshold >= 0.0) {
            return Err(MergeError::Config(
                "parallel_threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Spherical,
    /// Nearly parallel or antiparallel inputs.
    Linear,
    /// One input has zero norm, so no angle exists.
    LinearZeroNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMergeInfo {
    pub name: String,
    pub method: Interpolation,
    pub cos_omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub file: TensorFile,
    pub info: Vec<TensorMergeInfo>,
}

fn slerp_tensor(a: &Tensor, b: &Tensor, cfg: &MergeConfig) -> (Tensor, TensorMergeInfo) {
    let t = cfg.t;
    let info = |method, cos_omega| TensorMergeInfo {
        name: a.name.clone(),
        method,
        cos_omega,
    };
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let (na, nb) = (norm(&a.data), norm(&b.data));
    let lerp = |method, cos| {
        let data = a
            .data
            .iter()
            .zip(&b.data)
            .map(|(&x, &y)| ((1.0 - t) * x as f64 + t * y as f64) as f32)
            .collect();
        (Tensor { data, ..a.clone() }, info(method, cos))
    };
    if na == 0.0 || nb == 0.0 {
        return lerp(Interpolation::LinearZeroNorm, 0.0);
    }
    let dot: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    if 1.0 - cos.abs() < cfg.parallel_threshold {
        return lerp(Interpolation::Linear, cos);
    }
    let omega = cos.acos();
    let s = omega.sin();
    let (wa, wb) = (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s);
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (wa * x as f64 + wb * y as f64) as f32)
        .collect();
    (
        Tensor { data, ..a.clone() },
        info(Interpolation::Spherical, cos),
    )
}

/// Per-tensor spherical interpolation from `a` (t = 0) to `b` (t = 1). The
/// endpoints return the corresponding input exactly.
pub fn slerp_merge(
    a: &TensorFile,
    b: &TensorFile,
    cfg: &MergeConfig,
) -> Result<MergeOutcome, MergeError> {
    cfg.validate()?;
    let a = a.clone().canonical();
    let b = b.clone().canonical();
    let names = |f: &TensorFile| f.tensors.iter().map(|t| t.name.clone()).collect::<Vec<_>>();
    if names(&a) != names(&b) {
        return Err(MergeError::Mismatch(format!(
            "{:?} vs {:?}",
            names(&a),
            names(&b)
        )));
    }
    if let Some((x, y)) = a
        .tensors
        .iter()
        .zip(&b.tensors)
        .find(|(x, y)| x.shape != y.shape)
    {
        return Err(MergeError::Mismatch(format!(
            "`{}` has shape {:?} vs {:?}",
            x.name, x.shape, y.shape
        )));
    }
    let merged: Vec<(Tensor, TensorMergeInfo)> = a
        .tensors
        .par_iter()
        .zip(&b.tensors)
        .map(|(x, y)| {
            let (mut out, info) = slerp_tensor(x, y, cfg);
            if cfg.t == 0.0 {
                out.data.clone_from(&x.data);
            } else if cfg.t == 1.0 {
                out.data.clone_from(&y.data);
            }
            (out, info)
        })
        .collect();
    let (tensors, info) = merged.into_iter().unzip();
    Ok(MergeOutcome {
        file: TensorFile { tensors },
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use proptest::prelude::*;

    fn random_file(seed: u64, unit: bool) -> TensorFile {
        let mut rng = Prng::new(seed);
        let shapes = [vec![3, 4], vec![7], vec![2, 2, 2]];
        let tensors = shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let len = shape.iter().product();
                let mut data: Vec<f32> = (0..len)
                    .map(|_| (rng.next_f64() * 2.0 - 1.0) as f32)
                    .collect();
                if unit {
                    let n = data.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                    data.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
                }
                Tensor::new(&format!("layer{}.w", 2 - i), shape.clone(), data).unwrap()
            })
            .collect();
        TensorFile { tensors }
    }

    fn norm(t: &Tensor) -> f64 {
        t.data
            .iter()
            .map(|&x| (x as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn round_trip_bitwise() {
        let f = random_file(1, false);
        let back = TensorFile::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back, f);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.qt");
        f.write(&p).unwrap();
        assert_eq!(TensorFile::read(&p).unwrap(), f);
    }

    fn with_index(index: serde_json::Value, payload: &[u8]) -> Vec<u8> {
        let header = serde_json::to_vec(&index).unwrap();
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn format_errors() {
        let mut bytes = random_file(1, false).to_bytes();
        bytes[0] = b'X';
        assert_eq!(TensorFile::from_bytes(&bytes), Err(MergeError::BadMagic));
        let bytes = random_file(1, false).to_bytes();
        assert!(matches!(
            TensorFile::from_bytes(&bytes[..8]),
            Err(MergeError::Truncated(_))
        ));

        let e = |name: &str, offset: u64| serde_json::json!({"name": name, "dtype": "f32", "shape": [2], "offset": offset, "nbytes": 8});
        let payload = [0u8; 12];
        let oob = with_index(serde_json::json!([e("a", 8)]), &payload);
        assert!(matches!(
            TensorFile::from_bytes(&oob),
            Err(MergeError::OutOfBounds { .. })
        ));
        let overlap = with_index(serde_json::json!([e("a", 0), e("b", 4)]), &payload);
        assert!(matches!(
            TensorFile::from_bytes(&overlap),
            Err(MergeError::Overlap(..))
        ));
        let dup = with_index(serde_json::json!([e("a", 0), e("a", 0)]), &payload);
        assert!(matches!(
            TensorFile::from_bytes(&dup),
            Err(MergeError::DuplicateName(_))
        ));
        let bad = serde_json::json!([{"name": "a", "dtype": "f32", "shape": [3], "offset": 0, "nbytes": 8}]);
        assert!(matches!(
            TensorFile::from_bytes(&with_index(bad, &payload)),
            Err(MergeError::Header(_))
        ));
        let f16 = serde_json::json!([{"name": "a", "dtype": "f16", "shape": [2], "offset": 0, "nbytes": 8}]);
        assert!(matches!(
            TensorFile::from_bytes(&with_index(f16, &payload)),
            Err(MergeError::Header(_))
        ));
    }

    #[test]
    fn orthonormal_midpoint() {
        let a = TensorFile {
            tensors: vec![Tensor::new("w", vec![2], vec![1.0, 0.0]).unwrap()],
        };
        let b = TensorFile {
            tensors: vec![Tensor::new("w", vec![2], vec![0.0, 1.0]).unwrap()],
        };
        let out = slerp_merge(&a, &b, &MergeConfig::new(0.5)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let d = &out.file.tensors[0].data;
        assert!((d[0] as f64 - h).abs() < 1e-6 && (d[1] as f64 - h).abs() < 1e-6);
        assert_eq!(out.info[0].method, Interpolation::Spherical);
    }

    #[test]
    fn equal_inputs_fall_back_to_linear() {
        let a = random_file(3, false);
        for t in [0.0, 0.3, 1.0] {
            let out = slerp_merge(&a, &a, &MergeConfig::new(t)).unwrap();
            assert_eq!(out.file, a.clone().canonical());
            assert!(out.info.iter().all(|i| i.method == Interpolation::Linear));
        }
    }

    #[test]
    fn zero_norm_flagged() {
        let a = TensorFile {
            tensors: vec![Tensor::new("w", vec![2], vec![0.0, 0.0]).unwrap()],
        };
        let b = TensorFile {
            tensors: vec![Tensor::new("w", vec![2], vec![2.0, 4.0]).unwrap()],
        };
        let out = slerp_merge(&a, &b, &MergeConfig::new(0.5)).unwrap();
        assert_eq!(out.info[0].method, Interpolation::LinearZeroNorm);
        assert_eq!(out.file.tensors[0].data, vec![1.0, 2.0]);
    }

    #[test]
    fn mismatches_rejected() {
        let a = random_file(1, false);
        let mut b = random_file(2, false);
        b.tensors[0].name = "other".into();
        assert!(matches!(
            slerp_merge(&a, &b, &MergeConfig::new(0.5)),
            Err(MergeError::Mismatch(_))
        ));
        let mut b = random_file(2, false);
        b.tensors[1].shape = vec![7, 1];
        assert!(matches!(
            slerp_merge(&a, &b, &MergeConfig::new(0.5)),
            Err(MergeError::Mismatch(_))
        ));
        assert!(slerp_merge(&a, &a, &MergeConfig::new(1.5)).is_err());
    }

    #[test]
    fn output_is_canonical() {
        let out = slerp_merge(
            &random_file(1, false),
            &random_file(2, false),
            &MergeConfig::new(0.5),
        )
        .unwrap();
        let names: Vec<&str> = out.file.tensors.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["layer0.w", "layer1.w", "layer2.w"]);
    }

    proptest! {
        #[test]
        fn stays_on_sphere_and_symmetric(sa in 0u64..1000, sb in 1000u64..2000, ti in 0usize..5) {
            let t = [0.0, 0.25, 0.5, 0.75, 1.0][ti];
            let (a, b) = (random_file(sa, true), random_file(sb, true));
            let ab = slerp_merge(&a, &b, &MergeConfig::new(t)).unwrap().file;
            let ba = slerp_merge(&b, &a, &MergeConfig::new(1.0 - t)).unwrap().file;
            for (x, y) in ab.tensors.iter().zip(&ba.tensors) {
                prop_assert!((norm(x) - 1.0).abs() < 1e-6);
                for (p, q) in x.data.iter().zip(&y.data) {
                    prop_assert!((p - q).abs() < 1e-6);
                }
            }
            let ca = a.clone().canonical();
            let cb = b.clone().canonical();
            if t == 0.0 {
                prop_assert_eq!(&ab, &ca);
            }
            if t == 1.0 {
                prop_assert_eq!(&ab, &cb);
            }
        }
    }
}
