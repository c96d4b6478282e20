//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "RFMLPFST"
//! version      u32
//! n_features   u64      N
//! classes      u64      C
//! names        N feature names, then C class names, each u64 length + UTF-8
//! standardizer N means, N stddevs                              (f64)
//! whitened     u8       0 or 1
//!   floor, N means, N×N eigenvectors row-major, N eigenvalues  (f64, if 1)
//! priors       N equiprobable priors                           (f64)
//! weighted     u8       0 or 1, then N weighted priors if 1
//! members      u64      count, then per member:
//!   excluded u64, d_in u64, hidden u64, classes u64,
//!   w1 (d_in×hidden), b1, w2 (hidden×C), b2                    (f64)
//! ```
//!
//! Encoding is a pure function of the model, so equal models give equal bytes.

use std::path::Path;

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::forest::{FeatureSubset, ForestModel, WhiteningTransform};
use crate::linalg::Matrix;
use crate::mlp::MlpModel;

pub const MAGIC: &[u8; 8] = b"RFMLPFST";
pub const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) {
        self.u64(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("array length overflow".into()))?;
        let raw = self.take(len)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        Matrix::new(rows, cols, self.f64s(n)?).map_err(|e| Error::Format(e.to_string()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u64()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("name is not UTF-8".into()))
    }

    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Format(format!("invalid flag byte {v}"))),
        }
    }
}

pub fn encode_model(model: &ForestModel) -> Vec<u8> {
    let n = model.n_features();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u64(n);
    w.u64(model.class_count);
    for name in model.feature_names.iter().chain(&model.class_names) {
        w.str(name);
    }
    w.f64s(&model.standardizer.means);
    w.f64s(&model.standardizer.stddevs);
    match &model.whitening {
        Some(t) => {
            w.u8(1);
            w.f64s(&[t.eigenvalue_floor]);
            w.f64s(&t.means);
            w.f64s(t.eigenvectors.as_slice());
            w.f64s(&t.eigenvalues);
        }
        None => w.u8(0),
    }
    w.f64s(&model.priors_equiprobable);
    match &model.priors_weighted {
        Some(p) => {
            w.u8(1);
            w.f64s(p);
        }
        None => w.u8(0),
    }
    w.u64(model.members.len());
    for (member, subset) in model.members.iter().zip(&model.subsets) {
        w.u64(subset.excluded_index);
        w.u64(member.d_in());
        w.u64(member.hidden());
        w.u64(member.classes());
        for buf in member.buffers() {
            w.f64s(buf);
        }
    }
    w.buf
}

pub fn decode_model(bytes: &[u8]) -> Result<ForestModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let n = r.u64()?;
    let class_count = r.u64()?;
    if n < 2 || class_count < 2 {
        return Err(Error::Format(format!(
            "invalid header: {n} features, {class_count} classes"
        )));
    }
    let feature_names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let class_names = (0..class_count).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let standardizer = Standardizer {
        means: r.f64s(n)?,
        stddevs: r.f64s(n)?,
    };
    let whitening = if r.flag()? {
        let eigenvalue_floor = r.f64s(1)?[0];
        Some(WhiteningTransform {
            eigenvalue_floor,
            means: r.f64s(n)?,
            eigenvectors: r.matrix(n, n)?,
            eigenvalues: r.f64s(n)?,
        })
    } else {
        None
    };
    let priors_equiprobable = r.f64s(n)?;
    let priors_weighted = if r.flag()? { Some(r.f64s(n)?) } else { None };

    let count = r.u64()?;
    if count != n {
        return Err(Error::Format(format!(
            "expected {n} members, file declares {count}"
        )));
    }
    let mut members = Vec::with_capacity(n);
    let mut subsets = Vec::with_capacity(n);
    for j in 0..n {
        let excluded = r.u64()?;
        let (d_in, hidden, classes) = (r.u64()?, r.u64()?, r.u64()?);
        if excluded != j || d_in != n - 1 || classes != class_count {
            return Err(Error::Format(format!(
                "member {j} has inconsistent shape (excluded {excluded}, input {d_in}, classes {classes})"
            )));
        }
        let w1 = r.matrix(d_in, hidden)?;
        let b1 = r.f64s(hidden)?;
        let w2 = r.matrix(hidden, classes)?;
        let b2 = r.f64s(classes)?;
        members.push(MlpModel::from_parts(w1, b1, w2, b2).map_err(|e| Error::Format(e.to_string()))?);
        subsets.push(FeatureSubset::leave_one_out(n, j));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(ForestModel {
        class_count,
        feature_names,
        class_names,
        standardizer,
        whitening,
        subsets,
        members,
        priors_equiprobable,
        priors_weighted,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &ForestModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ForestModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::forest::train_forest;
    use crate::mlp::TrainConfig;
    use crate::seed;
    use rand::Rng;

    fn small_forest(whiten: bool) -> ForestModel {
        let mut rng = seed::rng(1);
        let rows: Vec<[f64; 3]> = (0..24)
            .map(|i| {
                let c = (i % 2) as f64;
                [c + rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0), -c]
            })
            .collect();
        let labels = (0..24).map(|i| i % 2).collect();
        let ds = Dataset::from_parts(Matrix::from_rows(&rows).unwrap(), labels, 2).unwrap();
        let cfg = TrainConfig {
            hidden: 5,
            epochs: 3,
            batches_per_epoch: 4,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..24).collect();
        train_forest(&ds, &idx, &cfg, whiten, 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for whiten in [false, true] {
            let model = small_forest(whiten);
            let bytes = encode_model(&model);
            assert_eq!(decode_model(&bytes).unwrap(), model);
            assert_eq!(encode_model(&decode_model(&bytes).unwrap()), bytes);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rfmlp");
        let model = small_forest(true);
        save_model(&path, &model).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        assert!(matches!(
            save_model(dir.path().join("missing/m.rfmlp"), &model),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = encode_model(&small_forest(false));
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            decode_model(&bytes),
            Err(Error::Version { found: 7, expected: FORMAT_VERSION })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_model(&small_forest(true));
        assert!(matches!(decode_model(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(decode_model(b"garbage!"), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_model(&extra), Err(Error::Format(_))));
    }
}
