//! EMB1 binary container and the [`EmbeddingMatrix`] it loads into.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "EMB1" | u32 version=1 | u64 n | u32 d | u8 dtype=0 (f32)
//! u32 id_count | id_count × (u32 byte_len | UTF-8 bytes)
//! n·d × f32 row-major payload
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::ArrayView2;

use super::StoreError;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Dense `n × d` matrix of f32 rows with unique string ids.
///
/// Construction validates every invariant, after which the matrix is never
/// mutated; share it behind an `Arc` when several consumers need it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self, StoreError> {
        let expected = ids.len() as u64 * dim as u64;
        if data.len() as u64 != expected {
            return Err(StoreError::HeaderMismatch {
                expected,
                actual: data.len() as u64,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFiniteValue {
                row: pos.checked_div(dim).unwrap_or(0),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            ids,
            dim,
            data,
            index,
        })
    }

    /// Rows of `data` are named `prefix0`, `prefix1`, ...
    pub fn with_generated_ids(
        prefix: &str,
        dim: usize,
        data: Vec<f32>,
    ) -> Result<Self, StoreError> {
        let n = data.len().checked_div(dim).unwrap_or(0);
        let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(ids, dim, data)
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.n(), self.dim), &self.data)
            .expect("shape validated at construction")
    }

    /// Builds a new matrix with the same ids and replaced values.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self, StoreError> {
        Self::new(self.ids.clone(), self.dim, data)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&[DTYPE_F32])?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, StoreError> {
        let mut magic = [0u8; 4];
        read_exact_or(&mut r, &mut magic, StoreError::BadMagic)?;
        if &magic != MAGIC {
            return Err(StoreError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let n = read_u64(&mut r)?;
        let dim = read_u32(&mut r)? as usize;
        let mut dtype = [0u8; 1];
        read_exact_or(&mut r, &mut dtype, truncated("dtype"))?;
        if dtype[0] != DTYPE_F32 {
            return Err(StoreError::UnsupportedDtype(dtype[0]));
        }

        let id_count = read_u32(&mut r)? as u64;
        if id_count != n {
            return Err(StoreError::HeaderMismatch {
                expected: n,
                actual: id_count,
            });
        }
        let mut ids = Vec::with_capacity(n.min(1 << 20) as usize);
        for _ in 0..id_count {
            let len = read_u32(&mut r)? as usize;
            let mut bytes = vec![0u8; len];
            read_exact_or(&mut r, &mut bytes, truncated("id table"))?;
            let id = String::from_utf8(bytes).map_err(|_| StoreError::InvalidId)?;
            ids.push(id);
        }

        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected = n * dim as u64;
        if payload.len() % 4 != 0 || payload.len() as u64 / 4 != expected {
            return Err(StoreError::HeaderMismatch {
                expected,
                actual: payload.len() as u64 / 4,
            });
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(ids, dim, data)
    }
}

fn truncated(what: &'static str) -> StoreError {
    StoreError::Truncated(what)
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], err: StoreError) -> Result<(), StoreError> {
    match r.read_exact(buf) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(err),
        Err(e) => Err(e.into()),
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, StoreError> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, truncated("header"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, StoreError> {
    let mut b = [0u8; 8];
    read_exact_or(r, &mut b, truncated("header"))?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, StoreError> {
    let file = File::open(path.as_ref())?;
    EmbeddingMatrix::read_from(BufReader::new(file))
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let file = File::create(path.as_ref())?;
    let mut w = BufWriter::new(file);
    m.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(m: &EmbeddingMatrix) -> Vec<u8> {
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        buf
    }

    fn sample() -> EmbeddingMatrix {
        EmbeddingMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn reads_back_three_by_two() {
        let m = EmbeddingMatrix::read_from(encode(&sample()).as_slice()).unwrap();
        assert_eq!(m.n(), 3);
        assert_eq!(m.dim(), 2);
        assert_eq!(m.row(2), &[1.0, 1.0]);
        assert_eq!(m.position("b"), Some(1));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..4], b"EMB1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        assert_eq!(bytes[20], 0);
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 3);
        // 3 ids of 1 byte each, then 6 floats
        assert_eq!(bytes.len(), 25 + 3 * 5 + 6 * 4);
    }

    #[test]
    fn short_payload_is_header_mismatch() {
        let mut bytes = encode(&sample());
        bytes.truncate(bytes.len() - 4);
        match EmbeddingMatrix::read_from(bytes.as_slice()) {
            Err(StoreError::HeaderMismatch { expected, actual }) => {
                assert_eq!((expected, actual), (6, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_reports_row() {
        let mut data = vec![0.5f32; 10 * 3];
        data[7 * 3 + 1] = f32::NAN;
        let ids = (0..10).map(|i| format!("r{i}")).collect();
        // bypass validation by encoding a valid matrix then patching the payload
        let ok = EmbeddingMatrix::new(ids, 3, vec![0.5; 30]).unwrap();
        let mut bytes = encode(&ok);
        let payload_start = bytes.len() - 30 * 4;
        let off = payload_start + (7 * 3 + 1) * 4;
        bytes[off..off + 4].copy_from_slice(&data[7 * 3 + 1].to_le_bytes());
        assert!(matches!(
            EmbeddingMatrix::read_from(bytes.as_slice()),
            Err(StoreError::NonFiniteValue { row: 7 })
        ));
    }

    #[test]
    fn bad_magic_and_duplicates() {
        assert!(matches!(
            EmbeddingMatrix::read_from(&b"EMB2xxxxxxxxxxxxxxxxxxxxxxx"[..]),
            Err(StoreError::BadMagic)
        ));
        assert!(matches!(
            EmbeddingMatrix::read_from(&b"EM"[..]),
            Err(StoreError::BadMagic)
        ));
        assert!(matches!(
            EmbeddingMatrix::new(vec!["x".into(), "x".into()], 1, vec![0.0, 1.0]),
            Err(StoreError::DuplicateId(id)) if id == "x"
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.emb1");
        write_embeddings(&sample(), &path).unwrap();
        assert_eq!(load_embeddings(&path).unwrap(), sample());
    }

    proptest! {
        #[test]
        fn byte_identical_round_trip(
            n in 0usize..6,
            d in 0usize..5,
            seed in any::<u64>(),
        ) {
            let data: Vec<f32> = (0..n * d)
                .map(|i| ((seed.wrapping_mul(i as u64 + 1) % 2001) as f32 - 1000.0) / 7.0)
                .collect();
            let ids = (0..n).map(|i| format!("doc-{i}-é")).collect();
            let m = EmbeddingMatrix::new(ids, d, data).unwrap();
            let bytes = encode(&m);
            let back = EmbeddingMatrix::read_from(bytes.as_slice()).unwrap();
            prop_assert_eq!(encode(&back), bytes);
        }
    }
}
