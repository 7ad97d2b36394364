//! Exact flat inner-product index with a compact binary file format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "VIDX" | version u32 = 1 | dim u32 | count u64
//! per entry: id_len u32 | id utf-8 | meta_len u32 | meta json utf-8 | dim x f32
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingVector};

const MAGIC: &[u8; 4] = b"VIDX";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkMetadata {
    pub source_url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f32,
    pub metadata: ChunkMetadata,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate chunk id {0:?}")]
    DuplicateId(String),
    #[error("dimension mismatch: index has {expected}, vector has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    metadata: Vec<ChunkMetadata>,
    /// Row-major, `ids.len() * dim` values.
    vectors: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "index dimension must be positive");
        Self {
            dim,
            ids: Vec::new(),
            metadata: Vec::new(),
            vectors: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, chunk_id: &str) -> bool {
        self.positions.contains_key(chunk_id)
    }

    pub fn add(
        &mut self,
        chunk_id: impl Into<String>,
        vector: &EmbeddingVector,
        metadata: ChunkMetadata,
    ) -> Result<(), IndexError> {
        let chunk_id = chunk_id.into();
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if self.positions.contains_key(&chunk_id) {
            return Err(IndexError::DuplicateId(chunk_id));
        }
        self.positions.insert(chunk_id.clone(), self.ids.len());
        self.ids.push(chunk_id);
        self.metadata.push(metadata);
        self.vectors.extend_from_slice(vector.values());
        Ok(())
    }

    pub fn get(&self, chunk_id: &str) -> Option<(EmbeddingVector, &ChunkMetadata)> {
        let pos = *self.positions.get(chunk_id)?;
        Some((
            EmbeddingVector::from_raw(self.row(pos).to_vec()),
            &self.metadata[pos],
        ))
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32], &ChunkMetadata)> {
        (0..self.len()).map(move |i| (self.ids[i].as_str(), self.row(i), &self.metadata[i]))
    }

    fn row(&self, pos: usize) -> &[f32] {
        &self.vectors[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Top `k` entries by inner product, highest first. Equal scores keep
    /// insertion order.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let k = k.min(self.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        let q = query.values();
        let mut scored: Vec<(usize, f32)> =
            (0..self.len()).map(|i| (i, dot(self.row(i), q))).collect();
        let rank = |a: &(usize, f32), b: &(usize, f32)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank);
            scored.truncate(k);
        }
        scored.sort_by(rank);
        Ok(scored
            .into_iter()
            .map(|(i, score)| SearchHit {
                chunk_id: self.ids[i].clone(),
                score,
                metadata: self.metadata[i].clone(),
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.vectors.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, row, meta) in self.iter() {
            let meta = serde_json::to_vec(meta).expect("metadata serializes");
            buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
            buf.extend_from_slice(&meta);
            for v in row {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(IndexError::CorruptIndex("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(IndexError::CorruptIndex(format!(
                "unsupported version {version}"
            )));
        }
        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(IndexError::CorruptIndex("zero dimension".into()));
        }
        let count = r.u64("count")?;
        let mut index = VectorIndex::new(dim);
        for n in 0..count {
            let id_len = r.u32("chunk id length")? as usize;
            let id = std::str::from_utf8(r.take(id_len, "chunk id")?)
                .map_err(|_| IndexError::CorruptIndex(format!("entry {n}: chunk id is not utf-8")))?
                .to_string();
            let meta_len = r.u32("metadata length")? as usize;
            let metadata: ChunkMetadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
                .map_err(|e| IndexError::CorruptIndex(format!("entry {n}: metadata: {e}")))?;
            let raw = r.take(dim * 4, "vector")?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
                .collect();
            index
                .add(id, &EmbeddingVector::from_raw(values), metadata)
                .map_err(|e| IndexError::CorruptIndex(format!("entry {n}: {e}")))?;
        }
        if r.pos != bytes.len() {
            return Err(IndexError::CorruptIndex(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(index)
    }

    /// Writes to a sibling temp file and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let tmp = path.with_extension("vidx.tmp");
        {
            let mut out = BufWriter::new(fs::File::create(&tmp)?);
            out.write_all(&self.to_bytes())?;
            out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| IndexError::CorruptIndex(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(s: &str) -> ChunkMetadata {
        ChunkMetadata {
            source_url: format!("https://x.example/{s}"),
            text: s.to_string(),
        }
    }

    fn unit(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec())
    }

    #[test]
    fn add_and_duplicate() {
        let mut idx = VectorIndex::new(2);
        idx.add("a", &unit(&[1.0, 0.0]), meta("a")).unwrap();
        assert_eq!(idx.len(), 1);
        assert!(matches!(
            idx.add("a", &unit(&[0.0, 1.0]), meta("a")),
            Err(IndexError::DuplicateId(id)) if id == "a"
        ));
        assert!(matches!(
            idx.add("b", &unit(&[1.0, 0.0, 0.0]), meta("b")),
            Err(IndexError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn empty_index_search() {
        let idx = VectorIndex::new(3);
        assert!(idx.search(&unit(&[1.0, 0.0, 0.0]), 5).unwrap().is_empty());
        assert!(matches!(
            idx.search(&unit(&[1.0, 0.0]), 5),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_similarity_ranks_first() {
        let mut idx = VectorIndex::new(3);
        let v = unit(&[0.2, 0.5, -0.7]);
        idx.add("other", &unit(&[1.0, 0.0, 0.0]), meta("o"))
            .unwrap();
        idx.add("v", &v, meta("v")).unwrap();
        let hits = idx.search(&v, 1).unwrap();
        assert_eq!(hits[0].chunk_id, "v");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ties_keep_insertion_order_and_zero_query() {
        let mut idx = VectorIndex::new(2);
        for id in ["c", "a", "b"] {
            idx.add(id, &unit(&[1.0, 0.0]), meta(id)).unwrap();
        }
        let ids = |hits: Vec<SearchHit>| hits.into_iter().map(|h| h.chunk_id).collect::<Vec<_>>();
        assert_eq!(
            ids(idx.search(&unit(&[1.0, 0.0]), 2).unwrap()),
            vec!["c", "a"]
        );
        let zero = idx.search(&EmbeddingVector::zeros(2), 10).unwrap();
        assert!(zero.iter().all(|h| h.score == 0.0));
        assert_eq!(ids(zero), vec!["c", "a", "b"]);
    }

    #[test]
    fn round_trip_and_corruption() {
        let empty = VectorIndex::new(7);
        assert_eq!(VectorIndex::from_bytes(&empty.to_bytes()).unwrap(), empty);

        let mut idx = VectorIndex::new(3);
        idx.add("a#0", &unit(&[1.0, 2.0, 3.0]), meta("a")).unwrap();
        idx.add("b#0", &unit(&[-1.0, 0.5, 0.0]), meta("b")).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], b"VIDX");
        assert_eq!(VectorIndex::from_bytes(&bytes).unwrap(), idx);

        for cut in [0, 3, 10, 19, bytes.len() - 1] {
            assert!(matches!(
                VectorIndex::from_bytes(&bytes[..cut]),
                Err(IndexError::CorruptIndex(_))
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            VectorIndex::from_bytes(&bad),
            Err(IndexError::CorruptIndex(_))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            VectorIndex::from_bytes(&bad),
            Err(IndexError::CorruptIndex(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(
            VectorIndex::from_bytes(&long),
            Err(IndexError::CorruptIndex(_))
        ));
    }

    #[test]
    fn header_layout_is_little_endian() {
        let mut idx = VectorIndex::new(2);
        idx.add("x", &EmbeddingVector::from_raw(vec![1.0, -0.0]), meta("x"))
            .unwrap();
        let b = idx.to_bytes();
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(&b[8..12], &[2, 0, 0, 0]);
        assert_eq!(&b[12..20], &[1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&b[20..24], &[1, 0, 0, 0]);
        assert_eq!(b[24], b'x');
        let tail = &b[b.len() - 8..];
        assert_eq!(tail, &[0, 0, 0x80, 0x3f, 0, 0, 0, 0x80]);
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.vidx");
        let mut idx = VectorIndex::new(2);
        idx.add("a", &unit(&[3.0, 4.0]), meta("a")).unwrap();
        idx.save(&path).unwrap();
        assert_eq!(VectorIndex::load(&path).unwrap(), idx);
        assert!(!dir.path().join("i.vidx.tmp").exists());
        assert!(matches!(
            VectorIndex::load(&dir.path().join("missing.vidx")),
            Err(IndexError::Io(_))
        ));
    }
}
