//! Binary document-embedding file, little-endian:
//!
//! ```text
//! magic "CVEM" | version u32 | dimension u32 | count u64
//! count × ( id_len u16 | id bytes (UTF-8) | dimension × f32 )
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"CVEM";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated {what} at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        Ok(EmbeddingStore {
            dimension,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let doc_id = doc_id.into();
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("non-finite entry in vector for {doc_id:?}")));
        }
        if doc_id.len() > u16::MAX as usize {
            return Err(Error::Format(format!("doc_id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&doc_id) {
            return Err(Error::Format(format!("duplicate doc_id {doc_id:?}")));
        }
        self.index.insert(doc_id.clone(), self.ids.len());
        self.ids.push(doc_id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, doc_id: &str) -> Result<&[f32]> {
        self.index
            .get(doc_id)
            .map(|&i| self.vectors[i].as_slice())
            .ok_or_else(|| Error::MissingEmbedding(doc_id.to_owned()))
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.index.contains_key(doc_id)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.len() * (2 + 16 + 4 * self.dimension));
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != EMBEDDING_MAGIC {
            return Err(Error::Format("bad magic, expected CVEM".into()));
        }
        let version = r.u32("version")?;
        if version != EMBEDDING_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dimension = r.u32("dimension")? as usize;
        let mut store = EmbeddingStore::new(dimension)?;
        let count = r.u64("record count")?;
        for k in 0..count {
            let len = r.u16("doc_id length")? as usize;
            let id = std::str::from_utf8(r.take(len, "doc_id")?)
                .map_err(|_| Error::Format(format!("record {k}: doc_id is not UTF-8")))?;
            let raw = r.take(4 * dimension, "vector")?;
            let vector = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.insert(id, vector)?;
        }
        if r.pos != buf.len() {
            return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&buf)
}

impl EmbeddingStore {
    pub fn load(path: &Path) -> Result<Self> {
        load_embeddings(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(n: usize, dim: usize) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(dim).unwrap();
        for i in 0..n {
            s.insert(format!("doc-{i}"), (0..dim).map(|j| (i * dim + j) as f32 * 0.5 - 3.25).collect())
                .unwrap();
        }
        s
    }

    #[test]
    fn round_trip_768() {
        let s = store(3, 768);
        let back = EmbeddingStore::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.dimension(), 768);
        assert_eq!(back, s);
    }

    #[test]
    fn header_layout() {
        let bytes = store(1, 2).to_bytes();
        assert_eq!(&bytes[..4], b"CVEM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 1);
        assert_eq!(u16::from_le_bytes(bytes[20..22].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 20 + 2 + 5 + 8);
    }

    #[test]
    fn corrupt_files() {
        let mut bytes = store(2, 4).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(EmbeddingStore::from_bytes(&bytes), Err(Error::Format(_))));

        let bytes = store(2, 4).to_bytes();
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format(m)) if m.contains("truncated")
        ));

        let mut zero_dim = store(0, 4).to_bytes();
        zero_dim[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(EmbeddingStore::from_bytes(&zero_dim).is_err());
    }

    #[test]
    fn empty_store() {
        let s = EmbeddingStore::from_bytes(&store(0, 16).to_bytes()).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.dimension(), 16);
        assert!(matches!(s.get("anything"), Err(Error::MissingEmbedding(_))));
    }
}
