//! Binary index file: header, f32 payload, id map, optional graph, SHA-256 trailer.
//!
//! ```text
//! magic "RGDENSE1" | backend u8 | dim u32 | n u32 | seed u64 | m u32 | efC u32 | efS u32
//! encoder str | corpus fingerprint str
//! n·dim f32 | n × (position u32, id str)
//! [hnsw] entry u32 | max_layer u32 | n × (layers u32, per layer: count u32, ids u32…)
//! sha256(all preceding bytes)
//! ```
//! All integers little-endian; `str` is a u32 byte length followed by UTF-8.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{DenseBackend, DenseError, DenseIndex, HnswGraph, HnswParams};

const MAGIC: &[u8; 8] = b"RGDENSE1";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DenseError> {
        let end = self
            .at
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| DenseError::Corrupted("unexpected end of file".into()))?;
        let out = &self.buf[self.at..end];
        self.at = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, DenseError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, DenseError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, DenseError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self) -> Result<f32, DenseError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn str(&mut self) -> Result<String, DenseError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| DenseError::Corrupted("invalid UTF-8 string".into()))
    }
}

impl DenseIndex {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::with_capacity(64 + self.vectors.len() * 4));
        w.0.extend_from_slice(MAGIC);
        w.u8(match self.backend {
            DenseBackend::FlatExact => 0,
            DenseBackend::Hnsw => 1,
        });
        w.u32(self.dim as u32);
        w.u32(self.len() as u32);
        w.u64(self.params.seed);
        w.u32(self.params.m as u32);
        w.u32(self.params.ef_construction as u32);
        w.u32(self.params.ef_search as u32);
        w.str(&self.encoder);
        w.str(&self.corpus_fingerprint);
        for v in &self.vectors {
            w.0.extend_from_slice(&v.to_le_bytes());
        }
        for (id, pos) in self.ids.iter().zip(&self.positions) {
            w.u32(*pos as u32);
            w.str(id);
        }
        if let Some(g) = &self.graph {
            w.u32(g.entry_point);
            w.u32(g.max_layer as u32);
            for layers in &g.links {
                w.u32(layers.len() as u32);
                for list in layers {
                    w.u32(list.len() as u32);
                    for &nb in list {
                        w.u32(nb);
                    }
                }
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DenseError> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(DenseError::Corrupted("file too short".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(DenseError::Corrupted("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, at: 0 };
        if r.take(8)? != MAGIC {
            return Err(DenseError::Corrupted("bad magic".into()));
        }
        let backend = match r.u8()? {
            0 => DenseBackend::FlatExact,
            1 => DenseBackend::Hnsw,
            other => return Err(DenseError::Corrupted(format!("unknown backend tag {other}"))),
        };
        let dim = r.u32()? as usize;
        let n = r.u32()? as usize;
        let params = HnswParams {
            seed: r.u64()?,
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
        };
        let encoder = r.str()?;
        let corpus_fingerprint = r.str()?;
        let total = n
            .checked_mul(dim)
            .filter(|t| t.saturating_mul(4) <= body.len())
            .ok_or_else(|| DenseError::Corrupted("vector payload size".into()))?;
        let vectors = (0..total).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        let mut ids = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        for _ in 0..n {
            positions.push(r.u32()? as usize);
            ids.push(r.str()?);
        }
        let graph = match backend {
            DenseBackend::FlatExact => None,
            DenseBackend::Hnsw => {
                let entry_point = r.u32()?;
                let max_layer = r.u32()? as usize;
                let mut links = Vec::with_capacity(n);
                for _ in 0..n {
                    let layers = r.u32()? as usize;
                    let mut node = Vec::with_capacity(layers.min(64));
                    for _ in 0..layers {
                        let count = r.u32()? as usize;
                        let list = (0..count)
                            .map(|_| r.u32())
                            .collect::<Result<Vec<_>, _>>()?;
                        if list.iter().any(|&nb| nb as usize >= n) {
                            return Err(DenseError::Corrupted("neighbor out of range".into()));
                        }
                        node.push(list);
                    }
                    links.push(node);
                }
                Some(HnswGraph {
                    params,
                    links,
                    entry_point,
                    max_layer,
                })
            }
        };
        if r.at != body.len() {
            return Err(DenseError::Corrupted("trailing bytes".into()));
        }
        Ok(Self {
            backend,
            dim,
            vectors,
            ids,
            positions,
            encoder,
            corpus_fingerprint,
            params,
            graph,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DenseError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DenseError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{l2_normalize, Embedding};

    fn sample(backend: DenseBackend) -> DenseIndex {
        let vs = (0..40)
            .map(|i| {
                let v: Vec<f32> = (0..6).map(|j| ((i * 7 + j * 3) % 11) as f32 - 5.0).collect();
                l2_normalize(&Embedding::raw(v)).unwrap()
            })
            .collect();
        let ids = (0..40).map(|i| format!("chunk-{i}")).collect();
        let params = HnswParams { m: 4, ef_construction: 16, ef_search: 16, seed: 9 };
        DenseIndex::from_vectors(vs, ids, backend, params).unwrap()
    }

    #[test]
    fn flat_round_trip_is_bit_exact() {
        let idx = sample(DenseBackend::FlatExact);
        let bytes = idx.to_bytes();
        let back = DenseIndex::from_bytes(&bytes).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn hnsw_round_trip_keeps_graph() {
        let idx = sample(DenseBackend::Hnsw);
        let back = DenseIndex::from_bytes(&idx.to_bytes()).unwrap();
        assert_eq!(back.graph(), idx.graph());
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample(DenseBackend::FlatExact).to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(DenseIndex::from_bytes(&bytes), Err(DenseError::Corrupted(_))));
        assert!(matches!(DenseIndex::from_bytes(&bytes[..10]), Err(DenseError::Corrupted(_))));
    }
}
