//! Exact dense retrieval over unit-normalized vectors.
//!
//! Similarity is the dot product of normalized vectors (cosine). Search is
//! exhaustive: every stored vector is scored and a bounded heap keeps the
//! best `k`.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::codec::{CodecError, CodecErrorKind, Reader, Writer};

pub const DENSE_MAGIC: &[u8; 8] = b"LXRGDNS\0";
pub const DENSE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DenseError {
    #[error("dimension mismatch: index has dim {expected}, vector has dim {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("vector for {0} has zero norm")]
    ZeroVector(String),
    #[error("vector for {0} contains non-finite values")]
    NonFinite(String),
    #[error("duplicate doc_id {0} in dense index")]
    DuplicateId(String),
    #[error("empty doc_id in dense index")]
    EmptyId,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

/// Returns `v / |v|`, or `None` for zero or non-finite input.
pub fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let norm = libm::sqrt(dot(v, v));
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f32>,
    seen: BTreeSet<String>,
}

impl DenseIndex {
    pub fn new(dim: usize) -> Result<Self, DenseError> {
        if dim == 0 {
            return Err(DenseError::ZeroDimension);
        }
        Ok(DenseIndex { dim, ids: Vec::new(), vectors: Vec::new(), seen: BTreeSet::new() })
    }

    /// Adds a vector, normalizing it to unit length.
    pub fn insert(&mut self, doc_id: impl Into<String>, vector: &[f32]) -> Result<(), DenseError> {
        self.insert_with(doc_id.into(), vector, true)
    }

    fn insert_with(&mut self, doc_id: String, vector: &[f32], renormalize: bool) -> Result<(), DenseError> {
        if doc_id.is_empty() {
            return Err(DenseError::EmptyId);
        }
        if vector.len() != self.dim {
            return Err(DenseError::DimensionMismatch { expected: self.dim, actual: vector.len() });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(DenseError::NonFinite(doc_id));
        }
        let unit = if renormalize {
            normalize(vector).ok_or_else(|| DenseError::ZeroVector(doc_id.clone()))?
        } else {
            vector.to_vec()
        };
        if !self.seen.insert(doc_id.clone()) {
            return Err(DenseError::DuplicateId(doc_id));
        }
        self.ids.push(doc_id);
        self.vectors.extend_from_slice(&unit);
        Ok(())
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

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact top-`k` by cosine similarity, ties broken by doc_id ascending.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<(String, f64)>, DenseError> {
        if query.len() != self.dim {
            return Err(DenseError::DimensionMismatch { expected: self.dim, actual: query.len() });
        }
        let query = normalize(query).ok_or_else(|| DenseError::ZeroVector(String::from("<query>")))?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Reverse<Candidate<'_>>> = BinaryHeap::with_capacity(k + 1);
        for (i, id) in self.ids.iter().enumerate() {
            let cand = Candidate { sim: dot(&query, self.vector(i)), id };
            if heap.len() < k {
                heap.push(Reverse(cand));
            } else if heap.peek().is_some_and(|worst| cand > worst.0) {
                heap.pop();
                heap.push(Reverse(cand));
            }
        }
        let mut best: Vec<Candidate<'_>> = heap.into_iter().map(|r| r.0).collect();
        best.sort_by(|a, b| b.cmp(a));
        Ok(best.into_iter().map(|c| (c.id.clone(), c.sim)).collect())
    }
}

/// Greater means better: higher similarity, then smaller doc_id.
struct Candidate<'a> {
    sim: f64,
    id: &'a String,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.id.cmp(self.id))
    }
}

/// Serializes a dense index: header, dim, count, then `(doc_id, dim x f32)` per vector.
pub fn encode_dense(index: &DenseIndex) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(DENSE_MAGIC);
    w.u32(DENSE_FORMAT_VERSION);
    w.u32(index.dim as u32);
    w.u32(index.len() as u32);
    for (i, id) in index.ids.iter().enumerate() {
        w.str(id);
        for &x in index.vector(i) {
            w.f32(x);
        }
    }
    w.finish()
}

pub fn decode_dense(data: &[u8]) -> Result<DenseIndex, CodecError> {
    let mut r = Reader::new(data);
    r.header(DENSE_MAGIC, DENSE_FORMAT_VERSION)?;
    let dim_at = r.offset();
    let dim = r.u32()? as usize;
    let mut index = DenseIndex::new(dim).map_err(|_| CodecError { offset: dim_at, kind: CodecErrorKind::Invalid("zero dimension") })?;
    let count = r.count(4 + 4 * dim)?;
    let mut buf = Vec::with_capacity(dim);
    for _ in 0..count {
        let at = r.offset();
        let id = r.str()?;
        buf.clear();
        for _ in 0..dim {
            buf.push(r.f32()?);
        }
        let unit = dot(&buf, &buf);
        if (unit - 1.0).abs() > 1e-4 {
            return r.fail(at, CodecErrorKind::Invalid("stored vector is not unit length"));
        }
        // stored vectors are already unit length; renormalizing would perturb them
        index.insert_with(id, &buf, false).map_err(|_| CodecError { offset: at, kind: CodecErrorKind::Invalid("invalid dense entry") })?;
    }
    r.end()?;
    Ok(index)
}
