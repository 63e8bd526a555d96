//! Binary layout of a sealed [`IndexSnapshot`].
//!
//! All integers are little-endian `u32`; strings are a `u32` byte length
//! followed by UTF-8 bytes.
//!
//! ```text
//! magic "LXRGIDX\0" | version | doc_count
//! doc_count x (doc_id, title, content)
//! for title, content: doc_count x field_length
//! for title, content: term_count, then per term in ascending order:
//!     term, entry_count, entry_count x (doc, tf, tf x position)
//! ```
//!
//! Decoding checks every structural invariant and reports the byte offset
//! at which it first fails. Nothing partially decoded escapes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::index::{Document, Field, FieldStats, IndexError, IndexSnapshot, Posting, PostingList, FORMAT_VERSION};

pub const INDEX_MAGIC: &[u8; 8] = b"LXRGIDX\0";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodecErrorKind {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    InvalidUtf8,
    Invalid(&'static str),
    TrailingBytes,
    Index(IndexError),
}

impl fmt::Display for CodecErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecErrorKind::BadMagic => f.write_str("bad magic"),
            CodecErrorKind::UnsupportedVersion(v) => {
                write!(f, "unsupported version {v} (this build reads version {FORMAT_VERSION})")
            }
            CodecErrorKind::Truncated => f.write_str("truncated data"),
            CodecErrorKind::InvalidUtf8 => f.write_str("invalid utf-8 string"),
            CodecErrorKind::Invalid(what) => write!(f, "integrity error: {what}"),
            CodecErrorKind::TrailingBytes => f.write_str("trailing bytes after index data"),
            CodecErrorKind::Index(e) => write!(f, "integrity error: {e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at byte offset {offset}")]
pub struct CodecError {
    pub offset: usize,
    pub kind: CodecErrorKind,
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn fail<T>(&self, offset: usize, kind: CodecErrorKind) -> Result<T, CodecError> {
        Err(CodecError { offset, kind })
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        match self.pos.checked_add(n) {
            Some(end) if end <= self.data.len() => {
                let out = &self.data[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            _ => self.fail(self.pos, CodecErrorKind::Truncated),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f32(&mut self) -> Result<f32, CodecError> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn str(&mut self) -> Result<String, CodecError> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let bytes = self.take(len)?;
        match core::str::from_utf8(bytes) {
            Ok(s) => Ok(String::from(s)),
            Err(_) => self.fail(start, CodecErrorKind::InvalidUtf8),
        }
    }

    /// Reads a count and checks that at least `count * min_item` bytes remain,
    /// so a corrupted count cannot trigger a huge allocation.
    pub(crate) fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.data.len() - self.pos {
            return self.fail(at, CodecErrorKind::Truncated);
        }
        Ok(n)
    }

    pub(crate) fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<(), CodecError> {
        let m = self.take(magic.len())?;
        if m != magic {
            return self.fail(0, CodecErrorKind::BadMagic);
        }
        let at = self.pos;
        let v = self.u32()?;
        if v != version {
            return self.fail(at, CodecErrorKind::UnsupportedVersion(v));
        }
        Ok(())
    }

    pub(crate) fn end(&self) -> Result<(), CodecError> {
        if self.pos != self.data.len() {
            return self.fail(self.pos, CodecErrorKind::TrailingBytes);
        }
        Ok(())
    }
}

/// Serializes a snapshot. Output is a pure function of the snapshot contents.
pub fn encode(snapshot: &IndexSnapshot) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(INDEX_MAGIC);
    w.u32(FORMAT_VERSION);
    w.u32(snapshot.doc_count());
    for doc in snapshot.documents() {
        w.str(&doc.doc_id);
        w.str(&doc.title);
        w.str(&doc.content);
    }
    for field in Field::ALL {
        for &len in snapshot.stats(field).lengths() {
            w.u32(len);
        }
    }
    for field in Field::ALL {
        let lists: Vec<&PostingList> = snapshot.terms(field).collect();
        w.u32(lists.len() as u32);
        for list in lists {
            w.str(list.term());
            w.u32(list.entries().len() as u32);
            for entry in list.entries() {
                w.u32(entry.doc);
                w.u32(entry.positions.len() as u32);
                for &p in &entry.positions {
                    w.u32(p);
                }
            }
        }
    }
    w.finish()
}

/// Reads the format version without decoding the rest.
pub fn peek_version(data: &[u8]) -> Result<u32, CodecError> {
    let mut r = Reader::new(data);
    if r.take(INDEX_MAGIC.len())? != INDEX_MAGIC {
        return r.fail(0, CodecErrorKind::BadMagic);
    }
    r.u32()
}

pub fn decode(data: &[u8]) -> Result<IndexSnapshot, CodecError> {
    let mut r = Reader::new(data);
    r.header(INDEX_MAGIC, FORMAT_VERSION)?;
    let doc_count = r.count(12)?;
    if doc_count == 0 {
        return r.fail(r.offset() - 4, CodecErrorKind::Index(IndexError::EmptyCorpus));
    }
    let mut documents = Vec::with_capacity(doc_count);
    for _ in 0..doc_count {
        let at = r.offset();
        let doc = Document { doc_id: r.str()?, title: r.str()?, content: r.str()? };
        if doc.doc_id.is_empty() {
            return r.fail(at, CodecErrorKind::Invalid("empty doc_id"));
        }
        documents.push(doc);
    }

    let mut lengths: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    for slot in &mut lengths {
        for _ in 0..doc_count {
            slot.push(r.u32()?);
        }
    }

    let mut postings: [BTreeMap<String, PostingList>; 2] = [BTreeMap::new(), BTreeMap::new()];
    for field in Field::ALL {
        let field_lengths = &lengths[field.slot()];
        let mut seen_tokens = alloc::vec![0u64; doc_count];
        let term_count = r.count(8)?;
        let mut previous: Option<String> = None;
        for _ in 0..term_count {
            let term_at = r.offset();
            let term = r.str()?;
            if term.is_empty() {
                return r.fail(term_at, CodecErrorKind::Invalid("empty term"));
            }
            if previous.as_deref().is_some_and(|p| p >= term.as_str()) {
                return r.fail(term_at, CodecErrorKind::Invalid("terms out of order"));
            }
            let entry_count = r.count(12)?;
            if entry_count == 0 {
                return r.fail(term_at, CodecErrorKind::Invalid("posting list without entries"));
            }
            let mut entries = Vec::with_capacity(entry_count);
            let mut last_doc: Option<u32> = None;
            for _ in 0..entry_count {
                let entry_at = r.offset();
                let doc = r.u32()?;
                if doc as usize >= doc_count {
                    return r.fail(entry_at, CodecErrorKind::Invalid("posting references unknown document"));
                }
                if last_doc.is_some_and(|d| d >= doc) {
                    return r.fail(entry_at, CodecErrorKind::Invalid("posting entries out of order"));
                }
                last_doc = Some(doc);
                let tf = r.count(4)?;
                if tf == 0 {
                    return r.fail(entry_at, CodecErrorKind::Invalid("posting entry without positions"));
                }
                let mut positions = Vec::with_capacity(tf);
                for _ in 0..tf {
                    let pos_at = r.offset();
                    let p = r.u32()?;
                    if positions.last().is_some_and(|&q| q >= p) || p >= field_lengths[doc as usize] {
                        return r.fail(pos_at, CodecErrorKind::Invalid("position out of order or past field end"));
                    }
                    positions.push(p);
                }
                seen_tokens[doc as usize] += tf as u64;
                entries.push(Posting { doc, positions });
            }
            previous = Some(term.clone());
            postings[field.slot()].insert(term.clone(), PostingList::from_parts(term, field, entries));
        }
        if seen_tokens.iter().zip(field_lengths).any(|(&seen, &len)| seen != u64::from(len)) {
            return r.fail(r.offset(), CodecErrorKind::Invalid("field lengths disagree with postings"));
        }
    }
    r.end()?;

    let [title_len, content_len] = lengths;
    let stats = [FieldStats::from_lengths(Field::Title, title_len), FieldStats::from_lengths(Field::Content, content_len)];
    let end = r.offset();
    IndexSnapshot::from_parts(documents, postings, stats).map_err(|e| CodecError { offset: end, kind: CodecErrorKind::Index(e) })
}
