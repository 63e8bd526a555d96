//! Positional inverted index over the `title` and `content` fields.
//!
//! Documents are assigned ordinals in input order. Every posting keeps the
//! token positions of its term inside one field, which is what phrase
//! matching needs. A built [`IndexSnapshot`] is sealed: it exposes no
//! mutation, so it can be shared across threads freely.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::analyze;

/// On-disk layout version written by [`crate::codec`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Title,
    Content,
}

impl Field {
    pub const ALL: [Field; 2] = [Field::Title, Field::Content];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::Title => "title",
            Field::Content => "content",
        }
    }

    pub fn from_name(name: &str) -> Option<Field> {
        match name {
            "title" => Some(Field::Title),
            "content" => Some(Field::Content),
            _ => None,
        }
    }

    pub(crate) fn slot(self) -> usize {
        match self {
            Field::Title => 0,
            Field::Content => 1,
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A retrievable passage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub content: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, content: impl Into<String>) -> Self {
        Document { doc_id: doc_id.into(), title: title.into(), content: content.into() }
    }

    pub fn field(&self, field: Field) -> &str {
        match field {
            Field::Title => &self.title,
            Field::Content => &self.content,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    /// Strictly ascending, never empty.
    pub positions: Vec<u32>,
}

impl Posting {
    pub fn term_frequency(&self) -> u32 {
        self.positions.len() as u32
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PostingList {
    term: String,
    field: Field,
    entries: Vec<Posting>,
}

impl PostingList {
    pub(crate) fn from_parts(term: String, field: Field, entries: Vec<Posting>) -> Self {
        PostingList { term, field, entries }
    }

    pub fn term(&self) -> &str {
        &self.term
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Sorted by document ordinal, strictly increasing.
    pub fn entries(&self) -> &[Posting] {
        &self.entries
    }

    pub fn document_frequency(&self) -> u32 {
        self.entries.len() as u32
    }

    pub fn get(&self, doc: u32) -> Option<&Posting> {
        self.entries.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| &self.entries[i])
    }

    pub fn docs(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|p| p.doc)
    }
}

/// Per-field collection statistics consumed by BM25.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldStats {
    field: Field,
    total_tokens: u64,
    lengths: Vec<u32>,
}

impl FieldStats {
    pub(crate) fn from_lengths(field: Field, lengths: Vec<u32>) -> Self {
        let total_tokens = lengths.iter().map(|&l| u64::from(l)).sum();
        FieldStats { field, total_tokens, lengths }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn doc_count(&self) -> u32 {
        self.lengths.len() as u32
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn avg_field_length(&self) -> f64 {
        if self.lengths.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.lengths.len() as f64
        }
    }

    pub fn field_length(&self, doc: u32) -> u32 {
        self.lengths[doc as usize]
    }

    pub fn lengths(&self) -> &[u32] {
        &self.lengths
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum IndexError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("duplicate doc_id {0}")]
    DuplicateDocId(String),
    #[error("document at position {0} has an empty doc_id")]
    EmptyDocId(usize),
    #[error("document {0} has neither title nor content")]
    EmptyDocument(String),
    #[error("corpus exceeds {} documents", u32::MAX)]
    TooManyDocuments,
}

/// A sealed index: documents, per-field postings and per-field statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexSnapshot {
    documents: Vec<Document>,
    ordinals: BTreeMap<String, u32>,
    postings: [BTreeMap<String, PostingList>; 2],
    stats: [FieldStats; 2],
}

impl IndexSnapshot {
    pub(crate) fn from_parts(
        documents: Vec<Document>,
        postings: [BTreeMap<String, PostingList>; 2],
        stats: [FieldStats; 2],
    ) -> Result<Self, IndexError> {
        let mut ordinals = BTreeMap::new();
        for (ord, doc) in documents.iter().enumerate() {
            if ordinals.insert(doc.doc_id.clone(), ord as u32).is_some() {
                return Err(IndexError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(IndexSnapshot { documents, ordinals, postings, stats })
    }

    pub fn format_version(&self) -> u32 {
        FORMAT_VERSION
    }

    pub fn doc_count(&self) -> u32 {
        self.documents.len() as u32
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn document(&self, doc: u32) -> &Document {
        &self.documents[doc as usize]
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.ordinals.get(doc_id).copied()
    }

    pub fn postings(&self, field: Field, term: &str) -> Option<&PostingList> {
        self.postings[field.slot()].get(term)
    }

    pub fn terms(&self, field: Field) -> impl Iterator<Item = &PostingList> + '_ {
        self.postings[field.slot()].values()
    }

    pub fn document_frequency(&self, field: Field, term: &str) -> u32 {
        self.postings(field, term).map_or(0, PostingList::document_frequency)
    }

    pub fn stats(&self, field: Field) -> &FieldStats {
        &self.stats[field.slot()]
    }
}

/// Builds a sealed snapshot, assigning ordinals in input order.
pub fn build_index<I>(corpus: I) -> Result<IndexSnapshot, IndexError>
where
    I: IntoIterator<Item = Document>,
{
    let mut documents = Vec::new();
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    let mut postings: [BTreeMap<String, PostingList>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut lengths: [Vec<u32>; 2] = [Vec::new(), Vec::new()];

    for (i, doc) in corpus.into_iter().enumerate() {
        if doc.doc_id.is_empty() {
            return Err(IndexError::EmptyDocId(i));
        }
        if seen.insert(doc.doc_id.clone(), ()).is_some() {
            return Err(IndexError::DuplicateDocId(doc.doc_id));
        }
        if doc.title.is_empty() && doc.content.is_empty() {
            return Err(IndexError::EmptyDocument(doc.doc_id));
        }
        let ord = u32::try_from(i).map_err(|_| IndexError::TooManyDocuments)?;
        for field in Field::ALL {
            let tokens = analyze(doc.field(field));
            lengths[field.slot()].push(tokens.len() as u32);
            let table = &mut postings[field.slot()];
            for (pos, token) in tokens.into_iter().enumerate() {
                let list = table
                    .entry(token)
                    .or_insert_with_key(|t| PostingList::from_parts(t.clone(), field, Vec::new()));
                match list.entries.last_mut() {
                    Some(last) if last.doc == ord => last.positions.push(pos as u32),
                    _ => list.entries.push(Posting { doc: ord, positions: alloc::vec![pos as u32] }),
                }
            }
        }
        documents.push(doc);
    }

    if documents.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let [title_len, content_len] = lengths;
    let stats = [
        FieldStats::from_lengths(Field::Title, title_len),
        FieldStats::from_lengths(Field::Content, content_len),
    ];
    IndexSnapshot::from_parts(documents, postings, stats)
}
