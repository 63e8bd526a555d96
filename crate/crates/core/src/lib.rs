//! Allocation-only core of the lexrag retrieval engine.
//!
//! Everything here is pure computation over in-memory data: text analysis,
//! the positional two-field inverted index and its binary codec, the logical
//! query language, Boolean candidate evaluation with BM25 ranking, exact dense
//! search, reciprocal rank fusion, and the evaluation metric kernels. IO,
//! clocks, HTTP and the command line live in the `lexrag` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod codec;
pub mod dense;
pub mod eval;
pub mod fusion;
pub mod index;
pub mod query;
pub mod search;
pub mod stats;

pub use analysis::analyze;
pub use index::{build_index, Document, Field, FieldStats, IndexError, IndexSnapshot, PostingList};
pub use query::{parse_query, render_query, DefaultOperator, FieldScope, ParseError, ParseOptions, QueryAst};
pub use search::{search_topk, Bm25Params, Hit, SearchRequest, SearchResult};
