//! Reciprocal rank fusion and the pure parts of hybrid retrieval.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::analysis::analyze;
use crate::query::QueryAst;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// The `K` in `1 / (K + rank)`.
    pub rrf_k: u32,
    /// How many results each retriever contributes before fusion.
    pub per_list_depth: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { rrf_k: 60, per_list_depth: 50 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.rrf_k == 0 {
            return Err(FusionError::InvalidK);
        }
        if self.per_list_depth == 0 {
            return Err(FusionError::InvalidDepth);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FusionError {
    #[error("no ranked lists to fuse")]
    NoLists,
    #[error("ranked list {0} contains a duplicate entry")]
    DuplicateInList(usize),
    #[error("rrf_k must be at least 1")]
    InvalidK,
    #[error("per_list_depth must be at least 1")]
    InvalidDepth,
}

/// Fuses ranked lists: `score(d) = sum over lists containing d of 1 / (K + rank)`,
/// with 1-based ranks and only the first `per_list_depth` entries of each
/// list counted. Output is sorted by score descending, then by id.
///
/// Each document's contributions are summed from its best rank to its worst,
/// so the result does not depend on the order of the input lists.
pub fn rrf_fuse<T, L>(lists: &[L], config: FusionConfig) -> Result<Vec<(T, f64)>, FusionError>
where
    T: Ord + Clone,
    L: AsRef<[T]>,
{
    config.validate()?;
    if lists.is_empty() {
        return Err(FusionError::NoLists);
    }
    let mut ranks: BTreeMap<&T, Vec<u64>> = BTreeMap::new();
    for (li, list) in lists.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for (i, item) in list.as_ref().iter().take(config.per_list_depth).enumerate() {
            if !seen.insert(item) {
                return Err(FusionError::DuplicateInList(li));
            }
            ranks.entry(item).or_default().push(i as u64 + 1);
        }
    }
    let k = u64::from(config.rrf_k);
    let mut fused: Vec<(T, f64)> = ranks
        .into_iter()
        .map(|(item, mut rs)| {
            rs.sort_unstable();
            let score = rs.iter().map(|&r| 1.0 / (k + r) as f64).sum();
            (item.clone(), score)
        })
        .collect();
    fused.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    Ok(fused)
}

/// True if the text uses an upper-case Boolean operator as a word.
pub fn contains_boolean_syntax(text: &str) -> bool {
    text.split(|c: char| c.is_whitespace() || c == '(' || c == ')')
        .any(|w| matches!(w, "AND" | "OR" | "NOT"))
}

/// The sparse side of hybrid retrieval: every analyzed token of a natural
/// language query as an unfielded term, OR-ed together.
pub fn bag_of_terms(text: &str) -> Option<QueryAst> {
    let mut terms: Vec<QueryAst> = analyze(text).into_iter().map(QueryAst::term).collect();
    match terms.len() {
        0 => None,
        1 => terms.pop(),
        _ => Some(QueryAst::Or(terms)),
    }
}
