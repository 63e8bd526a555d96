//! Text analysis shared by indexing and query parsing.
//!
//! Text is segmented on Unicode word boundaries and lowercased. There is no
//! stemming and no stopword list, so a query token matches exactly the
//! surface form that was indexed (modulo case).

use alloc::string::String;
use alloc::vec::Vec;

use unicode_segmentation::UnicodeSegmentation;

/// Splits `text` into normalized tokens. Token `i` has position `i`.
pub fn analyze(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}
