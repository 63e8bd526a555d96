//! The logical query language.
//!
//! ```text
//! query   := and_seq ( "OR" and_seq )*
//! and_seq := unary ( ["AND"] unary )*        juxtaposition joins with the default operator
//! unary   := "NOT" unary | unit
//! unit    := [ ("title" | "content") ":" ] ( word | "\"" phrase "\"" | "(" query ")" ) [ "^" number ]
//! ```
//!
//! `AND` and juxtaposition share a precedence level and fold left to right;
//! `OR` binds loosest. A juxtaposition next to a `NOT` unit always joins with
//! `AND`, so `a NOT b` means "a without b" under either default operator.
//!
//! Operators are upper-case only. Words and phrase contents go through
//! [`analyze`], so a bare word that splits into several tokens becomes a
//! phrase, and a word with no tokens at all (pure punctuation) is dropped.
//!
//! `NOT` is a filter: it may only appear inside an `AND` group that also has
//! a positive clause. Every other placement is rejected with a positioned
//! error, which keeps candidate sets monotone under added constraints.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::analysis::analyze;
use crate::index::Field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldScope {
    Any,
    Only(Field),
}

impl FieldScope {
    pub fn fields(self) -> &'static [Field] {
        match self {
            FieldScope::Any => &Field::ALL,
            FieldScope::Only(Field::Title) => &[Field::Title],
            FieldScope::Only(Field::Content) => &[Field::Content],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QueryAst {
    Term { scope: FieldScope, token: String, boost: f64 },
    Phrase { scope: FieldScope, tokens: Vec<String>, boost: f64 },
    And(Vec<QueryAst>),
    Or(Vec<QueryAst>),
    Not(Box<QueryAst>),
}

impl QueryAst {
    pub fn term(token: impl Into<String>) -> Self {
        QueryAst::Term { scope: FieldScope::Any, token: token.into(), boost: 1.0 }
    }

    pub fn phrase<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        QueryAst::Phrase { scope: FieldScope::Any, tokens: tokens.into_iter().map(Into::into).collect(), boost: 1.0 }
    }

    /// Restricts a leaf to one field. Compound nodes are returned unchanged.
    pub fn in_field(mut self, field: Field) -> Self {
        if let QueryAst::Term { scope, .. } | QueryAst::Phrase { scope, .. } = &mut self {
            *scope = FieldScope::Only(field);
        }
        self
    }

    /// Sets the boost of a leaf. Compound nodes are returned unchanged.
    pub fn boosted(mut self, value: f64) -> Self {
        if let QueryAst::Term { boost, .. } | QueryAst::Phrase { boost, .. } = &mut self {
            *boost = value;
        }
        self
    }

    /// Conjunction with nested conjunctions flattened.
    ///
    /// # Panics
    /// If fewer than two children remain after flattening.
    pub fn and(children: impl IntoIterator<Item = QueryAst>) -> Self {
        let flat = flatten(children, true);
        assert!(flat.len() >= 2, "And needs at least two children");
        QueryAst::And(flat)
    }

    /// Disjunction with nested disjunctions flattened.
    ///
    /// # Panics
    /// If fewer than two children remain after flattening.
    pub fn or(children: impl IntoIterator<Item = QueryAst>) -> Self {
        let flat = flatten(children, false);
        assert!(flat.len() >= 2, "Or needs at least two children");
        QueryAst::Or(flat)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: QueryAst) -> Self {
        QueryAst::Not(Box::new(child))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, QueryAst::Term { .. } | QueryAst::Phrase { .. })
    }

    /// A node that only excludes: a `Not`, or an `And` made entirely of `Not`s.
    pub fn is_negative_only(&self) -> bool {
        match self {
            QueryAst::Not(_) => true,
            QueryAst::And(children) => children.iter().all(|c| matches!(c, QueryAst::Not(_))),
            _ => false,
        }
    }

    /// Leaves that are not under any `Not`, in left-to-right order.
    pub fn positive_leaves(&self) -> Vec<&QueryAst> {
        fn walk<'a>(node: &'a QueryAst, out: &mut Vec<&'a QueryAst>) {
            match node {
                QueryAst::Term { .. } | QueryAst::Phrase { .. } => out.push(node),
                QueryAst::And(c) | QueryAst::Or(c) => c.iter().for_each(|n| walk(n, out)),
                QueryAst::Not(_) => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            QueryAst::Term { .. } | QueryAst::Phrase { .. } => 1,
            QueryAst::And(c) | QueryAst::Or(c) => 1 + c.iter().map(QueryAst::depth).max().unwrap_or(0),
            QueryAst::Not(c) => 1 + c.depth(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            QueryAst::Term { .. } | QueryAst::Phrase { .. } => 1,
            QueryAst::And(c) | QueryAst::Or(c) => c.iter().map(QueryAst::leaf_count).sum(),
            QueryAst::Not(c) => c.leaf_count(),
        }
    }

    /// Checks the structural invariants the parser guarantees.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.is_negative_only() {
            return Err("query has no positive clause");
        }
        self.check_node()
    }

    fn check_node(&self) -> Result<(), &'static str> {
        match self {
            QueryAst::Term { token, boost, .. } => {
                if token.is_empty() {
                    return Err("empty term");
                }
                check_boost(*boost)
            }
            QueryAst::Phrase { tokens, boost, .. } => {
                if tokens.is_empty() || tokens.iter().any(String::is_empty) {
                    return Err("empty phrase");
                }
                check_boost(*boost)
            }
            QueryAst::And(children) => {
                if children.len() < 2 {
                    return Err("And with fewer than two children");
                }
                if self.is_negative_only() {
                    return Err("And without a positive child");
                }
                for c in children {
                    match c {
                        QueryAst::And(_) => return Err("nested And not flattened"),
                        QueryAst::Not(inner) => {
                            if inner.is_negative_only() {
                                return Err("negation of a negative-only clause");
                            }
                            inner.check_node()?
                        }
                        other => other.check_node()?,
                    }
                }
                Ok(())
            }
            QueryAst::Or(children) => {
                if children.len() < 2 {
                    return Err("Or with fewer than two children");
                }
                for c in children {
                    if matches!(c, QueryAst::Or(_)) {
                        return Err("nested Or not flattened");
                    }
                    if c.is_negative_only() {
                        return Err("negative-only clause under Or");
                    }
                    c.check_node()?;
                }
                Ok(())
            }
            QueryAst::Not(_) => Err("Not outside of an And"),
        }
    }
}

fn check_boost(boost: f64) -> Result<(), &'static str> {
    if boost.is_finite() && boost > 0.0 {
        Ok(())
    } else {
        Err("boost must be positive and finite")
    }
}

fn flatten(children: impl IntoIterator<Item = QueryAst>, conj: bool) -> Vec<QueryAst> {
    let mut out = Vec::new();
    for child in children {
        match child {
            QueryAst::And(inner) if conj => out.extend(inner),
            QueryAst::Or(inner) if !conj => out.extend(inner),
            other => out.push(other),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DefaultOperator {
    #[default]
    Or,
    And,
}

impl DefaultOperator {
    pub fn as_str(self) -> &'static str {
        match self {
            DefaultOperator::Or => "OR",
            DefaultOperator::And => "AND",
        }
    }
}

impl core::str::FromStr for DefaultOperator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OR" | "or" => Ok(DefaultOperator::Or),
            "AND" | "and" => Ok(DefaultOperator::And),
            other => Err(format!("unknown default operator `{other}` (expected AND or OR)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParseOptions {
    pub default_operator: DefaultOperator,
    /// When false, `AND`/`OR`/`NOT` and parentheses are rejected.
    pub allow_boolean_ops: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { default_operator: DefaultOperator::Or, allow_boolean_ops: true }
    }
}

impl ParseOptions {
    pub fn with_default_operator(mut self, op: DefaultOperator) -> Self {
        self.default_operator = op;
        self
    }

    pub fn without_boolean_ops(mut self) -> Self {
        self.allow_boolean_ops = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyQuery,
    NoSearchableTerms,
    DanglingOperator(&'static str),
    Unexpected(String),
    UnclosedParenthesis,
    UnmatchedParenthesis,
    UnterminatedQuote,
    Disabled(&'static str),
    NoPositiveClause,
    NegationNeedsAnd,
    InvalidBoost(String),
    MisplacedBoost,
    FieldWithoutTarget(Field),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::EmptyQuery => f.write_str("empty query"),
            ParseErrorKind::NoSearchableTerms => f.write_str("query contains no searchable terms"),
            ParseErrorKind::DanglingOperator(op) => write!(f, "operator {op} is missing an operand"),
            ParseErrorKind::Unexpected(tok) => write!(f, "unexpected `{tok}`"),
            ParseErrorKind::UnclosedParenthesis => f.write_str("unclosed parenthesis"),
            ParseErrorKind::UnmatchedParenthesis => f.write_str("unmatched closing parenthesis"),
            ParseErrorKind::UnterminatedQuote => f.write_str("unterminated quoted phrase"),
            ParseErrorKind::Disabled(what) => write!(f, "{what} is disabled for this search tool"),
            ParseErrorKind::NoPositiveClause => f.write_str("query has no positive clause"),
            ParseErrorKind::NegationNeedsAnd => {
                f.write_str("NOT can only exclude from a clause joined by AND, not stand under OR or NOT")
            }
            ParseErrorKind::InvalidBoost(text) => write!(f, "invalid boost `{text}`: expected a positive number"),
            ParseErrorKind::MisplacedBoost => f.write_str("boost `^` must follow a term, phrase or group"),
            ParseErrorKind::FieldWithoutTarget(field) => {
                write!(f, "field prefix `{field}:` must be followed by a term, phrase or group")
            }
        }
    }
}

/// A parse failure at a byte offset into the query string.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub position: usize,
}

impl ParseError {
    fn new(kind: ParseErrorKind, position: usize) -> Self {
        ParseError { kind, position }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Quoted(String),
    Word(String),
    FieldPrefix(Field),
    Boost(f64),
    And,
    Or,
    Not,
}

impl Tok {
    fn starts_unary(&self) -> bool {
        matches!(self, Tok::LParen | Tok::Quoted(_) | Tok::Word(_) | Tok::FieldPrefix(_) | Tok::Not)
    }

    fn describe(&self) -> String {
        match self {
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Quoted(s) => format!("\"{s}\""),
            Tok::Word(s) => s.clone(),
            Tok::FieldPrefix(f) => format!("{f}:"),
            Tok::Boost(b) => format!("^{b}"),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Not => "NOT".into(),
        }
    }
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | '"' | '^')
}

fn lex(input: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        match c {
            '(' => {
                chars.next();
                out.push((Tok::LParen, pos));
            }
            ')' => {
                chars.next();
                out.push((Tok::RParen, pos));
            }
            '"' => {
                chars.next();
                let start = pos + 1;
                let mut end = None;
                for (i, ch) in chars.by_ref() {
                    if ch == '"' {
                        end = Some(i);
                        break;
                    }
                }
                let end = end.ok_or_else(|| ParseError::new(ParseErrorKind::UnterminatedQuote, pos))?;
                out.push((Tok::Quoted(input[start..end].to_string()), pos));
            }
            '^' => {
                chars.next();
                let start = pos + 1;
                let mut end = start;
                while let Some(&(i, ch)) = chars.peek() {
                    if !is_word_char(ch) {
                        break;
                    }
                    end = i + ch.len_utf8();
                    chars.next();
                }
                let text = &input[start..end];
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => out.push((Tok::Boost(v), pos)),
                    _ => return Err(ParseError::new(ParseErrorKind::InvalidBoost(text.to_string()), pos)),
                }
            }
            _ => {
                let mut end = pos;
                while let Some(&(i, ch)) = chars.peek() {
                    if !is_word_char(ch) {
                        break;
                    }
                    end = i + ch.len_utf8();
                    chars.next();
                }
                let word = &input[pos..end];
                match word {
                    "AND" => out.push((Tok::And, pos)),
                    "OR" => out.push((Tok::Or, pos)),
                    "NOT" => out.push((Tok::Not, pos)),
                    _ => match word.split_once(':').and_then(|(name, rest)| Field::from_name(name).map(|f| (f, rest))) {
                        Some((field, rest)) => {
                            out.push((Tok::FieldPrefix(field), pos));
                            if !rest.is_empty() {
                                out.push((Tok::Word(rest.to_string()), end - rest.len()));
                            }
                        }
                        None => out.push((Tok::Word(word.to_string()), pos)),
                    },
                }
            }
        }
    }
    Ok(out)
}

/// A partially built clause with the byte offset where it starts.
struct Clause {
    ast: QueryAst,
    start: usize,
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
    opts: ParseOptions,
}

type Parsed = Result<Option<Clause>, ParseError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |&(_, p)| p)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.idx].clone();
        self.idx += 1;
        t
    }

    fn parse_or(&mut self) -> Parsed {
        let mut acc = self.parse_and()?;
        while let Some(Tok::Or) = self.peek() {
            let (_, op_pos) = self.bump();
            if !self.peek().is_some_and(Tok::starts_unary) {
                return Err(ParseError::new(ParseErrorKind::DanglingOperator("OR"), op_pos));
            }
            let rhs = self.parse_and()?;
            acc = combine(acc, rhs, false)?;
        }
        Ok(acc)
    }

    fn parse_and(&mut self) -> Parsed {
        if let Some(Tok::And | Tok::Or) = self.peek() {
            let (tok, pos) = self.bump();
            let name = if tok == Tok::And { "AND" } else { "OR" };
            return Err(ParseError::new(ParseErrorKind::DanglingOperator(name), pos));
        }
        let mut acc = self.parse_unary()?;
        let mut last_was_not = acc.as_ref().is_some_and(|c| matches!(c.ast, QueryAst::Not(_)));
        loop {
            let conj = match self.peek() {
                Some(Tok::And) => {
                    let (_, op_pos) = self.bump();
                    if !self.peek().is_some_and(Tok::starts_unary) {
                        return Err(ParseError::new(ParseErrorKind::DanglingOperator("AND"), op_pos));
                    }
                    true
                }
                Some(t) if t.starts_unary() => {
                    let next_is_not = matches!(t, Tok::Not);
                    last_was_not || next_is_not || self.opts.default_operator == DefaultOperator::And
                }
                _ => break,
            };
            let rhs = self.parse_unary()?;
            last_was_not = rhs.as_ref().is_some_and(|c| matches!(c.ast, QueryAst::Not(_)));
            acc = combine(acc, rhs, conj)?;
        }
        Ok(acc)
    }

    fn parse_unary(&mut self) -> Parsed {
        if let Some(Tok::Not) = self.peek() {
            let (_, pos) = self.bump();
            if !self.peek().is_some_and(Tok::starts_unary) {
                return Err(ParseError::new(ParseErrorKind::DanglingOperator("NOT"), pos));
            }
            let inner = self.parse_unary()?;
            return match inner {
                None => Ok(None),
                Some(c) if c.ast.is_negative_only() => Err(ParseError::new(ParseErrorKind::NegationNeedsAnd, c.start)),
                Some(c) => Ok(Some(Clause { ast: QueryAst::not(c.ast), start: pos })),
            };
        }
        self.parse_unit()
    }

    fn parse_unit(&mut self) -> Parsed {
        let start = self.pos();
        let mut field = None;
        if let Some(Tok::FieldPrefix(f)) = self.peek() {
            field = Some(*f);
            self.bump();
        }
        let body = match self.peek() {
            Some(Tok::Word(_)) => {
                let (Tok::Word(w), _) = self.bump() else { unreachable!() };
                let tokens = analyze(&w);
                match tokens.len() {
                    0 => None,
                    1 => Some(QueryAst::term(tokens.into_iter().next().unwrap_or_default())),
                    _ => Some(QueryAst::phrase(tokens)),
                }
            }
            Some(Tok::Quoted(_)) => {
                let (Tok::Quoted(q), _) = self.bump() else { unreachable!() };
                let tokens = analyze(&q);
                if tokens.is_empty() {
                    None
                } else {
                    Some(QueryAst::phrase(tokens))
                }
            }
            Some(Tok::LParen) => {
                let (_, open) = self.bump();
                let inner = self.parse_or()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.bump();
                    }
                    None => return Err(ParseError::new(ParseErrorKind::UnclosedParenthesis, open)),
                    Some(t) => {
                        let d = t.describe();
                        return Err(ParseError::new(ParseErrorKind::Unexpected(d), self.pos()));
                    }
                }
                inner.map(|c| c.ast)
            }
            _ => {
                return match field {
                    Some(f) => Err(ParseError::new(ParseErrorKind::FieldWithoutTarget(f), start)),
                    None => match self.peek() {
                        Some(Tok::Boost(_)) => Err(ParseError::new(ParseErrorKind::MisplacedBoost, start)),
                        Some(Tok::RParen) => Err(ParseError::new(ParseErrorKind::UnmatchedParenthesis, start)),
                        Some(t) => Err(ParseError::new(ParseErrorKind::Unexpected(t.describe()), start)),
                        None => Err(ParseError::new(ParseErrorKind::NoSearchableTerms, start)),
                    },
                };
            }
        };
        let mut boost = 1.0;
        if let Some(Tok::Boost(b)) = self.peek() {
            boost = *b;
            self.bump();
            if let Some(Tok::Boost(_)) = self.peek() {
                return Err(ParseError::new(ParseErrorKind::MisplacedBoost, self.pos()));
            }
        }
        Ok(body.map(|mut ast| {
            if let Some(f) = field {
                scope_leaves(&mut ast, f);
            }
            if boost != 1.0 {
                boost_leaves(&mut ast, boost);
            }
            Clause { ast, start }
        }))
    }
}

fn combine(lhs: Option<Clause>, rhs: Option<Clause>, conj: bool) -> Parsed {
    let (lhs, rhs) = match (lhs, rhs) {
        (None, r) => return Ok(r),
        (l, None) => return Ok(l),
        (Some(l), Some(r)) => (l, r),
    };
    if !conj {
        for side in [&lhs, &rhs] {
            if side.ast.is_negative_only() {
                return Err(ParseError::new(ParseErrorKind::NegationNeedsAnd, side.start));
            }
        }
    }
    let ast = if conj { QueryAst::and([lhs.ast, rhs.ast]) } else { QueryAst::or([lhs.ast, rhs.ast]) };
    Ok(Some(Clause { ast, start: lhs.start }))
}

fn scope_leaves(ast: &mut QueryAst, field: Field) {
    match ast {
        QueryAst::Term { scope, .. } | QueryAst::Phrase { scope, .. } => {
            if *scope == FieldScope::Any {
                *scope = FieldScope::Only(field);
            }
        }
        QueryAst::And(c) | QueryAst::Or(c) => c.iter_mut().for_each(|n| scope_leaves(n, field)),
        QueryAst::Not(c) => scope_leaves(c, field),
    }
}

fn boost_leaves(ast: &mut QueryAst, factor: f64) {
    match ast {
        QueryAst::Term { boost, .. } | QueryAst::Phrase { boost, .. } => *boost *= factor,
        QueryAst::And(c) | QueryAst::Or(c) => c.iter_mut().for_each(|n| boost_leaves(n, factor)),
        QueryAst::Not(c) => boost_leaves(c, factor),
    }
}

/// Parses a query string into a validated AST.
pub fn parse_query(query: &str, opts: ParseOptions) -> Result<QueryAst, ParseError> {
    if query.trim().is_empty() {
        return Err(ParseError::new(ParseErrorKind::EmptyQuery, 0));
    }
    let toks = lex(query)?;
    if !opts.allow_boolean_ops {
        for (tok, pos) in &toks {
            let what = match tok {
                Tok::And => "boolean operator AND",
                Tok::Or => "boolean operator OR",
                Tok::Not => "boolean operator NOT",
                Tok::LParen | Tok::RParen => "grouping with parentheses",
                _ => continue,
            };
            return Err(ParseError::new(ParseErrorKind::Disabled(what), *pos));
        }
    }
    let mut parser = Parser { toks, idx: 0, end: query.len(), opts };
    let result = parser.parse_or()?;
    if let Some(tok) = parser.peek() {
        let kind = match tok {
            Tok::RParen => ParseErrorKind::UnmatchedParenthesis,
            Tok::Boost(_) => ParseErrorKind::MisplacedBoost,
            t => ParseErrorKind::Unexpected(t.describe()),
        };
        return Err(ParseError::new(kind, parser.pos()));
    }
    let clause = result.ok_or_else(|| ParseError::new(ParseErrorKind::NoSearchableTerms, 0))?;
    if clause.ast.is_negative_only() {
        return Err(ParseError::new(ParseErrorKind::NoPositiveClause, clause.start));
    }
    Ok(clause.ast)
}

/// Renders an AST with explicit operators. Parsing the output with any
/// options that allow Boolean operators reproduces the AST.
pub fn render_query(ast: &QueryAst) -> String {
    let mut out = String::new();
    render_into(ast, &mut out);
    out
}

/// Renders an AST using juxtaposition for the default operator where the
/// result stays unambiguous; a flat clause list comes out in the restricted
/// syntax accepted when Boolean operators are disabled.
pub fn render_query_with(ast: &QueryAst, opts: ParseOptions) -> String {
    let joiner_matches = matches!(
        (ast, opts.default_operator),
        (QueryAst::And(_), DefaultOperator::And) | (QueryAst::Or(_), DefaultOperator::Or)
    );
    match ast {
        QueryAst::And(children) | QueryAst::Or(children) if joiner_matches => {
            let mut out = String::new();
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                if child.is_leaf() {
                    render_into(child, &mut out);
                } else if matches!(child, QueryAst::Not(_)) {
                    // `a NOT b` joins with AND regardless of the default operator
                    return render_query(ast);
                } else {
                    out.push('(');
                    render_into(child, &mut out);
                    out.push(')');
                }
            }
            out
        }
        _ => render_query(ast),
    }
}

fn render_leaf_prefix(scope: FieldScope, out: &mut String) {
    if let FieldScope::Only(f) = scope {
        out.push_str(f.as_str());
        out.push(':');
    }
}

fn render_boost(boost: f64, out: &mut String) {
    if boost != 1.0 {
        out.push('^');
        out.push_str(&format!("{boost}"));
    }
}

fn render_into(ast: &QueryAst, out: &mut String) {
    match ast {
        QueryAst::Term { scope, token, boost } => {
            render_leaf_prefix(*scope, out);
            out.push_str(token);
            render_boost(*boost, out);
        }
        QueryAst::Phrase { scope, tokens, boost } => {
            render_leaf_prefix(*scope, out);
            out.push('"');
            out.push_str(&tokens.join(" "));
            out.push('"');
            render_boost(*boost, out);
        }
        QueryAst::And(children) => {
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" AND ");
                }
                render_operand(child, matches!(child, QueryAst::Or(_)), out);
            }
        }
        QueryAst::Or(children) => {
            for (i, child) in children.iter().enumerate() {
                if i > 0 {
                    out.push_str(" OR ");
                }
                render_operand(child, matches!(child, QueryAst::Or(_)), out);
            }
        }
        QueryAst::Not(child) => {
            out.push_str("NOT ");
            render_operand(child, matches!(**child, QueryAst::And(_) | QueryAst::Or(_)), out);
        }
    }
}

fn render_operand(ast: &QueryAst, parens: bool, out: &mut String) {
    if parens {
        out.push('(');
        render_into(ast, out);
        out.push(')');
    } else {
        render_into(ast, out);
    }
}
