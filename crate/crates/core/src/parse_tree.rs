//! Bracketed constituency trees and lowest-layer noun-phrase extraction.
//!
//! Input is one Penn-style bracketed tree per line, e.g.
//! `(TOP (S (NP woman) (VP is ...)))`. A constituent may mix bare words and
//! sub-constituents, so both `(NP a pen)` and `(NP (DT a) (NN pen))` parse.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open token interval `[lo, hi)` into a caption's token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub fn new(lo: usize, hi: usize) -> Self {
        Span { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.lo, s.hi]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("unbalanced brackets: input ended inside a constituent at byte {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("unexpected ')' at byte {offset}")]
    UnexpectedClose { offset: usize },
    #[error("constituent without a label at byte {offset}")]
    MissingLabel { offset: usize },
    #[error("empty constituent at byte {offset}")]
    EmptyConstituent { offset: usize },
    #[error("expected '(' at byte {offset}")]
    ExpectedOpen { offset: usize },
    #[error("trailing input after the root constituent at byte {offset}")]
    TrailingInput { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match *self {
            ParseError::Empty => 0,
            ParseError::UnexpectedEnd { offset }
            | ParseError::UnexpectedClose { offset }
            | ParseError::MissingLabel { offset }
            | ParseError::EmptyConstituent { offset }
            | ParseError::ExpectedOpen { offset }
            | ParseError::TrailingInput { offset } => offset,
        }
    }
}

/// A constituency tree node. Leaves carry a token and no children; inner
/// nodes carry a label and at least one child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    label: String,
    children: Vec<ParseTree>,
    token: Option<String>,
    span: Span,
}

impl ParseTree {
    /// Constituent tag; empty for leaves.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[ParseTree] {
        &self.children
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn is_leaf(&self) -> bool {
        self.token.is_some()
    }

    /// Leaf tokens in order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.span.len());
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match &self.token {
            Some(t) => out.push(t),
            None => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Space-joined leaves.
    pub fn text(&self) -> String {
        self.leaves().join(" ")
    }

    fn has_label_below(&self, label: &str) -> bool {
        self.children
            .iter()
            .any(|c| c.label == label || c.has_label_below(label))
    }

    /// NP nodes that have no NP descendant, left to right.
    pub fn lowest_np_nodes(&self) -> Vec<&ParseTree> {
        let mut out = Vec::new();
        self.collect_lowest(NP_LABEL, &mut out);
        out
    }

    fn collect_lowest<'a>(&'a self, label: &str, out: &mut Vec<&'a ParseTree>) {
        if self.is_leaf() {
            return;
        }
        if self.label == label && !self.has_label_below(label) {
            out.push(self);
            return;
        }
        for c in &self.children {
            c.collect_lowest(label, out);
        }
    }

    fn write_bracketed(&self, out: &mut String) {
        if let Some(t) = &self.token {
            out.push_str(t);
            return;
        }
        out.push('(');
        out.push_str(&self.label);
        for c in &self.children {
            out.push(' ');
            c.write_bracketed(out);
        }
        out.push(')');
    }

    /// Canonical single-line bracketed form.
    pub fn to_bracketed(&self) -> String {
        let mut s = String::new();
        self.write_bracketed(&mut s);
        s
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracketed())
    }
}

impl std::str::FromStr for ParseTree {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_bracketed(s)
    }
}

const NP_LABEL: &str = "NP";

/// A lowest-layer noun phrase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhrase {
    pub text: String,
    pub span: Span,
    #[serde(default = "default_valid")]
    pub valid: bool,
}

fn default_valid() -> bool {
    true
}

/// Returns every NP with no NP descendant, in span order, all marked valid.
pub fn extract_lowest_np(tree: &ParseTree) -> Vec<NounPhrase> {
    tree.lowest_np_nodes()
        .into_iter()
        .map(|n| NounPhrase {
            text: n.text(),
            span: n.span,
            valid: true,
        })
        .collect()
}

/// One output record of NP extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpRecord {
    pub caption: String,
    pub nps: Vec<NpEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpEntry {
    pub text: String,
    pub span: Span,
}

impl NpRecord {
    pub fn from_tree(tree: &ParseTree) -> Self {
        NpRecord {
            caption: tree.text(),
            nps: extract_lowest_np(tree)
                .into_iter()
                .map(|np| NpEntry {
                    text: np.text,
                    span: np.span,
                })
                .collect(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    next_leaf: usize,
}

impl<'a> Parser<'a> {
    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn skip_ws(&mut self) {
        while let Some(&b) = self.bytes().get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    /// Reads a run of non-space, non-bracket characters.
    fn atom(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() || b == b'(' || b == b')' {
                break;
            }
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn constituent(&mut self) -> Result<ParseTree, ParseError> {
        let open = self.pos;
        debug_assert_eq!(self.peek(), Some(b'('));
        self.pos += 1;
        self.skip_ws();
        let label = match self.peek() {
            None => return Err(ParseError::UnexpectedEnd { offset: self.pos }),
            Some(b'(') | Some(b')') => return Err(ParseError::MissingLabel { offset: open }),
            Some(_) => self.atom().to_string(),
        };
        let lo = self.next_leaf;
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None => return Err(ParseError::UnexpectedEnd { offset: self.pos }),
                Some(b')') => {
                    self.pos += 1;
                    break;
                }
                Some(b'(') => children.push(self.constituent()?),
                Some(_) => {
                    let word = self.atom();
                    let idx = self.next_leaf;
                    self.next_leaf += 1;
                    children.push(ParseTree {
                        label: String::new(),
                        children: Vec::new(),
                        token: Some(word.to_string()),
                        span: Span::new(idx, idx + 1),
                    });
                }
            }
        }
        if children.is_empty() {
            return Err(ParseError::EmptyConstituent { offset: open });
        }
        Ok(ParseTree {
            label,
            children,
            token: None,
            span: Span::new(lo, self.next_leaf),
        })
    }
}

/// Parses one bracketed tree. Errors carry the byte offset of the problem.
pub fn parse_bracketed(text: &str) -> Result<ParseTree, ParseError> {
    let mut p = Parser {
        src: text,
        pos: 0,
        next_leaf: 0,
    };
    p.skip_ws();
    match p.peek() {
        None => return Err(ParseError::Empty),
        Some(b'(') => {}
        Some(b')') => return Err(ParseError::UnexpectedClose { offset: p.pos }),
        Some(_) => return Err(ParseError::ExpectedOpen { offset: p.pos }),
    }
    let tree = p.constituent()?;
    p.skip_ws();
    match p.peek() {
        None => Ok(tree),
        Some(b')') => Err(ParseError::UnexpectedClose { offset: p.pos }),
        Some(_) => Err(ParseError::TrailingInput { offset: p.pos }),
    }
}
