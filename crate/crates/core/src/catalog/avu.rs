//! AVU storage with a by-attribute-name index, and the query predicate
//! language:
//!
//! ```text
//! predicate := clause { ";" clause }
//! clause    := cond { "and" cond }
//! cond      := ("name" | "value" | "comment") ("=" | "!=" | "like") STRING
//! ```
//!
//! A path satisfies a clause when one of its triples satisfies every
//! condition in it, and the predicate when it satisfies every clause.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::types::AvuTriple;
use crate::error::{Error, Result};
use crate::glob::glob_match;

type ByPath = BTreeMap<String, BTreeSet<AvuTriple>>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "ByPath", into = "ByPath")]
pub struct AvuStore {
    by_path: ByPath,
    // attr_name -> paths carrying at least one triple with that name
    by_name: BTreeMap<String, BTreeSet<String>>,
}

impl PartialEq for AvuStore {
    fn eq(&self, other: &Self) -> bool {
        self.by_path == other.by_path
    }
}

impl Eq for AvuStore {}

impl From<ByPath> for AvuStore {
    fn from(by_path: ByPath) -> Self {
        let mut by_name: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (path, triples) in &by_path {
            for t in triples {
                by_name.entry(t.attr_name.clone()).or_default().insert(path.clone());
            }
        }
        AvuStore { by_path, by_name }
    }
}

impl From<AvuStore> for ByPath {
    fn from(s: AvuStore) -> Self {
        s.by_path
    }
}

impl AvuStore {
    /// Returns false if the triple was already attached.
    pub fn insert(&mut self, path: &str, triple: AvuTriple) -> bool {
        self.by_name.entry(triple.attr_name.clone()).or_default().insert(path.to_string());
        self.by_path.entry(path.to_string()).or_default().insert(triple)
    }

    pub fn remove_path(&mut self, path: &str) {
        if let Some(triples) = self.by_path.remove(path) {
            for t in triples {
                if let Some(paths) = self.by_name.get_mut(&t.attr_name) {
                    paths.remove(path);
                    if paths.is_empty() {
                        self.by_name.remove(&t.attr_name);
                    }
                }
            }
        }
    }

    pub fn get(&self, path: &str) -> impl Iterator<Item = &AvuTriple> {
        self.by_path.get(path).into_iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.by_path.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_path.is_empty()
    }

    pub fn query(&self, pred: &AvuPredicate) -> BTreeSet<String> {
        let Some(first) = pred.clauses.first() else {
            return BTreeSet::new();
        };
        // Narrow by an equality on the attribute name when one is present.
        let indexed = first
            .iter()
            .find(|c| c.field == AvuField::Name && c.op == AvuOp::Eq)
            .map(|c| self.by_name.get(&c.literal).cloned().unwrap_or_default());
        let candidates: Box<dyn Iterator<Item = &String>> = match &indexed {
            Some(paths) => Box::new(paths.iter()),
            None => Box::new(self.by_path.keys()),
        };
        candidates
            .filter(|path| {
                let triples = &self.by_path[path.as_str()];
                pred.clauses.iter().all(|clause| triples.iter().any(|t| clause.iter().all(|c| c.holds(t))))
            })
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvuField {
    Name,
    Value,
    Comment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AvuOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "like")]
    Like,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvuCondition {
    pub field: AvuField,
    pub op: AvuOp,
    pub literal: String,
}

impl AvuCondition {
    pub fn new(field: AvuField, op: AvuOp, literal: impl Into<String>) -> Self {
        AvuCondition { field, op, literal: literal.into() }
    }

    pub fn holds(&self, t: &AvuTriple) -> bool {
        let subject = match self.field {
            AvuField::Name => &t.attr_name,
            AvuField::Value => &t.attr_value,
            AvuField::Comment => &t.attr_comment,
        };
        match self.op {
            AvuOp::Eq => *subject == self.literal,
            AvuOp::Ne => *subject != self.literal,
            AvuOp::Like => glob_match(&self.literal, subject),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvuPredicate {
    pub clauses: Vec<Vec<AvuCondition>>,
}

impl AvuPredicate {
    /// Single-clause predicate.
    pub fn all_of(conds: Vec<AvuCondition>) -> Self {
        AvuPredicate { clauses: vec![conds] }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let toks = tokenize(text)?;
        let mut it = toks.into_iter().peekable();
        let mut clauses = vec![Vec::new()];
        loop {
            let field = match it.next() {
                Some(PTok::Word(w)) => match w.as_str() {
                    "name" => AvuField::Name,
                    "value" => AvuField::Value,
                    "comment" => AvuField::Comment,
                    _ => return Err(malformed(format!("unknown field `{w}`"))),
                },
                Some(other) => return Err(malformed(format!("expected field, found {other:?}"))),
                None => return Err(malformed("expected field, found end of input")),
            };
            let op = match it.next() {
                Some(PTok::Eq) => AvuOp::Eq,
                Some(PTok::Ne) => AvuOp::Ne,
                Some(PTok::Word(w)) if w == "like" => AvuOp::Like,
                other => return Err(malformed(format!("expected `=`, `!=` or `like`, found {other:?}"))),
            };
            let literal = match it.next() {
                Some(PTok::Str(s)) => s,
                other => return Err(malformed(format!("expected string literal, found {other:?}"))),
            };
            clauses.last_mut().expect("nonempty").push(AvuCondition { field, op, literal });
            match it.next() {
                None => break,
                Some(PTok::Word(w)) if w == "and" => {}
                Some(PTok::Semi) => clauses.push(Vec::new()),
                Some(other) => return Err(malformed(format!("expected `and` or `;`, found {other:?}"))),
            }
        }
        Ok(AvuPredicate { clauses })
    }
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedPredicate(msg.into())
}

#[derive(Debug)]
enum PTok {
    Word(String),
    Str(String),
    Eq,
    Ne,
    Semi,
}

fn tokenize(text: &str) -> Result<Vec<PTok>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '=' => {
                chars.next();
                out.push(PTok::Eq);
            }
            ';' => {
                chars.next();
                out.push(PTok::Semi);
            }
            '!' => {
                chars.next();
                if chars.next() != Some('=') {
                    return Err(malformed("expected `!=`"));
                }
                out.push(PTok::Ne);
            }
            '"' => {
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(malformed("unterminated string")),
                        Some('"') => break,
                        Some('\\') => match chars.next() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('n') => s.push('\n'),
                            _ => return Err(malformed("bad escape")),
                        },
                        Some(ch) => s.push(ch),
                    }
                }
                out.push(PTok::Str(s));
            }
            c if c.is_ascii_alphabetic() => {
                let mut w = String::new();
                while let Some(&c) = chars.peek().filter(|c| c.is_ascii_alphabetic()) {
                    w.push(c);
                    chars.next();
                }
                out.push(PTok::Word(w));
            }
            other => return Err(malformed(format!("unexpected character `{other}`"))),
        }
    }
    if out.is_empty() {
        return Err(malformed("empty predicate"));
    }
    Ok(out)
}
