//! Commit search over metadata and variable changes.
//!
//! A query is a list of space-separated `field:needle` clauses that must all
//! match. Fields are `message`, `tag`, `branch`, `var` and `text`; a bare
//! term is a `text` clause. Needles may be double-quoted to include spaces.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::store::{Commit, CommitId, Store};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Message,
    Tag,
    Branch,
    Var,
    Text,
}

impl Field {
    fn from_name(name: &str) -> Option<Field> {
        Some(match name {
            "message" => Field::Message,
            "tag" => Field::Tag,
            "branch" => Field::Branch,
            "var" => Field::Var,
            "text" => Field::Text,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub field: Field,
    pub needle: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchQuery {
    pub clauses: Vec<Clause>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("empty query")]
    Empty,
    #[error("empty needle for field '{0}'")]
    EmptyNeedle(String),
    #[error("unknown search field '{0}'")]
    UnknownField(String),
    #[error("unterminated quote")]
    UnterminatedQuote,
}

/// Splits on whitespace outside double quotes; quotes are removed.
fn terms(q: &str) -> Result<Vec<String>, QueryError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_term = false;
    let mut quoted = false;
    for ch in q.chars() {
        match ch {
            '"' => {
                quoted = !quoted;
                in_term = true;
            }
            c if c.is_whitespace() && !quoted => {
                if in_term {
                    out.push(std::mem::take(&mut cur));
                    in_term = false;
                }
            }
            c => {
                cur.push(c);
                in_term = true;
            }
        }
    }
    if quoted {
        return Err(QueryError::UnterminatedQuote);
    }
    if in_term {
        out.push(cur);
    }
    Ok(out)
}

impl SearchQuery {
    pub fn parse(q: &str) -> Result<SearchQuery, QueryError> {
        let raw_terms = split_raw(q)?;
        if raw_terms.is_empty() {
            return Err(QueryError::Empty);
        }
        let mut clauses = Vec::new();
        for raw in raw_terms {
            // A field prefix only counts when it precedes any quote.
            let (field, rest) = match raw.split_once(':') {
                Some((name, rest)) if !name.contains('"') => {
                    let field = Field::from_name(name)
                        .ok_or_else(|| QueryError::UnknownField(name.to_string()))?;
                    (field, rest.to_string())
                }
                _ => (Field::Text, raw.clone()),
            };
            let needle = terms(&rest)?.concat();
            if needle.is_empty() {
                let name = format!("{field:?}").to_lowercase();
                return Err(QueryError::EmptyNeedle(name));
            }
            clauses.push(Clause { field, needle });
        }
        Ok(SearchQuery { clauses })
    }

    pub fn matches(&self, store: &Store, commit: &Commit) -> bool {
        self.clauses.iter().all(|c| clause_matches(c, store, commit))
    }
}

/// Whitespace-separated raw terms, quotes kept.
fn split_raw(q: &str) -> Result<Vec<String>, QueryError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in q.chars() {
        if ch == '"' {
            quoted = !quoted;
        }
        if ch.is_whitespace() && !quoted {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(ch);
        }
    }
    if quoted {
        return Err(QueryError::UnterminatedQuote);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

impl fmt::Display for SearchQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let name = format!("{:?}", c.field).to_lowercase();
            if c.needle.contains(char::is_whitespace) {
                write!(f, "{name}:\"{}\"", c.needle)?;
            } else {
                write!(f, "{name}:{}", c.needle)?;
            }
        }
        Ok(())
    }
}

/// ASCII case-insensitive substring test.
pub fn contains_folded(haystack: &str, needle: &str) -> bool {
    haystack
        .to_ascii_lowercase()
        .contains(&needle.to_ascii_lowercase())
}

fn clause_matches(c: &Clause, store: &Store, commit: &Commit) -> bool {
    let opt = |s: Option<&str>| s.is_some_and(|s| contains_folded(s, &c.needle));
    match c.field {
        Field::Message => opt(store.message(&commit.id)),
        Field::Tag => opt(store.tag(&commit.id)),
        Field::Branch => contains_folded(&commit.branch, &c.needle),
        Field::Var => {
            commit.var_delta.contains_key(&c.needle) || commit.var_deleted.contains(&c.needle)
        }
        Field::Text => opt(store.message(&commit.id)) || opt(store.tag(&commit.id)),
    }
}

/// Matching commits in the order they were persisted.
pub fn search(store: &Store, q: &SearchQuery) -> Vec<CommitId> {
    store
        .commits()
        .filter(|c| q.matches(store, c))
        .map(|c| c.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clause(field: Field, needle: &str) -> Clause {
        Clause {
            field,
            needle: needle.into(),
        }
    }

    #[test]
    fn parses_fields_and_bare_terms() {
        let q = SearchQuery::parse("var:prediction  fit tag:v1").unwrap();
        assert_eq!(
            q.clauses,
            [
                clause(Field::Var, "prediction"),
                clause(Field::Text, "fit"),
                clause(Field::Tag, "v1")
            ]
        );
    }

    #[test]
    fn quoted_needles() {
        let q = SearchQuery::parse("message:\"fit model\" \"a b\" var:\"prediction\"").unwrap();
        assert_eq!(
            q.clauses,
            [
                clause(Field::Message, "fit model"),
                clause(Field::Text, "a b"),
                clause(Field::Var, "prediction")
            ]
        );
        assert_eq!(SearchQuery::parse(&q.to_string()).unwrap(), q);
        assert_eq!(SearchQuery::parse("\"x:1\"").unwrap().clauses, [clause(Field::Text, "x:1")]);
    }

    #[test]
    fn rejects_bad_queries() {
        assert_eq!(SearchQuery::parse("message:\"\""), Err(QueryError::EmptyNeedle("message".into())));
        assert_eq!(SearchQuery::parse("var:"), Err(QueryError::EmptyNeedle("var".into())));
        assert_eq!(SearchQuery::parse("author:me"), Err(QueryError::UnknownField("author".into())));
        assert_eq!(SearchQuery::parse("  "), Err(QueryError::Empty));
        assert_eq!(SearchQuery::parse("tag:\"v1"), Err(QueryError::UnterminatedQuote));
    }

    #[test]
    fn folding_is_ascii_only() {
        assert!(contains_folded("Fit MODEL", "model"));
        assert!(!contains_folded("É", "é"));
    }
}
