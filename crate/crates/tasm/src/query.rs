//! Label predicates and query specifications.
//!
//! Predicates are in conjunctive normal form: an AND of clauses, each
//! clause an OR of label literals. The text form joins clauses with `&`
//! and literals with `|`, e.g. `car|bicycle & red`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// CNF over labels: conjunction of disjunctions of label literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelPredicate {
    clauses: Vec<Vec<String>>,
}

impl LabelPredicate {
    pub fn new(clauses: Vec<Vec<String>>) -> Result<Self> {
        if clauses.is_empty() || clauses.iter().any(|c| c.is_empty()) {
            return Err(Error::EmptyInput("predicate needs at least one clause"));
        }
        if clauses.iter().flatten().any(|l| l.is_empty()) {
            return Err(Error::EmptyLabel);
        }
        Ok(Self { clauses })
    }

    /// Single-literal predicate.
    pub fn single(label: impl Into<String>) -> Self {
        Self {
            clauses: vec![vec![label.into()]],
        }
    }

    /// One clause matching any of the given labels.
    pub fn any_of<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(vec![labels.into_iter().map(Into::into).collect()])
    }

    pub fn clauses(&self) -> &[Vec<String>] {
        &self.clauses
    }

    /// Union of all labels mentioned anywhere in the predicate.
    pub fn labels(&self) -> BTreeSet<&str> {
        self.clauses
            .iter()
            .flatten()
            .map(String::as_str)
            .collect()
    }

    /// Parse the CLI grammar: clauses joined by `&`, literals by `|`.
    pub fn parse(input: &str) -> Result<Self> {
        let mut clauses = Vec::new();
        for clause in input.split('&') {
            let lits: Vec<String> = clause
                .split('|')
                .map(|l| l.trim().to_string())
                .collect();
            if lits.iter().any(|l| l.is_empty()) {
                return Err(Error::PredicateParse {
                    input: input.to_string(),
                    reason: "empty label literal".to_string(),
                });
            }
            clauses.push(lits);
        }
        Self::new(clauses).map_err(|_| Error::PredicateParse {
            input: input.to_string(),
            reason: "no clauses".to_string(),
        })
    }
}

impl fmt::Display for LabelPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.clauses.iter().map(|c| c.join("|")).collect();
        write!(f, "{}", parts.join(" & "))
    }
}

/// A subframe-selection query: a CNF predicate over one video plus an
/// optional half-open frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySpec {
    pub video: String,
    pub predicate: LabelPredicate,
    pub frame_range: Option<Range<u32>>,
}

impl QuerySpec {
    pub fn new(
        video: impl Into<String>,
        predicate: LabelPredicate,
        frame_range: Option<Range<u32>>,
    ) -> Self {
        Self {
            video: video.into(),
            predicate,
            frame_range,
        }
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.predicate.labels()
    }

    /// The query's range clipped to a video length.
    pub fn effective_range(&self, video_len: u32) -> Range<u32> {
        match &self.frame_range {
            Some(r) => r.start.min(video_len)..r.end.min(video_len),
            None => 0..video_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_single_label() {
        let p = LabelPredicate::parse("car").unwrap();
        assert_eq!(p.clauses(), &[vec!["car".to_string()]]);
    }

    #[test]
    fn parse_cnf() {
        let p = LabelPredicate::parse("car|bicycle & red").unwrap();
        assert_eq!(p.clauses().len(), 2);
        assert_eq!(p.clauses()[0], vec!["car".to_string(), "bicycle".to_string()]);
        assert_eq!(p.clauses()[1], vec!["red".to_string()]);
        assert_eq!(p.to_string(), "car|bicycle & red");
    }

    #[test]
    fn parse_rejects_empty_literal() {
        assert!(LabelPredicate::parse("car|").is_err());
        assert!(LabelPredicate::parse("").is_err());
        assert!(LabelPredicate::parse("a & & b").is_err());
    }

    #[test]
    fn labels_union() {
        let p = LabelPredicate::parse("car|bicycle & car").unwrap();
        let l = p.labels();
        assert_eq!(l, BTreeSet::from(["bicycle", "car"]));
    }
}
