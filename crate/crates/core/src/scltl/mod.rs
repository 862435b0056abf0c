//! Syntactically co-safe LTL: parsing, desugaring, finite-word semantics and
//! translation to a minimal deterministic good-prefix automaton.

mod dfa;
mod formula;
mod oracle;
mod parser;

pub use dfa::{to_dfa, Dfa, MAX_NFA_STATES};
pub use formula::Formula;
pub use oracle::{accepts_some_prefix, sat_strong_oracle};
pub use parser::parse_formula;

use std::fmt;

/// Largest supported atomic-proposition count (letters are `u32` bitsets and
/// the dense transition table has `2^|AP|` columns).
pub const MAX_APS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScltlError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown atomic proposition `{name}` at byte {offset}")]
    UnknownAtom { name: String, offset: usize },
    #[error("negation at byte {offset} applies to a non-atom; only `!p` is allowed")]
    NegatedNonAtom { offset: usize },
    #[error("{0} atomic propositions declared; at most {MAX_APS} are supported")]
    TooManyAps(usize),
    #[error("atomic proposition `{0}` declared twice")]
    DuplicateAp(String),
    #[error("formula must be desugared before translation")]
    NotDesugared,
    #[error("tableau automaton exceeded {MAX_NFA_STATES} states")]
    StateBlowup,
}

/// Ordered list of atomic propositions; position `k` is bit `k` of a [`Letter`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApList {
    names: Vec<String>,
}

impl ApList {
    pub fn new<I, S>(names: I) -> Result<Self, ScltlError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() > MAX_APS {
            return Err(ScltlError::TooManyAps(names.len()));
        }
        for (k, name) in names.iter().enumerate() {
            if names[..k].contains(name) {
                return Err(ScltlError::DuplicateAp(name.clone()));
            }
        }
        Ok(ApList { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Number of letters, `2^|AP|`.
    pub fn alphabet_size(&self) -> usize {
        1usize << self.names.len()
    }

    /// Builds a letter from AP names; unknown names are an error.
    pub fn letter<'a, I>(&self, names: I) -> Result<Letter, ScltlError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut bits = 0u32;
        for name in names {
            let k = self.index_of(name).ok_or_else(|| ScltlError::UnknownAtom {
                name: name.to_string(),
                offset: 0,
            })?;
            bits |= 1 << k;
        }
        Ok(Letter(bits))
    }

    pub fn format_letter(&self, letter: Letter) -> String {
        let parts: Vec<&str> = (0..self.len())
            .filter(|&k| letter.contains(k))
            .map(|k| self.names[k].as_str())
            .collect();
        format!("{{{}}}", parts.join(","))
    }
}

/// A set of atomic propositions, stored as a bitset over an [`ApList`].
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(pub u32);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn contains(self, ap: usize) -> bool {
        self.0 >> ap & 1 == 1
    }

    pub fn with(self, ap: usize) -> Letter {
        Letter(self.0 | 1 << ap)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}
