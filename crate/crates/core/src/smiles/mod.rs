//! SMILES lexing, parsing and canonical writing.
//!
//! The supported subset is the organic subset (`B C N O P S F Cl Br I`, with
//! aromatic `b c n o p s`) plus bracket atoms carrying charge and hydrogen
//! counts. Stereo marks are read and dropped. Multi-fragment input is
//! rejected.

mod canon;
mod graph;
mod parse;
mod vocab;

pub use canon::write_canonical;
pub use graph::{Atom, Bond, BondOrder, Element, Formula, MolGraph};
pub use parse::parse;
pub use vocab::{lex, tokenize, Token, TokenId, Vocab};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("unknown element {symbol:?} at byte {offset}")]
    UnknownElement { symbol: String, offset: usize },
    #[error("unexpected character {ch:?} at byte {offset}")]
    UnexpectedCharacter { ch: char, offset: usize },
    #[error("unbalanced parenthesis at byte {offset}")]
    UnbalancedParenthesis { offset: usize },
    #[error("ring closure {label} opened at byte {offset} is never closed")]
    UnmatchedRingClosure { label: u16, offset: usize },
    #[error("conflicting bond orders on ring closure {label}")]
    RingBondMismatch { label: u16 },
    #[error("ring closure {label} bonds an atom to itself")]
    SelfBond { label: u16 },
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("malformed bracket atom at byte {offset}")]
    InvalidBracketAtom { offset: usize },
    #[error("bond symbol at byte {offset} is not followed by an atom")]
    DanglingBond { offset: usize },
    #[error("multi-fragment SMILES ('.' at byte {offset}) are not supported")]
    MultipleFragments { offset: usize },
    #[error("aromatic atom {atom} is not part of a ring")]
    AromaticOutsideRing { atom: usize },
    #[error("aromatic bond between non-aromatic atoms {0} and {1}")]
    InvalidAromaticBond(usize, usize),
    #[error("unknown token {text:?} at byte {offset}")]
    UnknownToken { text: String, offset: usize },
    #[error("invalid molecular graph: {0}")]
    InvalidGraph(String),
    #[error("invalid formula {0:?}")]
    InvalidFormula(String),
}

/// Parses and re-emits `smiles` in canonical form.
pub fn canonicalize(smiles: &str) -> Result<String, SmilesError> {
    parse(smiles).map(|g| write_canonical(&g))
}

/// Computes the molecular formula of a parsed graph (heavy atoms plus hydrogens).
pub fn molecular_formula(g: &MolGraph) -> Formula {
    g.formula()
}

/// Reads a corpus in the one-SMILES-per-line format; blank lines and lines
/// starting with `#` are skipped.
pub fn read_corpus(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}
