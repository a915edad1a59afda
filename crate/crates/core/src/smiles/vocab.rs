use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::SmilesError;

pub type TokenId = u32;

/// One lexical unit of a SMILES string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub id: TokenId,
}

/// Token inventory with dedicated begin/end-of-sequence entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
    longest: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    bos: TokenId,
    eos: TokenId,
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = String;

    fn try_from(r: VocabRepr) -> Result<Self, Self::Error> {
        Vocab::new(r.tokens, r.bos, r.eos)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            tokens: v.tokens,
            bos: v.bos,
            eos: v.eos,
        }
    }
}

impl Vocab {
    pub const BOS: &'static str = "<bos>";
    pub const EOS: &'static str = "<eos>";

    pub fn new(tokens: Vec<String>, bos: TokenId, eos: TokenId) -> Result<Self, String> {
        if bos == eos {
            return Err("bos and eos must differ".into());
        }
        if bos as usize >= tokens.len() || eos as usize >= tokens.len() {
            return Err("bos/eos index out of range".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(format!("token {i} is empty"));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(format!("duplicate token {t:?}"));
            }
        }
        let longest = tokens
            .iter()
            .enumerate()
            .filter(|&(i, _)| i as TokenId != bos && i as TokenId != eos)
            .map(|(_, t)| t.len())
            .max()
            .unwrap_or(0);
        Ok(Vocab {
            tokens,
            index,
            bos,
            eos,
            longest,
        })
    }

    /// Builds a vocabulary from every lexeme observed in `corpus`, sorted,
    /// preceded by BOS (id 0) and EOS (id 1).
    pub fn from_corpus<'a, I>(corpus: I) -> Result<Self, SmilesError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen = std::collections::BTreeSet::new();
        for line in corpus {
            for lexeme in lex(line)? {
                seen.insert(lexeme.to_owned());
            }
        }
        let mut tokens = vec![Self::BOS.to_owned(), Self::EOS.to_owned()];
        tokens.extend(seen);
        Ok(Vocab::new(tokens, 0, 1).expect("corpus lexemes are distinct and nonempty"))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, text: &str) -> Option<TokenId> {
        self.index.get(text).copied()
    }

    pub fn text(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// Longest-match tokenization against this vocabulary. BOS/EOS are never
    /// produced.
    pub fn tokenize(&self, smiles: &str) -> Result<Vec<Token>, SmilesError> {
        if smiles.is_empty() {
            return Err(SmilesError::EmptyInput);
        }
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < smiles.len() {
            let max = self.longest.min(smiles.len() - pos);
            let hit = (1..=max).rev().find_map(|len| {
                let piece = smiles.get(pos..pos + len)?;
                let id = self.id(piece)?;
                (id != self.bos && id != self.eos).then_some((piece, id))
            });
            match hit {
                Some((piece, id)) => {
                    out.push(Token {
                        text: piece.to_owned(),
                        id,
                    });
                    pos += piece.len();
                }
                None => {
                    let text = smiles[pos..].chars().next().unwrap().to_string();
                    return Err(SmilesError::UnknownToken { text, offset: pos });
                }
            }
        }
        Ok(out)
    }

    pub fn tokenize_ids(&self, smiles: &str) -> Result<Vec<TokenId>, SmilesError> {
        Ok(self.tokenize(smiles)?.into_iter().map(|t| t.id).collect())
    }

    /// Concatenates token texts, skipping BOS and EOS.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id != self.bos && id != self.eos)
            .map(|&id| self.text(id))
            .collect()
    }
}

pub fn tokenize(smiles: &str, vocab: &Vocab) -> Result<Vec<Token>, SmilesError> {
    vocab.tokenize(smiles)
}

/// Grammar lexer used to build vocabularies: bracket atoms, two-letter
/// halogens, `%nn` ring labels, and single characters otherwise.
pub fn lex(smiles: &str) -> Result<Vec<&str>, SmilesError> {
    let b = smiles.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let len = match b[i] {
            b'[' => match smiles[i..].find(']') {
                Some(end) => end + 1,
                None => {
                    return Err(SmilesError::UnknownToken {
                        text: smiles[i..].to_owned(),
                        offset: i,
                    })
                }
            },
            b'C' if b.get(i + 1) == Some(&b'l') => 2,
            b'B' if b.get(i + 1) == Some(&b'r') => 2,
            b'%' if b.get(i + 1..i + 3).is_some_and(|d| d.iter().all(u8::is_ascii_digit)) => 3,
            b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' | b'b' | b'c' | b'n'
            | b'o' | b'p' | b's' | b'(' | b')' | b'.' | b'=' | b'#' | b'-' | b'+' | b'\\'
            | b'/' | b':' | b'~' | b'@' | b'?' | b'>' | b'*' | b'$' | b'0'..=b'9' => 1,
            _ => {
                let text = smiles[i..].chars().next().unwrap().to_string();
                return Err(SmilesError::UnknownToken { text, offset: i });
            }
        };
        out.push(&smiles[i..i + len]);
        i += len;
    }
    Ok(out)
}
