use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// CTC blank label. Alphabet symbol `i` has label `i + 1`.
pub const BLANK: usize = 0;

/// Letters of the default toy alphabet: enough to spell
/// "okay google unlock phone and delete files".
pub const DEFAULT_SYMBOLS: &str = "acdefghiklnopstuy ";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.is_empty() {
            return Err(Error::InvalidParameter("empty alphabet".into()));
        }
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { symbols })
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Number of symbols, blank excluded.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Output layer width: symbols plus blank.
    pub fn width(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn label(&self, c: char) -> Result<usize> {
        self.symbols.iter().position(|&s| s == c).map(|i| i + 1).ok_or(Error::UnknownSymbol(c))
    }

    pub fn symbol(&self, label: usize) -> Option<char> {
        label.checked_sub(1).and_then(|i| self.symbols.get(i)).copied()
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.label(c)).collect()
    }

    /// Maps labels to text, skipping blanks and unknown labels.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.symbol(l)).collect()
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new(DEFAULT_SYMBOLS).expect("default alphabet is valid")
    }
}

impl TryFrom<String> for Alphabet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::new(&s)
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.symbols.into_iter().collect()
    }
}

/// Decoded character sequence (blanks removed, repeats collapsed).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript(pub String);

impl Transcript {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl From<&str> for Transcript {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for Transcript {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_offset_by_blank() {
        let a = Alphabet::new("ab").unwrap();
        assert_eq!(a.width(), 3);
        assert_eq!(a.encode("ba").unwrap(), vec![2, 1]);
        assert_eq!(a.decode(&[0, 1, 0, 2]), "ab");
        assert!(matches!(a.encode("z"), Err(Error::UnknownSymbol('z'))));
    }

    #[test]
    fn default_alphabet_spells_the_reference_command() {
        let a = Alphabet::default();
        assert!(a.encode("okay google unlock phone and delete files").is_ok());
        assert_eq!(a.width(), 19);
    }

    #[test]
    fn rejects_duplicates() {
        assert!(Alphabet::new("aba").is_err());
        assert!(Alphabet::new("").is_err());
    }

    #[test]
    fn serde_as_string() {
        let a = Alphabet::new("xyz ").unwrap();
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "\"xyz \"");
        assert_eq!(serde_json::from_str::<Alphabet>(&json).unwrap(), a);
    }
}
