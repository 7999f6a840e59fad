use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Character-level token inventory of an acoustic model. Line `i` of a vocabulary file is
/// token id `i`; line 0 is the blank. `▁` in the file stands for a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<char, u32>,
}

const SPACE_MARK: &str = "▁";

impl Vocabulary {
    /// `tokens[0]` is the blank symbol; every other entry must be a single character.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::invalid("vocabulary needs blank plus at least one token"));
        }
        let mut index = HashMap::new();
        for (id, tok) in tokens.iter().enumerate().skip(1) {
            let mut chars = tok.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::invalid(format!(
                    "token {id} ({tok:?}) is not a single character"
                )));
            };
            if index.insert(c, id as u32).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn from_chars(blank: &str, chars: impl IntoIterator<Item = char>) -> Result<Self> {
        let mut tokens = vec![blank.to_string()];
        tokens.extend(chars.into_iter().map(String::from));
        Self::new(tokens)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            tokens.push(if line == SPACE_MARK {
                " ".to_string()
            } else {
                line.to_string()
            });
        }
        Self::new(tokens)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for tok in &self.tokens {
            s.push_str(if tok == " " { SPACE_MARK } else { tok });
            s.push('\n');
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    /// Token ids for `text`, plus the characters that have no token (skipped).
    pub fn tokenize(&self, text: &str) -> (Vec<u32>, Vec<char>) {
        let mut ids = Vec::with_capacity(text.len());
        let mut unknown = Vec::new();
        for c in text.chars() {
            match self.index.get(&c) {
                Some(&id) => ids.push(id),
                None if !unknown.contains(&c) => unknown.push(c),
                None => {}
            }
        }
        (ids, unknown)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_keeps_space_token() {
        let v = Vocabulary::from_chars("<blank>", "ab ".chars()).unwrap();
        let back = Vocabulary::read(v.to_file_string().as_bytes()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id(' '), Some(3));
    }

    #[test]
    fn tokenize_reports_unknown_once() {
        let v = Vocabulary::from_chars("<b>", "ab".chars()).unwrap();
        assert_eq!(v.tokenize("abxax"), (vec![1, 2, 1], vec!['x']));
    }

    #[test]
    fn rejects_multichar_and_duplicates() {
        assert!(Vocabulary::new(vec!["<b>".into(), "ab".into()]).is_err());
        assert!(Vocabulary::new(vec!["<b>".into(), "a".into(), "a".into()]).is_err());
    }
}
