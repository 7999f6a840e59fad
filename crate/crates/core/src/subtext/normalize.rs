use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::ctcseg::Vocabulary;
use crate::error::{Error, Result};

/// Expands numbers into their spoken form for one language.
pub trait Verbalizer {
    fn language(&self) -> &str;
    /// Must leave no ASCII digit in its output.
    fn verbalize(&self, text: &str) -> String;
}

/// Minimal English number verbalizer: every run of ASCII digits is read as a cardinal.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnglishVerbalizer;

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];
const SCALES: [(u64, &str); 6] = [
    (1_000_000_000_000_000_000, "quintillion"),
    (1_000_000_000_000_000, "quadrillion"),
    (1_000_000_000_000, "trillion"),
    (1_000_000_000, "billion"),
    (1_000_000, "million"),
    (1_000, "thousand"),
];

fn below_thousand(n: u64, out: &mut Vec<String>) {
    let (hundreds, rest) = (n / 100, n % 100);
    if hundreds > 0 {
        out.push(format!("{} hundred", ONES[hundreds as usize]));
        if rest > 0 {
            out.push("and".into());
        }
    }
    if rest >= 20 {
        let (t, o) = (rest / 10, rest % 10);
        out.push(if o == 0 {
            TENS[t as usize].to_string()
        } else {
            format!("{}-{}", TENS[t as usize], ONES[o as usize])
        });
    } else if rest > 0 {
        out.push(ONES[rest as usize].to_string());
    }
}

fn cardinal(mut n: u64) -> String {
    if n == 0 {
        return ONES[0].into();
    }
    let mut words = Vec::new();
    for (scale, name) in SCALES {
        if n >= scale {
            below_thousand(n / scale, &mut words);
            words.push(name.into());
            n %= scale;
        }
    }
    if n > 0 {
        if !words.is_empty() && n < 100 {
            words.push("and".into());
        }
        below_thousand(n, &mut words);
    }
    words.join(" ")
}

impl Verbalizer for EnglishVerbalizer {
    fn language(&self) -> &str {
        "en"
    }

    fn verbalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut digits = String::new();
        let flush = |digits: &mut String, out: &mut String| {
            if digits.is_empty() {
                return;
            }
            match digits.parse::<u64>() {
                Ok(n) if !(digits.len() > 1 && digits.starts_with('0')) => {
                    out.push_str(&cardinal(n))
                }
                // leading zeros or too large: read digit by digit
                _ => {
                    let spoken: Vec<&str> = digits
                        .bytes()
                        .map(|b| ONES[(b - b'0') as usize])
                        .collect();
                    out.push_str(&spoken.join(" "));
                }
            }
            digits.clear();
        };
        for c in text.chars() {
            if c.is_ascii_digit() {
                digits.push(c);
            } else {
                flush(&mut digits, &mut out);
                out.push(c);
            }
        }
        flush(&mut digits, &mut out);
        out
    }
}

/// Character substitutions (`from<TAB>to` per line), e.g. full-width forms to the model's
/// character set. Chains are resolved on load so applying the map is idempotent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CharMap {
    map: HashMap<char, String>,
}

impl CharMap {
    pub fn new(entries: impl IntoIterator<Item = (char, String)>) -> Result<Self> {
        let raw: HashMap<char, String> = entries.into_iter().collect();
        for (&from, to) in &raw {
            if from.is_whitespace() {
                return Err(Error::invalid(format!(
                    "charmap source {from:?} is whitespace"
                )));
            }
            if !from.is_numeric() && to.chars().any(|c| c.is_ascii_digit()) {
                return Err(Error::invalid(format!(
                    "charmap maps non-numeric {from:?} to digits {to:?}"
                )));
            }
        }
        let mut map = HashMap::with_capacity(raw.len());
        for &from in raw.keys() {
            map.insert(from, resolve(from, &raw, &mut Vec::new())?);
        }
        Ok(Self { map })
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (from, to) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected from<TAB>to".into()))?;
            let mut chars = from.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(parse_err(format!("source {from:?} is not one character")));
            };
            entries.push((c, to.to_string()));
        }
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        for c in text.chars() {
            match self.map.get(&c) {
                Some(to) => out.push_str(to),
                None => out.push(c),
            }
        }
        out
    }
}

fn resolve(c: char, raw: &HashMap<char, String>, stack: &mut Vec<char>) -> Result<String> {
    let Some(to) = raw.get(&c) else {
        return Ok(c.to_string());
    };
    if to.chars().eq(std::iter::once(c)) {
        return Ok(to.clone());
    }
    if stack.contains(&c) {
        return Err(Error::invalid(format!("charmap cycle through {c:?}")));
    }
    stack.push(c);
    let mut out = String::new();
    for d in to.chars() {
        out.push_str(&resolve(d, raw, stack)?);
    }
    stack.pop();
    Ok(out)
}

/// Membership test for the model's token inventory.
pub trait TokenSet {
    fn contains_char(&self, c: char) -> bool;
}

impl TokenSet for Vocabulary {
    fn contains_char(&self, c: char) -> bool {
        self.contains(c)
    }
}

impl TokenSet for HashSet<char> {
    fn contains_char(&self, c: char) -> bool {
        self.contains(&c)
    }
}

impl TokenSet for BTreeSet<char> {
    fn contains_char(&self, c: char) -> bool {
        self.contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    pub text: String,
    /// Characters (excluding whitespace) missing from the token set, in first-seen order.
    pub unknown: Vec<char>,
}

/// Charmap, then number verbalization, then charmap again (verbalizer output may contain
/// mapped characters), then whitespace collapse. Unknown characters are kept in the text and
/// reported.
pub fn normalize_text(
    text: &str,
    verbalizer: &dyn Verbalizer,
    charmap: &CharMap,
    tokens: Option<&dyn TokenSet>,
) -> NormalizedText {
    let mapped = charmap.apply(&verbalizer.verbalize(&charmap.apply(text)));
    let text = mapped.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut unknown = Vec::new();
    if let Some(tokens) = tokens {
        for c in text.chars() {
            if !c.is_whitespace() && !tokens.contains_char(c) && !unknown.contains(&c) {
                unknown.push(c);
            }
        }
    }
    NormalizedText { text, unknown }
}

/// One line of the unknown-character report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownCharReport {
    pub cue_index: usize,
    pub chars: Vec<String>,
}

impl UnknownCharReport {
    pub fn new(cue_index: usize, chars: &[char]) -> Self {
        Self {
            cue_index,
            chars: chars.iter().map(|c| c.to_string()).collect(),
        }
    }
}
