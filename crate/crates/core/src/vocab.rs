//! Character vocabularies with reserved end-of-sequence and blank labels.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A sequence of label indices.
pub type LabelSeq = Vec<usize>;

/// The digit set used by the toy tasks, plus space.
pub const DIGITS: &str = "0123456789 ";

/// The 79-symbol IAM-style character set.
pub const IAM: &str =
    " !\"#&'()*+,-./0123456789:;?ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

/// Ordered character set. Index `num_chars()` is EOS and the last index
/// (`num_chars() + 1`) is the CTC blank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Vocab {
    chars: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Vocab {
    pub fn new(chars: &str) -> Result<Self> {
        let chars: Vec<char> = chars.chars().collect();
        if chars.is_empty() {
            return Err(Error::Config("vocabulary is empty".into()));
        }
        let mut index = HashMap::new();
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Config(format!(
                    "duplicate vocabulary character {c:?}"
                )));
            }
        }
        Ok(Vocab { chars, index })
    }

    pub fn digits() -> Self {
        Vocab::new(DIGITS).expect("static vocabulary")
    }

    pub fn iam() -> Self {
        Vocab::new(IAM).expect("static vocabulary")
    }

    /// Resolves `digits`, `iam`, or a literal character list.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "digits" => Ok(Self::digits()),
            "iam" => Ok(Self::iam()),
            other => Vocab::new(other),
        }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn num_chars(&self) -> usize {
        self.chars.len()
    }

    pub fn eos(&self) -> usize {
        self.chars.len()
    }

    pub fn blank(&self) -> usize {
        self.chars.len() + 1
    }

    /// Total label count including EOS and blank.
    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    /// Output classes of the attention head: characters and EOS.
    pub fn attention_classes(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn encode(&self, text: &str) -> Result<LabelSeq> {
        text.chars()
            .map(|c| self.index_of(c).ok_or(Error::UnknownChar(c)))
            .collect()
    }

    /// Maps labels back to text, skipping EOS, blank and out-of-range values.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels.iter().filter_map(|&l| self.chars.get(l)).collect()
    }

    /// Renders one label for display; EOS and blank get bracketed names.
    pub fn label_name(&self, l: usize) -> String {
        match l {
            l if l < self.chars.len() => self.chars[l].to_string(),
            l if l == self.eos() => "<eos>".into(),
            l if l == self.blank() => "<blank>".into(),
            _ => "<?>".into(),
        }
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

impl TryFrom<String> for Vocab {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Vocab::new(&s)
    }
}

impl From<Vocab> for String {
    fn from(v: Vocab) -> String {
        v.as_string()
    }
}
