//! Word-level vocabulary with a leading `[CLS]` token.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

const BUILTIN_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const UNK: &str = "[UNK]";

/// Lowercased words: runs of alphanumerics and apostrophes; any other
/// non-whitespace character stands alone.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() || ch == '\'' {
            current.push(ch);
        } else {
            if !current.is_empty() {
                out.push(core::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    /// The list shipped in `data/stopwords.txt`.
    pub fn builtin() -> Self {
        Self::from_lines(BUILTIN_STOPWORDS)
    }

    /// One lowercase token per line; blank lines ignored.
    pub fn from_lines(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(ToString::to_string)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Token table. Ids 0, 1 and 2 are `[PAD]`, `[CLS]` and `[UNK]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = &'static str;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < 3 || tokens[0] != PAD || tokens[1] != CLS || tokens[2] != UNK {
            return Err("vocabulary must start with [PAD], [CLS], [UNK]");
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { tokens, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const CLS_ID: usize = 1;
    pub const UNK_ID: usize = 2;

    /// Words seen at least `min_count` times, most frequent first, ties in
    /// lexicographic order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for w in words(t) {
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(
            [PAD, CLS, UNK]
                .into_iter()
                .map(ToString::to_string)
                .chain(ranked.into_iter().map(|(w, _)| w))
                .collect(),
        )
    }

    /// Rebuilds a vocabulary from its token list (as stored in checkpoints).
    ///
    /// Panics unless the list starts with `[PAD]`, `[CLS]`, `[UNK]`.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Self::try_from(tokens).expect("invalid vocabulary")
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(Self::UNK_ID)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub token_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    pub cls_index: usize,
}

impl TokenizedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of unmasked positions.
    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }

    /// Right-pads with `[PAD]` up to `len`.
    pub fn pad_to(&mut self, len: usize) {
        while self.token_ids.len() < len {
            self.token_ids.push(Vocab::PAD_ID);
            self.attention_mask.push(0);
        }
    }

    /// Keeps the first `max_len` positions, so `[CLS]` survives.
    pub fn truncate(&mut self, max_len: usize) {
        self.token_ids.truncate(max_len.max(1));
        self.attention_mask.truncate(max_len.max(1));
    }
}

/// Tokenizes with the built-in stopword list when `remove_stopwords` is set.
pub fn tokenize(text: &str, remove_stopwords: bool, vocab: &Vocab) -> TokenizedInput {
    if remove_stopwords {
        tokenize_with(text, Some(&Stopwords::builtin()), vocab)
    } else {
        tokenize_with(text, None, vocab)
    }
}

/// `[CLS]` followed by the word ids of `text`. A text with no tokens left
/// becomes `[CLS] [UNK]`.
pub fn tokenize_with(text: &str, stopwords: Option<&Stopwords>, vocab: &Vocab) -> TokenizedInput {
    let mut token_ids = vec![Vocab::CLS_ID];
    token_ids.extend(
        words(text)
            .iter()
            .filter(|w| stopwords.is_none_or(|s| !s.contains(w)))
            .map(|w| vocab.id(w)),
    );
    if token_ids.len() == 1 {
        log::warn!("text {text:?} is empty after preprocessing; using [CLS] [UNK]");
        token_ids.push(Vocab::UNK_ID);
    }
    let attention_mask = vec![1; token_ids.len()];
    TokenizedInput {
        token_ids,
        attention_mask,
        cls_index: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocab {
        Vocab::build(["hello world", "the cat sat", "cat"], 1)
    }

    #[test]
    fn word_splitting() {
        assert_eq!(words("Hello, World!"), ["hello", ",", "world", "!"]);
        assert_eq!(words("don't  stop"), ["don't", "stop"]);
        assert!(words("   ").is_empty());
    }

    #[test]
    fn vocab_orders_by_frequency_then_lexically() {
        let v = vocab();
        assert_eq!(&v.tokens()[..4], &[PAD, CLS, UNK, "cat"]);
        assert_eq!(v.id("never-seen"), Vocab::UNK_ID);
    }

    #[test]
    fn cls_prefix() {
        let v = vocab();
        let t = tokenize("hello world", false, &v);
        assert_eq!(t.token_ids[0], Vocab::CLS_ID);
        assert_eq!(t.cls_index, 0);
        assert!(t.len() >= 3);
        assert_eq!(t.attention_mask, [1, 1, 1]);
    }

    #[test]
    fn empty_text_becomes_cls_unk() {
        let t = tokenize("", false, &vocab());
        assert_eq!(t.token_ids, [Vocab::CLS_ID, Vocab::UNK_ID]);
    }

    #[test]
    fn stopword_removal() {
        let v = vocab();
        let t = tokenize("the cat", true, &v);
        assert_eq!(t.token_ids, [Vocab::CLS_ID, v.id("cat")]);
        let kept = tokenize("the cat", false, &v);
        assert_eq!(kept.token_ids, [Vocab::CLS_ID, v.id("the"), v.id("cat")]);
        // only stopwords
        assert_eq!(tokenize("the", true, &v).token_ids, [Vocab::CLS_ID, Vocab::UNK_ID]);
    }

    #[test]
    fn builtin_stopwords_load() {
        let s = Stopwords::builtin();
        assert_eq!(s.len(), 179);
        assert!(s.contains("the"));
        assert!(!s.contains("cat"));
    }

    #[test]
    fn pad_and_truncate_keep_cls() {
        let mut t = tokenize("hello world", false, &vocab());
        t.pad_to(5);
        assert_eq!(t.attention_mask, [1, 1, 1, 0, 0]);
        assert_eq!(t.active_len(), 3);
        t.truncate(0);
        assert_eq!(t.token_ids, [Vocab::CLS_ID]);
    }
}
