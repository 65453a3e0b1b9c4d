//! Tokens, language tags, segments, character vocabularies and the TSV
//! loaders shared by every stage of the pipeline.
//!
//! All text entering the toolkit is NFC-normalized. Punctuation is split off
//! words into separate [`TokenKind::Punct`] tokens so that the language tagger
//! only ever sees words.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LangTag {
    Bn,
    En,
}

impl LangTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LangTag::Bn => "bn",
            LangTag::En => "en",
        }
    }
}

impl fmt::Display for LangTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LangTag::Bn => "Bn",
            LangTag::En => "En",
        })
    }
}

impl std::str::FromStr for LangTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "bn" => Ok(LangTag::Bn),
            "en" => Ok(LangTag::En),
            other => Err(format!("unknown language tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Word,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    /// Builds a token, classifying it as punctuation when no character is a
    /// word character.
    pub fn new(surface: impl Into<String>) -> Self {
        let surface: String = surface.into().nfc().collect();
        let kind = if surface.chars().all(is_punct_char) {
            TokenKind::Punct
        } else {
            TokenKind::Word
        };
        Token { surface, kind }
    }

    pub fn word(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into().nfc().collect(),
            kind: TokenKind::Word,
        }
    }

    pub fn punct(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into().nfc().collect(),
            kind: TokenKind::Punct,
        }
    }

    pub fn is_punct(&self) -> bool {
        self.kind == TokenKind::Punct
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedToken {
    pub token: Token,
    pub tag: LangTag,
    pub score: f64,
}

impl TaggedToken {
    pub fn new(token: Token, tag: LangTag, score: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&score));
        TaggedToken {
            token,
            tag,
            score: score.clamp(0.0, 1.0),
        }
    }
}

/// A maximal run of consecutive tokens carrying the same language tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tag: LangTag,
    pub tokens: Vec<TaggedToken>,
}

impl Segment {
    pub fn new(tokens: Vec<TaggedToken>) -> Result<Self> {
        let tag = tokens.first().ok_or(Error::EmptyInput("segment"))?.tag;
        if tokens.iter().any(|t| t.tag != tag) {
            return Err(Error::Data("segment tokens carry mixed tags".into()));
        }
        Ok(Segment { tag, tokens })
    }

    pub fn text(&self) -> String {
        let toks: Vec<Token> = self.tokens.iter().map(|t| t.token.clone()).collect();
        detokenize(&toks).unwrap_or_default()
    }
}

/// Word characters are letters, digits, combining marks and the Indic blocks
/// (whose vowel signs and viramas are not all alphabetic in Unicode terms).
fn is_word_char(c: char) -> bool {
    if c.is_alphanumeric() {
        return true;
    }
    matches!(c as u32,
        0x0300..=0x036F
        | 0x0900..=0x0963
        | 0x0966..=0x0DFF
        | 0x200C..=0x200D)
}

fn is_punct_char(c: char) -> bool {
    !c.is_whitespace() && !is_word_char(c)
}

/// Splits text on whitespace and detaches leading and trailing punctuation
/// runs from each chunk.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let normalized: String = text.nfc().collect();
    let mut out = Vec::new();
    for chunk in normalized.split_whitespace() {
        let start = chunk.find(|c: char| !is_punct_char(c));
        let Some(start) = start else {
            out.push(Token::punct(chunk));
            continue;
        };
        let end = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct_char(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        if start > 0 {
            out.push(Token::punct(&chunk[..start]));
        }
        out.push(Token::word(&chunk[start..end]));
        if end < chunk.len() {
            out.push(Token::punct(&chunk[end..]));
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("text"));
    }
    Ok(out)
}

/// Joins words with single spaces; punctuation attaches to the preceding
/// token.
pub fn detokenize(tokens: &[Token]) -> Result<String> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token list"));
    }
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && !tok.is_punct() {
            out.push(' ');
        }
        out.push_str(&tok.surface);
    }
    Ok(out)
}

/// Character vocabulary with four reserved symbols at the front.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub const PAD: usize = 0;
    pub const SOS: usize = 1;
    pub const EOS: usize = 2;
    pub const UNK: usize = 3;
    pub const N_SPECIALS: usize = 4;

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        CharVocab {
            chars: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.chars.len() + Self::N_SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> usize {
        match self.chars.binary_search(&c) {
            Ok(i) => i + Self::N_SPECIALS,
            Err(_) => Self::UNK,
        }
    }

    pub fn char_of(&self, index: usize) -> Option<char> {
        index
            .checked_sub(Self::N_SPECIALS)
            .and_then(|i| self.chars.get(i).copied())
    }

    pub fn is_special(index: usize) -> bool {
        index < Self::N_SPECIALS
    }

    pub fn encode(&self, s: &str) -> Vec<usize> {
        s.chars().map(|c| self.index_of(c)).collect()
    }

    /// Decodes indices back to text, dropping the reserved symbols.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices.iter().filter_map(|&i| self.char_of(i)).collect()
    }

    pub fn check(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::Vocab {
                index,
                size: self.len(),
            })
        }
    }
}

pub fn build_char_vocab<S: AsRef<str>>(corpus: &[S]) -> Result<CharVocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    Ok(CharVocab::from_chars(
        corpus
            .iter()
            .flat_map(|s| s.as_ref().nfc().collect::<Vec<_>>()),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
}

impl SentencePair {
    pub fn new(source: &str, target: &str) -> Result<Self> {
        let source: String = source.trim().nfc().collect();
        let target: String = target.trim().nfc().collect();
        if source.is_empty() || target.is_empty() {
            return Err(Error::EmptyInput("sentence pair side"));
        }
        Ok(SentencePair { source, target })
    }
}

/// Writes `contents`, creating missing parent directories.
pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = raw.strip_prefix('\u{feff}').unwrap_or(&raw);
    Ok(raw
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect())
}

/// Reads a headerless two-column TSV file. Every non-blank line must contain
/// exactly one TAB with non-empty fields on both sides.
pub fn read_tsv_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let lines = read_lines(path)?;
    if lines.is_empty() {
        log::warn!("{}: file is empty", path.display());
    }
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, lineno, "missing TAB separator"))?;
        if b.contains('\t') {
            return Err(Error::format(path, lineno, "more than one TAB"));
        }
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            return Err(Error::format(path, lineno, "empty field"));
        }
        out.push((a.nfc().collect(), b.nfc().collect()));
    }
    Ok(out)
}

pub fn load_parallel_corpus(path: impl AsRef<Path>) -> Result<Vec<SentencePair>> {
    read_tsv_pairs(path.as_ref())?
        .into_iter()
        .map(|(s, t)| SentencePair::new(&s, &t))
        .collect()
}

pub fn load_tagged_words(path: impl AsRef<Path>) -> Result<Vec<(String, LangTag)>> {
    let path = path.as_ref();
    let lines = read_lines(path)?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, tag) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, i + 1, "missing TAB separator"))?;
        let tag: LangTag = tag
            .parse()
            .map_err(|m: String| Error::format(path, i + 1, m))?;
        let word = word.trim();
        if word.is_empty() {
            return Err(Error::format(path, i + 1, "empty word"));
        }
        out.push((word.nfc().collect(), tag));
    }
    if out.is_empty() {
        log::warn!("{}: file is empty", path.display());
    }
    Ok(out)
}
