//! Add-k smoothed n-gram language model and local token reordering by
//! window permutation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Token;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const LM_FORMAT_VERSION: u32 = 1;
const MAX_ORDER: usize = 3;

/// Unigram, bigram and trigram counts over sentences padded as
/// `<s> <s> w1 .. wn </s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramLM {
    k: f64,
    vocab_size: usize,
    /// `counts[n - 1]` holds the n-gram counts.
    counts: [HashMap<Vec<String>, u64>; MAX_ORDER],
    /// `context_counts[n - 1]` holds, for each (n-1)-token context, the
    /// number of n-grams starting with it.
    context_counts: [HashMap<Vec<String>, u64>; MAX_ORDER],
}

fn pad<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() + 3);
    out.push(BOS.to_string());
    out.push(BOS.to_string());
    out.extend(tokens.iter().map(|t| t.as_ref().to_string()));
    out.push(EOS.to_string());
    out
}

pub fn build_lm<S: AsRef<str>>(sentences: &[Vec<S>], k: f64) -> Result<NgramLM> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing constant must be positive, got {k}"
        )));
    }
    let sentences: Vec<&Vec<S>> = sentences.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::Data("language model corpus is empty".into()));
    }
    let mut counts: [HashMap<Vec<String>, u64>; MAX_ORDER] = Default::default();
    let mut context_counts: [HashMap<Vec<String>, u64>; MAX_ORDER] = Default::default();
    let mut content = std::collections::HashSet::new();
    for s in sentences {
        for t in s.iter() {
            content.insert(t.as_ref().to_string());
        }
        let padded = pad(s);
        for n in 1..=MAX_ORDER {
            for gram in padded.windows(n) {
                *counts[n - 1].entry(gram.to_vec()).or_insert(0) += 1;
                *context_counts[n - 1]
                    .entry(gram[..n - 1].to_vec())
                    .or_insert(0) += 1;
            }
        }
    }
    Ok(NgramLM {
        k,
        vocab_size: content.len() + 2,
        counts,
        context_counts,
    })
}

impl NgramLM {
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn count<S: AsRef<str>>(&self, gram: &[S]) -> u64 {
        if gram.is_empty() || gram.len() > MAX_ORDER {
            return 0;
        }
        let key: Vec<String> = gram.iter().map(|s| s.as_ref().to_string()).collect();
        self.counts[gram.len() - 1].get(&key).copied().unwrap_or(0)
    }

    fn context_count(&self, context: &[String]) -> u64 {
        self.context_counts[context.len()]
            .get(context)
            .copied()
            .unwrap_or(0)
    }

    /// `ln((c(context, token) + k) / (c(context) + k V))`, where `c(context)`
    /// counts the n-grams that start with `context`.
    pub fn ngram_logprob<S: AsRef<str>>(&self, context: &[S], token: &str) -> Result<f64> {
        if context.len() >= MAX_ORDER {
            return Err(Error::Config(format!(
                "context of {} tokens exceeds the model order",
                context.len()
            )));
        }
        let mut gram: Vec<String> = context.iter().map(|s| s.as_ref().to_string()).collect();
        let ctx = self.context_count(&gram);
        gram.push(token.to_string());
        let c = self.counts[gram.len() - 1].get(&gram).copied().unwrap_or(0);
        Ok(((c as f64 + self.k) / (ctx as f64 + self.k * self.vocab_size as f64)).ln())
    }

    /// Mean n-gram log probability over every position after the `<s>`
    /// padding, `</s>` included.
    pub fn sentence_score<S: AsRef<str>>(&self, tokens: &[S], order: usize) -> Result<f64> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("tokens"));
        }
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(Error::Config(format!(
                "sentence order must be 2 or 3, got {order}"
            )));
        }
        let padded = pad(tokens);
        let mut total = 0.0;
        let mut n = 0usize;
        for i in 2..padded.len() {
            total += self.ngram_logprob(&padded[i + 1 - order..i], &padded[i])?;
            n += 1;
        }
        Ok(total / n as f64)
    }

    pub fn to_file(&self) -> LmFile {
        let table = |m: &HashMap<Vec<String>, u64>| -> Vec<(Vec<String>, u64)> {
            let sorted: BTreeMap<&Vec<String>, u64> = m.iter().map(|(k, v)| (k, *v)).collect();
            sorted.into_iter().map(|(k, v)| (k.clone(), v)).collect()
        };
        LmFile {
            format_version: LM_FORMAT_VERSION,
            k: self.k,
            vocab_size: self.vocab_size,
            unigrams: table(&self.counts[0]),
            bigrams: table(&self.counts[1]),
            trigrams: table(&self.counts[2]),
        }
    }

    pub fn from_file(file: LmFile) -> Result<Self> {
        if file.format_version != LM_FORMAT_VERSION {
            return Err(Error::Persist(format!(
                "unsupported LM format_version {}",
                file.format_version
            )));
        }
        if !(file.k > 0.0 && file.k.is_finite()) || file.vocab_size < 2 {
            return Err(Error::Persist("invalid LM header".into()));
        }
        let mut counts: [HashMap<Vec<String>, u64>; MAX_ORDER] = Default::default();
        let mut context_counts: [HashMap<Vec<String>, u64>; MAX_ORDER] = Default::default();
        for (n, table) in [file.unigrams, file.bigrams, file.trigrams]
            .into_iter()
            .enumerate()
        {
            for (gram, c) in table {
                if gram.len() != n + 1 {
                    return Err(Error::Persist(format!(
                        "{}-gram table holds {gram:?}",
                        n + 1
                    )));
                }
                *context_counts[n].entry(gram[..n].to_vec()).or_insert(0) += c;
                counts[n].insert(gram, c);
            }
        }
        for gram in counts[1].keys() {
            if !counts[0].contains_key(&gram[..1]) {
                return Err(Error::Persist(format!(
                    "bigram {gram:?} has no unigram prefix"
                )));
            }
        }
        Ok(NgramLM {
            k: file.k,
            vocab_size: file.vocab_size,
            counts,
            context_counts,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s =
            serde_json::to_string(&self.to_file()).map_err(|e| Error::Persist(e.to_string()))?;
        s.push('\n');
        crate::text::write_file(path, s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LmFile = serde_json::from_str(&raw).map_err(|e| Error::Persist(e.to_string()))?;
        Self::from_file(file)
    }
}

/// On-disk form of [`NgramLM`], with count tables sorted by n-gram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmFile {
    pub format_version: u32,
    pub k: f64,
    pub vocab_size: usize,
    pub unigrams: Vec<(Vec<String>, u64)>,
    pub bigrams: Vec<(Vec<String>, u64)>,
    pub trigrams: Vec<(Vec<String>, u64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderConfig {
    pub max_passes: usize,
    pub enable_bigram_fallback: bool,
}

impl Default for ReorderConfig {
    fn default() -> Self {
        ReorderConfig {
            max_passes: 1,
            enable_bigram_fallback: true,
        }
    }
}

/// Distinct non-identity permutations of a 2- or 3-token window, sorted.
/// Windows holding punctuation give an empty set.
pub fn confusion_set(window: &[Token]) -> Vec<Vec<Token>> {
    if !(2..=3).contains(&window.len()) || window.iter().any(Token::is_punct) {
        return Vec::new();
    }
    let perms: &[&[usize]] = if window.len() == 2 {
        &[&[1, 0]]
    } else {
        &[&[0, 2, 1], &[1, 0, 2], &[1, 2, 0], &[2, 0, 1], &[2, 1, 0]]
    };
    let mut out: Vec<Vec<Token>> = perms
        .iter()
        .map(|p| p.iter().map(|&i| window[i].clone()).collect::<Vec<Token>>())
        .filter(|cand| cand.as_slice() != window)
        .collect();
    out.sort_by(|a, b| surfaces(a).cmp(&surfaces(b)));
    out.dedup();
    out
}

fn surfaces(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.surface.as_str()).collect()
}

/// What [`reorder_traced`] changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReorderStats {
    pub trigram_substitutions: usize,
    pub bigram_substitutions: usize,
}

pub fn reorder(lm: &NgramLM, tokens: &[Token], config: &ReorderConfig) -> Result<Vec<Token>> {
    reorder_traced(lm, tokens, config).map(|(t, _)| t)
}

/// One left-to-right pass of width-`width` windows. A substitution is
/// applied when it strictly raises the order-`width` score without lowering
/// the order-3 score.
fn window_pass(lm: &NgramLM, tokens: &mut [Token], width: usize) -> Result<usize> {
    let mut applied = 0;
    let mut current = lm.sentence_score(&surfaces(tokens), width)?;
    let mut current3 = lm.sentence_score(&surfaces(tokens), 3)?;
    for i in 0..=tokens.len() - width {
        let mut best: Option<(f64, f64, Vec<Token>)> = None;
        for cand in confusion_set(&tokens[i..i + width]) {
            let mut trial = tokens.to_vec();
            trial[i..i + width].clone_from_slice(&cand);
            let s = lm.sentence_score(&surfaces(&trial), width)?;
            // candidates arrive sorted, so ">" keeps the smallest on ties
            if best.as_ref().is_none_or(|(b, _, _)| s > *b) {
                let s3 = if width == 3 {
                    s
                } else {
                    lm.sentence_score(&surfaces(&trial), 3)?
                };
                best = Some((s, s3, cand));
            }
        }
        if let Some((s, s3, cand)) = best {
            if s > current && s3 >= current3 {
                tokens[i..i + width].clone_from_slice(&cand);
                current = s;
                current3 = s3;
                applied += 1;
            }
        }
    }
    Ok(applied)
}

/// Trigram pass first; the bigram pass runs only when the trigram passes
/// changed nothing.
pub fn reorder_traced(
    lm: &NgramLM,
    tokens: &[Token],
    config: &ReorderConfig,
) -> Result<(Vec<Token>, ReorderStats)> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("tokens"));
    }
    if config.max_passes == 0 {
        return Err(Error::Config("max_passes must be at least 1".into()));
    }
    let mut out = tokens.to_vec();
    let mut stats = ReorderStats::default();
    for width in [3, 2] {
        if out.len() < width {
            continue;
        }
        if width == 2 && (stats.trigram_substitutions > 0 || !config.enable_bigram_fallback) {
            break;
        }
        for _ in 0..config.max_passes {
            let n = window_pass(lm, &mut out, width)?;
            if width == 3 {
                stats.trigram_substitutions += n;
            } else {
                stats.bigram_substitutions += n;
            }
            if n == 0 {
                break;
            }
        }
    }
    Ok((out, stats))
}
