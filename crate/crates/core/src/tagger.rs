//! Word-level Bengali/English language identification and segmentation.
//!
//! Each word is read character by character through a learned 15-dim
//! embedding and two stacked LSTM layers (35, then 25 units); a single
//! sigmoid unit gives the probability that the word is Bengali.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    train_with, EpochControl, LabeledSequence, LossKind, ModelContainer, Optimizer,
    SequenceClassifier, TrainConfig, TrainReport,
};
use crate::text::{CharVocab, LangTag, Segment, TaggedToken, Token};

pub const MODEL_KIND: &str = "tagger";
pub const EMBED_DIM: usize = 15;
pub const HIDDEN_DIMS: [usize; 2] = [35, 25];

/// Lowercases and collapses every digit to `0`.
pub fn normalize_word(word: &str) -> String {
    word.chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_numeric() { '0' } else { c })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerTrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub threshold: f64,
    /// Stop early once training accuracy reaches this fraction (checked
    /// every `eval_every` epochs).
    pub stop_at_accuracy: Option<f64>,
    pub eval_every: usize,
}

impl Default for TaggerTrainSpec {
    fn default() -> Self {
        TaggerTrainSpec {
            epochs: 500,
            batch_size: 256,
            learning_rate: 0.001,
            seed: 0,
            threshold: 0.5,
            stop_at_accuracy: None,
            eval_every: 10,
        }
    }
}

impl TaggerTrainSpec {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: Optimizer::adam(self.learning_rate),
            loss: LossKind::BinaryCE,
            seed: self.seed,
            shuffle: true,
            clip_norm: None,
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerModel {
    pub vocab: CharVocab,
    pub net: SequenceClassifier,
    pub threshold: f64,
}

/// Anything that can assign a language tag to a single word.
pub trait WordTagger {
    fn tag_word(&self, word: &Token) -> Result<TaggedToken>;
}

impl TaggerModel {
    pub fn new(vocab: CharVocab, seed: u64, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {threshold}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [EMBED_DIM, HIDDEN_DIMS[0], HIDDEN_DIMS[1]];
        let net = SequenceClassifier::new(vocab.len(), &dims, &mut rng)?;
        Ok(TaggerModel {
            vocab,
            net,
            threshold,
        })
    }

    fn encode(&self, word: &str) -> Vec<usize> {
        self.vocab.encode(&normalize_word(word))
    }

    /// Probability that `word` is Bengali.
    pub fn score(&self, word: &str) -> Result<f64> {
        self.net.predict(&self.encode(word))
    }

    pub fn tag_for_score(&self, score: f64) -> LangTag {
        if score >= self.threshold {
            LangTag::Bn
        } else {
            LangTag::En
        }
    }

    pub fn accuracy(&self, words: &[(String, LangTag)]) -> Result<f64> {
        if words.is_empty() {
            return Err(Error::EmptyInput("words"));
        }
        let mut correct = 0usize;
        for (w, tag) in words {
            if self.tag_for_score(self.score(w)?) == *tag {
                correct += 1;
            }
        }
        Ok(correct as f64 / words.len() as f64)
    }

    pub fn save(
        &self,
        path: impl AsRef<Path>,
        seed: u64,
        config: Option<TrainConfig>,
    ) -> Result<()> {
        ModelContainer::new(MODEL_KIND, seed, config, self.clone()).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model = ModelContainer::<TaggerModel>::load(path, MODEL_KIND)?.model;
        model.net.check()?;
        if model.net.vocab_size() != model.vocab.len() {
            return Err(Error::Persist(
                "tagger vocabulary does not match embedding".into(),
            ));
        }
        Ok(model)
    }
}

impl WordTagger for TaggerModel {
    fn tag_word(&self, word: &Token) -> Result<TaggedToken> {
        if word.is_punct() {
            return Err(Error::Kind(format!(
                "cannot tag punctuation {:?}",
                word.surface
            )));
        }
        let score = self.score(&word.surface)?;
        Ok(TaggedToken::new(
            word.clone(),
            self.tag_for_score(score),
            score,
        ))
    }
}

/// Tags words from a fixed word list; used for gold-tag experiments.
#[derive(Debug, Clone, Default)]
pub struct GoldTagger {
    tags: HashMap<String, LangTag>,
}

impl GoldTagger {
    pub fn new<S: AsRef<str>>(words: impl IntoIterator<Item = (S, LangTag)>) -> Self {
        GoldTagger {
            tags: words
                .into_iter()
                .map(|(w, t)| (normalize_word(w.as_ref()), t))
                .collect(),
        }
    }

    /// Reads a sentence annotated as `(words)En (words)Bn ...`.
    pub fn from_bracketed(annotated: &str) -> Result<(Self, Vec<String>)> {
        let mut words = Vec::new();
        let mut pairs = Vec::new();
        let mut rest = annotated.trim();
        while let Some(open) = rest.find('(') {
            let close = rest[open..]
                .find(')')
                .map(|c| open + c)
                .ok_or_else(|| Error::Data("unbalanced bracket".into()))?;
            let inner = &rest[open + 1..close];
            let tag_str: String = rest[close + 1..]
                .chars()
                .take_while(|c| c.is_ascii_alphabetic())
                .collect();
            let tag: LangTag = tag_str.parse().map_err(Error::Data)?;
            for w in inner.split_whitespace() {
                words.push(w.to_string());
                pairs.push((w.to_string(), tag));
            }
            rest = &rest[close + 1 + tag_str.len()..];
        }
        if words.is_empty() {
            return Err(Error::EmptyInput("annotated sentence"));
        }
        Ok((GoldTagger::new(pairs), words))
    }
}

impl WordTagger for GoldTagger {
    fn tag_word(&self, word: &Token) -> Result<TaggedToken> {
        if word.is_punct() {
            return Err(Error::Kind(format!(
                "cannot tag punctuation {:?}",
                word.surface
            )));
        }
        let tag = *self
            .tags
            .get(&normalize_word(&word.surface))
            .ok_or_else(|| Error::Data(format!("no gold tag for {:?}", word.surface)))?;
        let score = match tag {
            LangTag::Bn => 1.0,
            LangTag::En => 0.0,
        };
        Ok(TaggedToken::new(word.clone(), tag, score))
    }
}

/// Collapses duplicate words to one label by majority vote; ties are
/// dropped.
fn dedup_words(words: &[(String, LangTag)]) -> (Vec<(String, LangTag)>, usize) {
    let mut votes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut order = Vec::new();
    for (w, tag) in words {
        let key = normalize_word(w);
        if key.is_empty() {
            continue;
        }
        let entry = votes.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            (0, 0)
        });
        match tag {
            LangTag::Bn => entry.0 += 1,
            LangTag::En => entry.1 += 1,
        }
    }
    let mut out = Vec::with_capacity(order.len());
    let mut dropped = 0;
    for key in order {
        let (bn, en) = votes[&key];
        if bn == en {
            log::warn!("dropping {key:?}: {bn} Bn vs {en} En labels");
            dropped += 1;
            continue;
        }
        if bn > 0 && en > 0 {
            log::warn!("conflicting labels for {key:?}: {bn} Bn vs {en} En, keeping majority");
        }
        out.push((key, if bn > en { LangTag::Bn } else { LangTag::En }));
    }
    (out, dropped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerTraining {
    pub model: TaggerModel,
    pub report: TrainReport,
    pub train_accuracy: f64,
    pub dropped_words: usize,
    pub words_used: usize,
}

/// Trains the tagger with Bn labelled 1 and En labelled 0.
pub fn train_tagger(words: &[(String, LangTag)], spec: &TaggerTrainSpec) -> Result<TaggerTraining> {
    let (words, dropped) = dedup_words(words);
    if words.is_empty() {
        return Err(Error::Data("no usable training words".into()));
    }
    for tag in [LangTag::Bn, LangTag::En] {
        if !words.iter().any(|(_, t)| *t == tag) {
            return Err(Error::Data(format!("no {tag} words in training data")));
        }
    }
    let vocab = CharVocab::from_chars(words.iter().flat_map(|(w, _)| w.chars()));
    let mut model = TaggerModel::new(vocab, spec.seed, spec.threshold)?;
    let examples: Vec<LabeledSequence> = words
        .iter()
        .map(|(w, tag)| LabeledSequence {
            chars: model.encode(w),
            label: if *tag == LangTag::Bn { 1.0 } else { 0.0 },
        })
        .collect();

    let config = spec.train_config();
    let vocab = model.vocab.clone();
    let threshold = model.threshold;
    let eval_every = spec.eval_every.max(1);
    let report = train_with(&mut model.net, &examples, &config, |epoch, _, net| {
        let Some(target) = spec.stop_at_accuracy else {
            return EpochControl::Continue;
        };
        if (epoch + 1) % eval_every != 0 {
            return EpochControl::Continue;
        }
        let probe = TaggerModel {
            vocab: vocab.clone(),
            net: net.clone(),
            threshold,
        };
        match probe.accuracy(&words) {
            Ok(acc) if acc >= target => EpochControl::Stop,
            _ => EpochControl::Continue,
        }
    })?;
    let train_accuracy = model.accuracy(&words)?;
    Ok(TaggerTraining {
        model,
        report,
        train_accuracy,
        dropped_words: dropped,
        words_used: words.len(),
    })
}

/// Tags every word; punctuation takes the tag of the preceding word, or of
/// the following word at the start of a sentence.
pub fn tag_sentence<T: WordTagger + ?Sized>(
    tagger: &T,
    tokens: &[Token],
) -> Result<Vec<TaggedToken>> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token list"));
    }
    let mut tagged: Vec<Option<TaggedToken>> = tokens
        .iter()
        .map(|t| {
            if t.is_punct() {
                Ok(None)
            } else {
                tagger.tag_word(t).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let first_word = tagged
        .iter()
        .flatten()
        .next()
        .map(|t| (t.tag, t.score))
        .ok_or_else(|| Error::Data("sentence contains no words".into()))?;
    let mut last = first_word;
    for (slot, tok) in tagged.iter_mut().zip(tokens) {
        match slot {
            Some(t) => last = (t.tag, t.score),
            None => *slot = Some(TaggedToken::new(tok.clone(), last.0, last.1)),
        }
    }
    Ok(tagged.into_iter().map(|t| t.expect("filled")).collect())
}

/// Groups tagged tokens into maximal same-tag runs.
pub fn segment(tagged: &[TaggedToken]) -> Result<Vec<Segment>> {
    if tagged.is_empty() {
        return Err(Error::EmptyInput("tagged tokens"));
    }
    let mut segments: Vec<Segment> = Vec::new();
    for t in tagged {
        match segments.last_mut() {
            Some(seg) if seg.tag == t.tag => seg.tokens.push(t.clone()),
            _ => segments.push(Segment {
                tag: t.tag,
                tokens: vec![t.clone()],
            }),
        }
    }
    Ok(segments)
}
