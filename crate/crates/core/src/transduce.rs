//! String-to-string training and decoding shared by the transliteration and
//! translation models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::matrix::argmax;
use crate::neural::{
    train_with, EpochControl, Seq2Seq, Seq2SeqExample, Seq2SeqShape, TrainConfig, TrainReport,
};
use crate::text::CharVocab;

/// Training-set accuracy of a string transducer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransduceAccuracy {
    /// Fraction of sources whose greedy decode equals the target exactly.
    pub sequence: f64,
    /// Fraction of teacher-forced output positions (EOS included) whose
    /// argmax equals the label.
    pub per_char: f64,
}

pub(crate) fn decode(net: &Seq2Seq, source: &str, max_len: usize) -> Result<String> {
    if source.is_empty() {
        return Err(Error::EmptyInput("source text"));
    }
    let ids = net.src_vocab.encode(source);
    let out = net.greedy_decode(&ids, max_len)?;
    Ok(net.tgt_vocab.decode(&out))
}

pub(crate) fn exact_match(
    net: &Seq2Seq,
    pairs: &[(String, String)],
    max_len: impl Fn(&str) -> usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairs"));
    }
    let mut hits = 0usize;
    for (s, t) in pairs {
        if decode(net, s, max_len(s))? == *t {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

pub(crate) fn accuracy(
    net: &Seq2Seq,
    pairs: &[(String, String)],
    max_len: impl Fn(&str) -> usize,
) -> Result<TransduceAccuracy> {
    let sequence = exact_match(net, pairs, &max_len)?;
    let mut right = 0usize;
    let mut total = 0usize;
    for (s, t) in pairs {
        let target = net.tgt_vocab.encode(t);
        let probs = net.forward_probs(&net.src_vocab.encode(s), &target)?;
        let labels = target.iter().copied().chain([CharVocab::EOS]);
        for (p, label) in probs.iter().zip(labels) {
            total += 1;
            if argmax(p) == label {
                right += 1;
            }
        }
    }
    Ok(TransduceAccuracy {
        sequence,
        per_char: right as f64 / total.max(1) as f64,
    })
}

/// Builds vocabularies from `pairs`, initializes a model from `seed` and
/// trains it. With `stop_at` set, training ends early once exact match on
/// the training pairs reaches that fraction (checked every `eval_every`
/// epochs).
pub(crate) fn fit(
    pairs: &[(String, String)],
    shape: Seq2SeqShape,
    config: &TrainConfig,
    stop_at: Option<f64>,
    eval_every: usize,
    max_len: impl Fn(&str) -> usize,
) -> Result<(Seq2Seq, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let src_vocab = CharVocab::from_chars(pairs.iter().flat_map(|(s, _)| s.chars()));
    let tgt_vocab = CharVocab::from_chars(pairs.iter().flat_map(|(_, t)| t.chars()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = Seq2Seq::new(src_vocab, tgt_vocab, shape, &mut rng)?;
    let examples: Vec<Seq2SeqExample> = pairs
        .iter()
        .map(|(s, t)| Seq2SeqExample::new(net.src_vocab.encode(s), &net.tgt_vocab.encode(t)))
        .collect();
    let eval_every = eval_every.max(1);
    let report = train_with(&mut net, &examples, config, |epoch, _, net| {
        let Some(target) = stop_at else {
            return EpochControl::Continue;
        };
        if (epoch + 1) % eval_every != 0 {
            return EpochControl::Continue;
        }
        match exact_match(net, pairs, &max_len) {
            Ok(acc) if acc >= target => EpochControl::Stop,
            _ => EpochControl::Continue,
        }
    })?;
    Ok((net, report))
}
