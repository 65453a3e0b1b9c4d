//! Character-level English → Bengali translation of English segments.

use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::neural::{
    EmbeddingMode, LossKind, ModelContainer, Optimizer, Seq2Seq, Seq2SeqShape, TrainConfig,
    TrainReport,
};
use crate::text::SentencePair;
use crate::transduce::{self, TransduceAccuracy};

pub const MODEL_KIND: &str = "mt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MtTrainSpec {
    pub hidden: usize,
    pub layers: usize,
    pub attention: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Pairs with either side longer than this many characters are skipped.
    pub max_chars: usize,
    /// Lowercase English sources at training and translation time.
    pub lowercase_source: bool,
    pub clip_norm: Option<f64>,
    pub stop_at_exact_match: Option<f64>,
    pub eval_every: usize,
}

impl Default for MtTrainSpec {
    fn default() -> Self {
        MtTrainSpec {
            hidden: 128,
            layers: 1,
            attention: true,
            batch_size: 64,
            epochs: 100,
            optimizer: Optimizer::rmsprop(0.001),
            seed: 0,
            max_chars: 200,
            lowercase_source: true,
            clip_norm: None,
            stop_at_exact_match: None,
            eval_every: 10,
        }
    }
}

impl MtTrainSpec {
    pub fn shape(&self) -> Seq2SeqShape {
        Seq2SeqShape {
            hidden: self.hidden,
            layers: self.layers,
            attention: self.attention,
            embedding: EmbeddingMode::OneHot,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            loss: LossKind::CategoricalCE,
            seed: self.seed,
            shuffle: true,
            clip_norm: self.clip_norm,
            target_loss: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtModel {
    pub net: Seq2Seq,
    pub lowercase_source: bool,
}

pub fn max_decode_len(text: &str) -> usize {
    3 * text.chars().count() + 10
}

/// A translated segment. `empty` marks a decode that produced nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtOutput {
    pub text: String,
    pub empty: bool,
}

fn prepare_source(text: &str, lowercase: bool) -> String {
    let text: String = text.trim().nfc().collect();
    if lowercase {
        text.to_lowercase()
    } else {
        text
    }
}

impl MtModel {
    fn prepare(&self, text: &str) -> String {
        prepare_source(text, self.lowercase_source)
    }

    pub fn accuracy(&self, pairs: &[SentencePair]) -> Result<TransduceAccuracy> {
        let pairs: Vec<(String, String)> = pairs
            .iter()
            .map(|p| (self.prepare(&p.source), p.target.clone()))
            .collect();
        transduce::accuracy(&self.net, &pairs, max_decode_len)
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
        let model = ModelContainer::<MtModel>::load(path, MODEL_KIND)?.model;
        model.net.check()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtTraining {
    pub model: MtModel,
    pub report: TrainReport,
    pub accuracy: TransduceAccuracy,
    pub skipped: usize,
}

pub fn train_mt(pairs: &[SentencePair], spec: &MtTrainSpec) -> Result<MtTraining> {
    if pairs.is_empty() {
        return Err(Error::Data("no training pairs".into()));
    }
    let mut kept = Vec::with_capacity(pairs.len());
    let mut skipped = 0usize;
    for p in pairs {
        let src = prepare_source(&p.source, spec.lowercase_source);
        if src.chars().count() > spec.max_chars || p.target.chars().count() > spec.max_chars {
            skipped += 1;
            continue;
        }
        kept.push((src, p.target.clone()));
    }
    if skipped > 0 {
        log::warn!(
            "skipped {skipped} pairs longer than {} characters",
            spec.max_chars
        );
    }
    if kept.is_empty() {
        return Err(Error::Data(
            "every training pair exceeds the length limit".into(),
        ));
    }
    let (net, report) = transduce::fit(
        &kept,
        spec.shape(),
        &spec.train_config(),
        spec.stop_at_exact_match,
        spec.eval_every,
        max_decode_len,
    )?;
    let accuracy = transduce::accuracy(&net, &kept, max_decode_len)?;
    Ok(MtTraining {
        model: MtModel {
            net,
            lowercase_source: spec.lowercase_source,
        },
        report,
        accuracy,
        skipped,
    })
}

/// Greedy translation of one English segment.
pub fn translate_segment(model: &MtModel, text: &str) -> Result<MtOutput> {
    let src = model.prepare(text);
    if src.is_empty() {
        return Err(Error::EmptyInput("segment text"));
    }
    let out = transduce::decode(&model.net, &src, max_decode_len(&src))?;
    Ok(MtOutput {
        empty: out.is_empty(),
        text: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<SentencePair> {
        vec![
            SentencePair::new("Boring", "বিরক্তিকর").unwrap(),
            SentencePair::new("movie", "সিনেমা").unwrap(),
        ]
    }

    fn tiny() -> MtTrainSpec {
        MtTrainSpec {
            hidden: 6,
            epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn long_pairs_skipped_and_counted() {
        let mut data = pairs();
        data.push(SentencePair::new(&"a".repeat(500), "x").unwrap());
        let t = train_mt(&data, &tiny()).unwrap();
        assert_eq!(t.skipped, 1);
        let only_long = vec![SentencePair::new(&"a".repeat(500), "x").unwrap()];
        assert!(matches!(train_mt(&only_long, &tiny()), Err(Error::Data(_))));
    }

    #[test]
    fn translation_is_bounded_and_deterministic() {
        let model = train_mt(&pairs(), &tiny()).unwrap().model;
        let a = translate_segment(&model, "boring movie").unwrap();
        let b = translate_segment(&model, "boring movie").unwrap();
        assert_eq!(a, b);
        assert!(a.text.chars().count() <= max_decode_len("boring movie"));
        assert!(translate_segment(&model, " ").is_err());
    }

    #[test]
    fn zero_value_projection_matches_attention_free() {
        let mut model = train_mt(&pairs(), &tiny()).unwrap().model;
        model.net.attention.as_mut().unwrap().value.fill(0.0);
        let plain = MtModel {
            net: model.net.without_attention(),
            lowercase_source: true,
        };
        for s in ["boring", "movie", "xyz"] {
            assert_eq!(
                translate_segment(&model, s).unwrap(),
                translate_segment(&plain, s).unwrap()
            );
        }
    }
}
