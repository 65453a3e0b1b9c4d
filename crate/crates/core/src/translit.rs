//! Back-transliteration of Roman-script Bengali words into native script.
//!
//! A word is first looked up through two lexicons: PL maps the Roman
//! spelling to ITRANS, and BN_TRANS maps ITRANS to native script. Words the
//! chain cannot resolve go to a character-level encoder–decoder trained on
//! BN_TRANS.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::neural::{
    EmbeddingMode, LossKind, ModelContainer, Optimizer, Seq2Seq, Seq2SeqShape, TrainConfig,
    TrainReport,
};
use crate::text::{read_tsv_pairs, LangTag, Segment};
use crate::transduce::{self, TransduceAccuracy};

pub const MODEL_KIND: &str = "translit";

/// Lowercase + NFC, applied to lexicon keys and to queries.
pub fn normalize_key(s: &str) -> String {
    s.trim().to_lowercase().nfc().collect()
}

/// How an output word was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Lexicon,
    Model,
    /// Nothing usable was produced; the input was copied through.
    Echo,
    Translation,
    Passthrough,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Lexicon => "lexicon",
            Provenance::Model => "model",
            Provenance::Echo => "echo",
            Provenance::Translation => "translation",
            Provenance::Passthrough => "passthrough",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelLexicon {
    pub name: String,
    /// Free-form description such as `roman->itrans`.
    pub direction: String,
    entries: HashMap<String, String>,
}

impl ParallelLexicon {
    /// Builds a lexicon, keeping the first value for keys that collide after
    /// normalization.
    pub fn new<K: AsRef<str>, V: AsRef<str>>(
        name: &str,
        direction: &str,
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self> {
        let mut entries = HashMap::new();
        for (k, v) in pairs {
            let key = normalize_key(k.as_ref());
            let value: String = v.as_ref().trim().nfc().collect();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Data(format!("{name}: empty lexicon entry")));
            }
            if let Some(prev) = entries.get(&key) {
                if *prev != value {
                    log::warn!("{name}: key {key:?} already maps to {prev:?}, ignoring {value:?}");
                }
                continue;
            }
            entries.insert(key, value);
        }
        Ok(ParallelLexicon {
            name: name.to_string(),
            direction: direction.to_string(),
            entries,
        })
    }

    pub fn from_tsv(path: impl AsRef<Path>, name: &str, direction: &str) -> Result<Self> {
        Self::new(name, direction, read_tsv_pairs(path.as_ref())?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize_key(key)).map(String::as_str)
    }

    /// Entries sorted by key.
    pub fn sorted_entries(&self) -> Vec<(&str, &str)> {
        let mut out: Vec<(&str, &str)> = self
            .entries
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Roman word → ITRANS through `pl`, then ITRANS → native through
/// `bn_trans`. A miss at either stage gives `None`.
pub fn lexicon_lookup(
    word: &str,
    pl: &ParallelLexicon,
    bn_trans: &ParallelLexicon,
) -> Option<String> {
    let itrans = pl.get(word)?;
    match bn_trans.get(itrans) {
        Some(native) => Some(native.to_string()),
        None => {
            log::info!(
                "broken lexicon chain: {word:?} -> {itrans:?} found in {} but not in {}",
                pl.name,
                bn_trans.name
            );
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslitTrainSpec {
    pub hidden: usize,
    pub layers: usize,
    pub attention: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Stop once training exact match reaches this fraction.
    pub stop_at_exact_match: Option<f64>,
    pub eval_every: usize,
}

impl Default for TranslitTrainSpec {
    fn default() -> Self {
        TranslitTrainSpec {
            hidden: 128,
            layers: 1,
            attention: false,
            batch_size: 64,
            epochs: 100,
            optimizer: Optimizer::rmsprop(0.001),
            seed: 0,
            clip_norm: None,
            stop_at_exact_match: None,
            eval_every: 10,
        }
    }
}

impl TranslitTrainSpec {
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
pub struct TranslitModel {
    pub net: Seq2Seq,
}

pub fn max_decode_len(word: &str) -> usize {
    3 * word.chars().count() + 5
}

impl TranslitModel {
    /// Greedy decode of a normalized word.
    pub fn decode(&self, word: &str) -> Result<String> {
        let word = normalize_key(word);
        transduce::decode(&self.net, &word, max_decode_len(&word))
    }

    pub fn accuracy(&self, lexicon: &ParallelLexicon) -> Result<TransduceAccuracy> {
        transduce::accuracy(&self.net, &lexicon_pairs(lexicon), max_decode_len)
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
        let model = ModelContainer::<TranslitModel>::load(path, MODEL_KIND)?.model;
        model.net.check()?;
        Ok(model)
    }
}

fn lexicon_pairs(lexicon: &ParallelLexicon) -> Vec<(String, String)> {
    lexicon
        .sorted_entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslitTraining {
    pub model: TranslitModel,
    pub report: TrainReport,
    pub accuracy: TransduceAccuracy,
}

/// Trains source = BN_TRANS key (normalized) → target = native value, in
/// key order.
pub fn train_translit(
    bn_trans: &ParallelLexicon,
    spec: &TranslitTrainSpec,
) -> Result<TranslitTraining> {
    if bn_trans.is_empty() {
        return Err(Error::Data(format!("{} is empty", bn_trans.name)));
    }
    let pairs = lexicon_pairs(bn_trans);
    let (net, report) = transduce::fit(
        &pairs,
        spec.shape(),
        &spec.train_config(),
        spec.stop_at_exact_match,
        spec.eval_every,
        max_decode_len,
    )?;
    let model = TranslitModel { net };
    let accuracy = transduce::accuracy(&model.net, &pairs, max_decode_len)?;
    Ok(TranslitTraining {
        model,
        report,
        accuracy,
    })
}

/// One routed output word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutedWord {
    pub source: String,
    pub output: String,
    pub provenance: Provenance,
}

/// Lexicon chain first, model second; an empty or missing decode echoes the
/// input with [`Provenance::Echo`].
pub fn back_transliterate(
    word: &str,
    pl: &ParallelLexicon,
    bn_trans: &ParallelLexicon,
    model: Option<&TranslitModel>,
) -> Result<RoutedWord> {
    if normalize_key(word).is_empty() {
        return Err(Error::EmptyInput("word"));
    }
    let routed = |output: String, provenance| RoutedWord {
        source: word.to_string(),
        output,
        provenance,
    };
    if let Some(native) = lexicon_lookup(word, pl, bn_trans) {
        return Ok(routed(native, Provenance::Lexicon));
    }
    if let Some(model) = model {
        match model.decode(word) {
            Ok(out) if !out.is_empty() => return Ok(routed(out, Provenance::Model)),
            Ok(_) => log::debug!("empty decode for {word:?}, echoing"),
            Err(e) => log::warn!("decode failed for {word:?}: {e}"),
        }
    }
    Ok(routed(word.to_string(), Provenance::Echo))
}

/// Word-by-word back-transliteration of a Bengali segment. Punctuation is
/// passed through.
pub fn transliterate_segment(
    segment: &Segment,
    pl: &ParallelLexicon,
    bn_trans: &ParallelLexicon,
    model: Option<&TranslitModel>,
) -> Result<Vec<RoutedWord>> {
    if segment.tag != LangTag::Bn {
        return Err(Error::Routing(format!(
            "segment {:?} is tagged {}, not Bn",
            segment.text(),
            segment.tag
        )));
    }
    segment
        .tokens
        .iter()
        .map(|t| {
            if t.token.is_punct() {
                Ok(RoutedWord {
                    source: t.token.surface.clone(),
                    output: t.token.surface.clone(),
                    provenance: Provenance::Passthrough,
                })
            } else {
                back_transliterate(&t.token.surface, pl, bn_trans, model)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{TaggedToken, Token};

    fn lexicons() -> (ParallelLexicon, ParallelLexicon) {
        let pl = ParallelLexicon::new(
            "PL",
            "roman->itrans",
            [
                ("bhalo", "bhAlo"),
                ("ta", "tA"),
                ("chilo", "Chila"),
                ("khub", "khuba"),
            ],
        )
        .unwrap();
        let bn = ParallelLexicon::new(
            "BN_TRANS",
            "itrans->native",
            [("bhAlo", "ভালো"), ("tA", "তা"), ("Chila", "ছিল")],
        )
        .unwrap();
        (pl, bn)
    }

    fn seg(words: &[&str], tag: LangTag) -> Segment {
        Segment::new(
            words
                .iter()
                .map(|w| TaggedToken::new(Token::new(*w), tag, 0.5))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn chain_lookup() {
        let (pl, bn) = lexicons();
        assert_eq!(lexicon_lookup("bhalo", &pl, &bn).as_deref(), Some("ভালো"));
        assert_eq!(lexicon_lookup("BHALO", &pl, &bn).as_deref(), Some("ভালো"));
        assert_eq!(lexicon_lookup("zzz", &pl, &bn), None);
        assert_eq!(lexicon_lookup("khub", &pl, &bn), None);
    }

    #[test]
    fn colliding_keys_keep_first() {
        let lex = ParallelLexicon::new("x", "", [("Ma", "a"), ("ma", "b")]).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.get("MA"), Some("a"));
        assert!(ParallelLexicon::new("x", "", [("", "a")]).is_err());
    }

    #[test]
    fn segment_routing() {
        let (pl, bn) = lexicons();
        let out =
            transliterate_segment(&seg(&["ta", "bhalo", "chilo"], LangTag::Bn), &pl, &bn, None)
                .unwrap();
        let words: Vec<&str> = out.iter().map(|r| r.output.as_str()).collect();
        assert_eq!(words, ["তা", "ভালো", "ছিল"]);
        assert!(out.iter().all(|r| r.provenance == Provenance::Lexicon));

        let punct = transliterate_segment(&seg(&["।"], LangTag::Bn), &pl, &bn, None).unwrap();
        assert_eq!(punct[0].output, "।");
        assert_eq!(punct[0].provenance, Provenance::Passthrough);

        assert!(matches!(
            transliterate_segment(&seg(&["movie"], LangTag::En), &pl, &bn, None),
            Err(Error::Routing(_))
        ));
    }

    #[test]
    fn oov_without_model_echoes() {
        let (pl, bn) = lexicons();
        let r = back_transliterate("khub", &pl, &bn, None).unwrap();
        assert_eq!(r.output, "khub");
        assert_eq!(r.provenance, Provenance::Echo);
        assert!(back_transliterate("  ", &pl, &bn, None).is_err());
    }

    #[test]
    fn empty_decode_echoes() {
        let (pl, bn) = lexicons();
        let spec = TranslitTrainSpec {
            hidden: 4,
            epochs: 1,
            ..Default::default()
        };
        let mut model = train_translit(&bn, &spec).unwrap().model;
        let eos = crate::text::CharVocab::EOS;
        model.net.output.fill(0.0);
        model.net.output_bias.fill(0.0);
        model.net.output_bias.as_mut_slice()[eos] = 10.0;
        let r = back_transliterate("kobita", &pl, &bn, Some(&model)).unwrap();
        assert_eq!(r.provenance, Provenance::Echo);
        assert_eq!(r.output, "kobita");
    }

    #[test]
    fn empty_lexicon_rejected() {
        let empty = ParallelLexicon::new::<&str, &str>("BN_TRANS", "", []).unwrap();
        assert!(matches!(
            train_translit(&empty, &TranslitTrainSpec::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn decode_is_bounded() {
        let (_, bn) = lexicons();
        let spec = TranslitTrainSpec {
            hidden: 6,
            epochs: 2,
            ..Default::default()
        };
        let model = train_translit(&bn, &spec).unwrap().model;
        for w in ["a", "bhalo", "qqqqqqqq"] {
            let out = model.decode(w).unwrap();
            assert!(out.chars().count() <= max_decode_len(w));
        }
    }
}
