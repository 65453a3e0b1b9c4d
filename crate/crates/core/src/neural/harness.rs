//! Fixed gradient-check scenarios for the two architectures the toolkit
//! trains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classifier::{LabeledSequence, SequenceClassifier};
use super::network::{gradient_check, DEFAULT_GRADCHECK_STEP};
use super::seq2seq::{EmbeddingMode, Seq2Seq, Seq2SeqExample, Seq2SeqShape};
use crate::error::Result;
use crate::text::CharVocab;

/// Max relative gradient error of a 15-35-25-1 sigmoid tagger on two random
/// words over an 8-letter alphabet.
pub fn tagger_gradcheck(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = CharVocab::from_chars("abcdefgh".chars());
    let net = SequenceClassifier::new(vocab.len(), &[15, 35, 25], &mut rng)?;
    let batch: Vec<LabeledSequence> = (0..2)
        .map(|i| LabeledSequence {
            chars: (0..4 + i)
                .map(|_| rng.gen_range(CharVocab::N_SPECIALS..vocab.len()))
                .collect(),
            label: i as f64,
        })
        .collect();
    gradient_check(&net, &batch, DEFAULT_GRADCHECK_STEP)
}

/// Max relative gradient error of a one-hot seq2seq with attention, hidden
/// size 8 and vocabularies of 6 symbols (4 reserved + 2 characters).
pub fn seq2seq_gradcheck(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Seq2SeqShape {
        hidden: 8,
        layers: 1,
        attention: true,
        embedding: EmbeddingMode::OneHot,
    };
    let net = Seq2Seq::new(
        CharVocab::from_chars("ab".chars()),
        CharVocab::from_chars("xy".chars()),
        shape,
        &mut rng,
    )?;
    let batch = vec![
        Seq2SeqExample::new(vec![4, 5, 4], &[5, 4]),
        Seq2SeqExample::new(vec![5, 5], &[4, 4, 5]),
    ];
    gradient_check(&net, &batch, DEFAULT_GRADCHECK_STEP)
}
