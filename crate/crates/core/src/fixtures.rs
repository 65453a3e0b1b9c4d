//! Small synthetic data sets: the separable tagger words, toy lexicons and
//! parallel pairs, and a template-grammar Bengali corpus for the reorder
//! language model.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::text::{LangTag, SentencePair};
use crate::translit::ParallelLexicon;

/// Code-mixed example with gold segment annotation.
pub const EXAMPLE_1: &str = "(Movie)En (ta bhalo chilo)Bn (but mid point)En (e amar khub)Bn (boring)En (lagte shuru korlo)Bn";
pub const EXAMPLE_2: &str = "(I had to go)En (karon o khub)Bn (urgently)En (daklo amaye)Bn";
pub const EXAMPLE_2_TEXT: &str = "I had to go karon o khub urgently daklo amaye.";

/// `n_per_class` distinct words over `a..=m` tagged En and as many over
/// `n..=z` tagged Bn, interleaved.
pub fn separable_tagger_words(n_per_class: usize, seed: u64) -> Vec<(String, LangTag)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: u8, hi: u8| {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(n_per_class);
        while out.len() < n_per_class {
            let len = rng.gen_range(3..=8);
            let w: String = (0..len).map(|_| rng.gen_range(lo..=hi) as char).collect();
            if seen.insert(w.clone()) {
                out.push(w);
            }
        }
        out
    };
    let en = draw(b'a', b'm');
    let bn = draw(b'n', b'z');
    en.into_iter()
        .zip(bn)
        .flat_map(|(e, b)| [(e, LangTag::En), (b, LangTag::Bn)])
        .collect()
}

/// Roman spelling → ITRANS for the Bengali words of the two examples.
pub const PL_ENTRIES: &[(&str, &str)] = &[
    ("ta", "tA"),
    ("bhalo", "bhAlo"),
    ("chilo", "Chila"),
    ("e", "e"),
    ("amar", "AmAra"),
    ("khub", "khuba"),
    ("lagte", "lAgate"),
    ("shuru", "shuru"),
    ("korlo", "karala"),
    ("karon", "kAraNa"),
    ("o", "o"),
    ("daklo", "DAkala"),
    ("amaye", "AmAYa"),
];

/// ITRANS → native script: the chain targets of [`PL_ENTRIES`] plus seven
/// words reachable only through the model.
pub const BN_TRANS_ENTRIES: &[(&str, &str)] = &[
    ("tA", "তা"),
    ("bhAlo", "ভালো"),
    ("Chila", "ছিল"),
    ("e", "এ"),
    ("AmAra", "আমার"),
    ("khuba", "খুব"),
    ("lAgate", "লাগতে"),
    ("shuru", "শুরু"),
    ("karala", "করল"),
    ("kAraNa", "কারণ"),
    ("o", "ও"),
    ("DAkala", "ডাকল"),
    ("AmAYa", "আমায়"),
    ("ami", "আমি"),
    ("tumi", "তুমি"),
    ("bhAta", "ভাত"),
    ("jala", "জল"),
    ("bADi", "বাড়ি"),
    ("mAcha", "মাছ"),
    ("bai", "বই"),
];

/// Roman words absent from PL whose normalized form is a BN_TRANS key.
pub const OOV_WORDS: &[&str] = &["ami", "tumi", "bhata", "jala", "badi", "macha"];

pub fn pl_lexicon() -> Result<ParallelLexicon> {
    ParallelLexicon::new("PL", "roman->itrans", PL_ENTRIES.iter().copied())
}

pub fn bn_trans_lexicon() -> Result<ParallelLexicon> {
    ParallelLexicon::new(
        "BN_TRANS",
        "itrans->native",
        BN_TRANS_ENTRIES.iter().copied(),
    )
}

/// English → Bengali toy pairs, covering every English segment of the two
/// examples.
pub const MT_PAIRS: &[(&str, &str)] = &[
    ("movie", "সিনেমা"),
    ("but mid point", "কিন্তু মাঝখানে"),
    ("boring", "বিরক্তিকর"),
    ("i had to go", "আমাকে যেতে হয়েছিল"),
    ("urgently", "জরুরিভাবে"),
    ("good morning", "সুপ্রভাত"),
    ("thank you", "ধন্যবাদ"),
    ("i love you", "আমি তোমাকে ভালোবাসি"),
    ("how are you", "তুমি কেমন আছ"),
    ("water", "জল"),
    ("book", "বই"),
    ("house", "বাড়ি"),
    ("fish", "মাছ"),
    ("rice", "ভাত"),
    ("very good", "খুব ভালো"),
    ("come here", "এখানে এসো"),
    ("what is this", "এটা কী"),
    ("my name", "আমার নাম"),
    ("the story", "গল্পটা"),
    ("friend", "বন্ধু"),
];

pub fn mt_pairs() -> Result<Vec<SentencePair>> {
    MT_PAIRS
        .iter()
        .map(|(s, t)| SentencePair::new(s, t))
        .collect()
}

const TIME: &[&str] = &["আজ", "কাল", "এখন", "সকালে"];
const SUBJ: &[&str] = &["আমি", "তুমি", "সে", "আমরা", "তারা", "রাম"];
const ADV: &[&str] = &["খুব", "আবার", "তাড়াতাড়ি", "ধীরে"];
const OBJ: &[&str] = &["ভাত", "মাছ", "বই", "জল", "গান", "চিঠি", "ছবি", "খেলা"];
const VERB: &[&str] = &["খায়", "পড়ে", "দেখে", "লেখে", "শোনে", "চায়"];

/// Sentences of the form `[TIME] SUBJ [ADV] OBJ VERB`.
pub fn reorder_corpus(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut s = Vec::with_capacity(5);
            if rng.gen_bool(0.5) {
                s.push(*TIME.choose(&mut rng).unwrap());
            }
            s.push(*SUBJ.choose(&mut rng).unwrap());
            if rng.gen_bool(0.5) {
                s.push(*ADV.choose(&mut rng).unwrap());
            }
            s.push(*OBJ.choose(&mut rng).unwrap());
            s.push(*VERB.choose(&mut rng).unwrap());
            s.into_iter().map(String::from).collect()
        })
        .collect()
}

/// Swaps one random adjacent pair of distinct tokens. Returns the swap
/// position, or `None` when no such pair exists.
pub fn scramble_adjacent<R: Rng>(tokens: &mut [String], rng: &mut R) -> Option<usize> {
    let candidates: Vec<usize> = (0..tokens.len().saturating_sub(1))
        .filter(|&i| tokens[i] != tokens[i + 1])
        .collect();
    let &i = candidates.choose(rng)?;
    tokens.swap(i, i + 1);
    Some(i)
}
