//! Corpus BLEU, TER with block shifts, Fleiss' kappa and human judgment
//! averaging.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{read_lines, tokenize};

pub const BLEU_MAX_N: usize = 4;
/// Longest hypothesis span considered for a single shift.
pub const TER_MAX_SHIFT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuSmoothing {
    None,
    /// A zero precision at order n becomes `1 / (2 * total n-grams)`.
    HalfCount,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    out
}

/// Clipped matches and hypothesis n-gram total at each order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    fn add<S: AsRef<str>>(&mut self, hyp: &[S], reference: &[S], max_n: usize) {
        if self.matches.is_empty() {
            self.matches = vec![0; max_n];
            self.totals = vec![0; max_n];
        }
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=max_n {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += h.values().sum::<usize>();
            self.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Modified precision at order `n` (1-based), before smoothing.
    pub fn precision(&self, n: usize) -> f64 {
        let t = self.totals[n - 1];
        if t == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / t as f64
        }
    }

    /// Orders with no hypothesis n-grams are left out of the geometric
    /// mean (effective order).
    pub fn score(&self, smoothing: BleuSmoothing) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 1..=self.matches.len() {
            let total = self.totals[n - 1];
            if total == 0 {
                continue;
            }
            let p = if self.matches[n - 1] > 0 {
                self.precision(n)
            } else {
                match smoothing {
                    BleuSmoothing::None => return 0.0,
                    BleuSmoothing::HalfCount => 1.0 / (2.0 * total as f64),
                }
            };
            log_sum += p.ln();
            orders += 1;
        }
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        (bp * (log_sum / orders as f64).exp()).clamp(0.0, 1.0)
    }
}

pub fn bleu_stats<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
    max_n: usize,
) -> Result<BleuStats> {
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    if max_n == 0 {
        return Err(Error::Config("max_n must be at least 1".into()));
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats.add(h, r, max_n);
    }
    Ok(stats)
}

/// Corpus BLEU in [0, 1] with clipped precisions pooled over the corpus.
pub fn bleu<S: AsRef<str>>(
    hypotheses: &[Vec<S>],
    references: &[Vec<S>],
    max_n: usize,
    smoothing: BleuSmoothing,
) -> Result<f64> {
    Ok(bleu_stats(hypotheses, references, max_n)?.score(smoothing))
}

/// Word-level Levenshtein distance, plus for each hypothesis position
/// whether an optimal alignment matches it exactly.
fn edit_alignment(hyp: &[&str], reference: &[&str]) -> (usize, Vec<bool>) {
    let (n, m) = (hyp.len(), reference.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    d[0] = (0..=m).collect();
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut matched = vec![false; n];
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        let same = hyp[i - 1] == reference[j - 1];
        if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
            matched[i - 1] = same;
            i -= 1;
            j -= 1;
        } else if d[i][j] == d[i - 1][j] + 1 {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    (d[n][m], matched)
}

fn contains_span(haystack: &[&str], span: &[&str]) -> bool {
    haystack.windows(span.len()).any(|w| w == span)
}

/// Edit count and rate of one hypothesis against one reference. Shifts are
/// searched greedily: each round applies the block move that most lowers
/// the remaining edit distance, counting one edit per shift, until no move
/// pays for itself.
pub fn ter<S: AsRef<str>>(hypothesis: &[S], reference: &[S]) -> Result<(usize, f64)> {
    if reference.is_empty() {
        return Err(Error::Data("TER reference is empty".into()));
    }
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut hyp: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let mut shifts = 0usize;
    loop {
        let (dist, matched) = edit_alignment(&hyp, &reference);
        let mut best: Option<(usize, Vec<&str>)> = None;
        for start in 0..hyp.len() {
            for len in 1..=TER_MAX_SHIFT.min(hyp.len() - start) {
                let span = &hyp[start..start + len];
                if matched[start..start + len].iter().all(|&m| m)
                    || !contains_span(&reference, span)
                {
                    continue;
                }
                let mut rest = hyp.clone();
                let moved: Vec<&str> = rest.drain(start..start + len).collect();
                for dest in 0..=rest.len() {
                    if dest == start {
                        continue;
                    }
                    let mut cand = rest.clone();
                    cand.splice(dest..dest, moved.iter().copied());
                    let (d, _) = edit_alignment(&cand, &reference);
                    if best.as_ref().is_none_or(|(b, _)| d < *b) {
                        best = Some((d, cand));
                    }
                }
            }
        }
        match best {
            Some((d, cand)) if d + 1 < dist => {
                hyp = cand;
                shifts += 1;
            }
            _ => {
                let edits = dist + shifts;
                return Ok((edits, edits as f64 / reference.len() as f64));
            }
        }
    }
}

/// Edit distance without shifts.
pub fn ter_without_shifts<S: AsRef<str>>(
    hypothesis: &[S],
    reference: &[S],
) -> Result<(usize, f64)> {
    if reference.is_empty() {
        return Err(Error::Data("TER reference is empty".into()));
    }
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let (d, _) = edit_alignment(&h, &r);
    Ok((d, d as f64 / r.len() as f64))
}

/// Total edits over total reference tokens.
pub fn corpus_ter<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::EmptyInput("corpus"));
    }
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    for (h, r) in hypotheses.iter().zip(references) {
        edits += ter(h, r)?.0;
        ref_len += r.len();
    }
    Ok(edits as f64 / ref_len as f64)
}

/// Items × categories table of rater counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KappaTable {
    rows: Vec<Vec<usize>>,
    n_raters: usize,
}

impl KappaTable {
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput("kappa table"))?;
        let cats = first.len();
        let n_raters: usize = first.iter().sum();
        if cats == 0 {
            return Err(Error::Data("kappa table has no categories".into()));
        }
        if n_raters < 2 {
            return Err(Error::Data("need at least two raters per item".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cats {
                return Err(Error::Data(format!(
                    "row {i} has {} categories, expected {cats}",
                    r.len()
                )));
            }
            if r.iter().sum::<usize>() != n_raters {
                return Err(Error::Data(format!(
                    "row {i} does not sum to {n_raters} raters"
                )));
            }
        }
        Ok(KappaTable { rows, n_raters })
    }

    /// One label list per item; categories are the distinct labels in
    /// sorted order.
    pub fn from_ratings<S: AsRef<str>>(items: &[Vec<S>]) -> Result<Self> {
        let cats: BTreeSet<&str> = items.iter().flatten().map(AsRef::as_ref).collect();
        let index: BTreeMap<&str, usize> = cats.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let rows = items
            .iter()
            .map(|labels| {
                let mut row = vec![0; cats.len()];
                for l in labels {
                    row[index[l.as_ref()]] += 1;
                }
                row
            })
            .collect();
        Self::new(rows)
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn n_raters(&self) -> usize {
        self.n_raters
    }
}

pub fn fleiss_kappa(table: &KappaTable) -> Result<f64> {
    let n = table.n_raters as f64;
    let items = table.rows.len() as f64;
    let cats = table.rows[0].len();
    let p_bar = table
        .rows
        .iter()
        .map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - n) / (n * (n - 1.0)))
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..cats)
        .map(|j| {
            let p = table.rows.iter().map(|r| r[j] as f64).sum::<f64>() / (items * n);
            p * p
        })
        .sum();
    if p_e >= 1.0 {
        return if p_bar >= 1.0 {
            Ok(1.0)
        } else {
            Err(Error::Degenerate("expected agreement is 1".into()))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub id: String,
    pub adequacy: u8,
    pub fluency: u8,
    pub judge: String,
}

/// Reads `id<TAB>adequacy<TAB>fluency<TAB>judge` lines with scores in 1..=5.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Vec<JudgmentRecord>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let bad = |m: &str| Error::format(path, i + 1, m);
        let [id, adequacy, fluency, judge] = fields[..] else {
            return Err(bad("expected 4 TAB-separated fields"));
        };
        let score = |s: &str| -> Result<u8> {
            match s.parse::<u8>() {
                Ok(v @ 1..=5) => Ok(v),
                _ => Err(bad("scores must be integers in 1..=5")),
            }
        };
        out.push(JudgmentRecord {
            id: id.to_string(),
            adequacy: score(adequacy)?,
            fluency: score(fluency)?,
            judge: judge.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgmentSummary {
    pub adequacy: f64,
    pub fluency: f64,
    pub n: usize,
}

pub fn mean_judgments(records: &[JudgmentRecord]) -> Result<JudgmentSummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("judgments"));
    }
    let n = records.len() as f64;
    Ok(JudgmentSummary {
        adequacy: records.iter().map(|r| f64::from(r.adequacy)).sum::<f64>() / n,
        fluency: records.iter().map(|r| f64::from(r.fluency)).sum::<f64>() / n,
        n: records.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    /// 1-based line number.
    pub id: String,
    pub bleu: f64,
    pub ter_edits: usize,
    pub ter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub ter: f64,
    pub n_sentences: usize,
    pub sentences: Vec<SentenceScore>,
}

fn surfaces(line: &str) -> Result<Vec<String>> {
    if line.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(tokenize(line)?.into_iter().map(|t| t.surface).collect())
}

/// Scores line-aligned hypotheses against references. Sentence ids are
/// 1-based line numbers; with `ids` given only those lines are scored.
pub fn evaluate_lines<S: AsRef<str>>(
    hypotheses: &[S],
    references: &[S],
    ids: Option<&BTreeSet<String>>,
) -> Result<EvalReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::Data(format!(
            "hypothesis file has {} lines, reference file has {}",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    let mut sentences = Vec::new();
    for (i, (h, r)) in hypotheses.iter().zip(references).enumerate() {
        let id = (i + 1).to_string();
        if ids.is_some_and(|set| !set.contains(&id)) {
            continue;
        }
        let (h, r) = (surfaces(h.as_ref())?, surfaces(r.as_ref())?);
        if r.is_empty() {
            return Err(Error::Data(format!("reference line {id} is empty")));
        }
        let sent_bleu = bleu(
            std::slice::from_ref(&h),
            std::slice::from_ref(&r),
            BLEU_MAX_N,
            BleuSmoothing::HalfCount,
        )?;
        let (edits, rate) = ter(&h, &r)?;
        sentences.push(SentenceScore {
            id,
            bleu: sent_bleu,
            ter_edits: edits,
            ter: rate,
        });
        hyps.push(h);
        refs.push(r);
    }
    if hyps.is_empty() {
        return Err(Error::Data("no sentences selected for evaluation".into()));
    }
    let ref_tokens: usize = refs.iter().map(Vec::len).sum();
    let edits: usize = sentences.iter().map(|s| s.ter_edits).sum();
    Ok(EvalReport {
        bleu: bleu(&hyps, &refs, BLEU_MAX_N, BleuSmoothing::HalfCount)?,
        ter: edits as f64 / ref_tokens as f64,
        n_sentences: hyps.len(),
        sentences,
    })
}

pub fn evaluate_corpus(
    hyp_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
    ids: Option<&BTreeSet<String>>,
) -> Result<EvalReport> {
    let strip_trailing = |mut v: Vec<String>| {
        while v.last().is_some_and(|l| l.is_empty()) {
            v.pop();
        }
        v
    };
    let hyps = strip_trailing(read_lines(hyp_path.as_ref())?);
    let refs = strip_trailing(read_lines(ref_path.as_ref())?);
    evaluate_lines(&hyps, &refs, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_identity() {
        let c = vec![w("a b c d e"), w("x y z"), w("one")];
        let b = bleu(&c, &c, 4, BleuSmoothing::HalfCount).unwrap();
        assert!((b - 1.0).abs() < 1e-9, "{b}");
    }

    #[test]
    fn bleu_clipping() {
        let stats = bleu_stats(
            &[w("the the the the the the the")],
            &[w("the cat is on the mat")],
            4,
        )
        .unwrap();
        assert!((stats.precision(1) - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_smoothing() {
        let h = vec![w("a b c x d e")];
        let r = vec![w("a b c y d e")];
        assert_eq!(bleu(&h, &r, 4, BleuSmoothing::None).unwrap(), 0.0);
        let stats = bleu_stats(&h, &r, 4).unwrap();
        assert_eq!(stats.matches, [5, 3, 1, 0]);
        let smoothed = stats.score(BleuSmoothing::HalfCount);
        assert!(smoothed > 0.0);
        let expect =
            ((5.0f64 / 6.0).ln() + (3.0f64 / 5.0).ln() + (1.0f64 / 4.0).ln() + (1.0f64 / 6.0).ln())
                / 4.0;
        assert!((smoothed - expect.exp()).abs() < 1e-12);
        assert!(bleu(&h, &[w("a")], 4, BleuSmoothing::None).is_ok());
        let short = vec![w("a b"), w("c")];
        assert_eq!(bleu(&short, &short, 4, BleuSmoothing::None).unwrap(), 1.0);
        assert!(matches!(
            bleu(&h, &[], 4, BleuSmoothing::None),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn ter_examples() {
        assert_eq!(ter(&w("a b c"), &w("a b c")).unwrap(), (0, 0.0));
        let (e, r) = ter(&w("a b x d e"), &w("a b c d e")).unwrap();
        assert_eq!(e, 1);
        assert!((r - 0.2).abs() < 1e-12);
        let (e, r) = ter(&w("b a c d"), &w("a b c d")).unwrap();
        assert_eq!(e, 1);
        assert!((r - 0.25).abs() < 1e-6);
        assert_eq!(
            ter_without_shifts(&w("b a c d"), &w("a b c d")).unwrap().0,
            2
        );
        assert!(matches!(ter(&w("a"), &[]), Err(Error::Data(_))));
    }

    #[test]
    fn kappa_cases() {
        let full = KappaTable::new(vec![vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap();
        assert_eq!(fleiss_kappa(&full).unwrap(), 1.0);
        let hand = KappaTable::from_ratings(&[vec!["A", "A"], vec!["A", "B"]]).unwrap();
        assert_eq!(hand.rows(), [vec![2, 0], vec![1, 1]]);
        assert!((fleiss_kappa(&hand).unwrap() - (-1.0 / 3.0)).abs() < 1e-12);
        let single = KappaTable::new(vec![vec![2], vec![2]]).unwrap();
        assert_eq!(fleiss_kappa(&single).unwrap(), 1.0);
        assert!(KappaTable::new(vec![vec![2, 0], vec![1, 0]]).is_err());
        assert!(KappaTable::new(vec![vec![1, 0]]).is_err());
    }

    #[test]
    fn judgments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.tsv");
        std::fs::write(&p, "1\t4\t3\tj1\n2\t2\t5\tj2\n").unwrap();
        let recs = load_judgments(&p).unwrap();
        let m = mean_judgments(&recs).unwrap();
        assert_eq!((m.adequacy, m.fluency, m.n), (3.0, 4.0, 2));
        std::fs::write(&p, "1\t6\t3\tj1\n").unwrap();
        assert!(matches!(
            load_judgments(&p),
            Err(Error::Format { line: 1, .. })
        ));
    }

    #[test]
    fn corpus_evaluation() {
        let lines = ["ami bhalo achi.", "I had to go", "khub bhalo"];
        let r = evaluate_lines(&lines, &lines, None).unwrap();
        assert!((r.bleu - 1.0).abs() < 1e-9);
        assert_eq!(r.ter, 0.0);
        let ids: BTreeSet<String> = ["2".to_string()].into();
        let hyp = ["x y z", "I had to go", "q"];
        let sub = evaluate_lines(&hyp, &lines, Some(&ids)).unwrap();
        assert_eq!(sub.n_sentences, 1);
        assert_eq!(sub.sentences[0].id, "2");
        assert!((sub.bleu - 1.0).abs() < 1e-9);
        assert!(matches!(
            evaluate_lines(&hyp[..2], &lines, None),
            Err(Error::Data(_))
        ));
    }

    proptest! {
        #[test]
        fn identity_on_any_corpus(c in proptest::collection::vec(proptest::collection::vec(0u8..5, 1..6), 1..5)) {
            let c: Vec<Vec<String>> = c.iter().map(|s| s.iter().map(|x| x.to_string()).collect()).collect();
            for smoothing in [BleuSmoothing::None, BleuSmoothing::HalfCount] {
                prop_assert!((bleu(&c, &c, 4, smoothing).unwrap() - 1.0).abs() < 1e-9);
            }
            prop_assert_eq!(corpus_ter(&c, &c).unwrap(), 0.0);
        }

        #[test]
        fn shifts_never_hurt(h in proptest::collection::vec(0u8..4, 0..7), r in proptest::collection::vec(0u8..4, 1..7)) {
            let h: Vec<String> = h.iter().map(|x| x.to_string()).collect();
            let r: Vec<String> = r.iter().map(|x| x.to_string()).collect();
            prop_assert!(ter(&h, &r).unwrap().0 <= ter_without_shifts(&h, &r).unwrap().0);
        }

        #[test]
        fn kappa_invariant_to_column_order(rows in proptest::collection::vec((0usize..5, 0usize..5), 1..8)) {
            let table: Vec<Vec<usize>> = rows
                .iter()
                .map(|&(a, b)| {
                    let b = b.min(4 - a);
                    vec![a, b, 4 - a - b]
                })
                .collect();
            let swapped: Vec<Vec<usize>> = table.iter().map(|r| vec![r[2], r[0], r[1]]).collect();
            let k1 = fleiss_kappa(&KappaTable::new(table).unwrap());
            let k2 = fleiss_kappa(&KappaTable::new(swapped).unwrap());
            match (k1, k2) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn bleu_order_invariant(seed in 0u64..50) {
            use rand::{seq::SliceRandom, SeedableRng};
            let corpus = crate::fixtures::reorder_corpus(8, seed);
            let hyps: Vec<Vec<String>> = corpus.iter().rev().cloned().collect();
            let refs = corpus.clone();
            let mut idx: Vec<usize> = (0..8).collect();
            idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let h2: Vec<Vec<String>> = idx.iter().map(|&i| hyps[i].clone()).collect();
            let r2: Vec<Vec<String>> = idx.iter().map(|&i| refs[i].clone()).collect();
            let a = bleu(&hyps, &refs, 4, BleuSmoothing::HalfCount).unwrap();
            let b = bleu(&h2, &r2, 4, BleuSmoothing::HalfCount).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
