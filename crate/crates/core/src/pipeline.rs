//! End-to-end translation of code-mixed sentences: tag, segment, route each
//! segment to back-transliteration (Bn) or translation (En), join in order
//! and optionally reorder.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mt::{translate_segment, MtModel};
use crate::reorder::{reorder_traced, NgramLM, ReorderConfig, ReorderStats};
use crate::tagger::{segment, tag_sentence, GoldTagger, TaggerModel, WordTagger};
use crate::text::{
    detokenize, load_tagged_words, read_lines, tokenize, LangTag, Segment, TaggedToken, Token,
};
use crate::translit::{
    transliterate_segment, ParallelLexicon, Provenance, RoutedWord, TranslitModel,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// No reordering.
    #[default]
    Cmt1,
    /// Reorder the joined output with the language model.
    Cmt2,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cmt1" => Ok(Mode::Cmt1),
            "cmt2" => Ok(Mode::Cmt2),
            other => Err(format!("unknown mode {other:?} (expected cmt1 or cmt2)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cmt1 => "cmt1",
            Mode::Cmt2 => "cmt2",
        })
    }
}

/// File locations and switches for a pipeline run. Exactly one of
/// `tagger_model` and `gold_tags` must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tagger_model: Option<PathBuf>,
    /// Word<TAB>tag file used instead of the tagger model.
    pub gold_tags: Option<PathBuf>,
    pub translit_model: Option<PathBuf>,
    pub mt_model: Option<PathBuf>,
    pub pl: Option<PathBuf>,
    pub bn_trans: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    pub mode: Mode,
    pub trace: bool,
    pub reorder: ReorderConfig,
}

impl PipelineConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.tagger_model, &self.gold_tags) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set either tagger_model or gold_tags, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "a tagger model or gold tag file is required".into(),
                ))
            }
            _ => {}
        }
        if self.mode == Mode::Cmt2 && self.lm.is_none() {
            return Err(Error::Config("mode cmt2 requires a language model".into()));
        }
        if self.reorder.max_passes == 0 {
            return Err(Error::Config(
                "reorder.max_passes must be at least 1".into(),
            ));
        }
        let paths = [
            &self.tagger_model,
            &self.gold_tags,
            &self.translit_model,
            &self.mt_model,
            &self.pl,
            &self.bn_trans,
            &self.lm,
        ];
        for p in paths.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

pub struct Pipeline {
    tagger: Box<dyn WordTagger + Send + Sync>,
    pl: ParallelLexicon,
    bn_trans: ParallelLexicon,
    translit: Option<TranslitModel>,
    mt: Option<MtModel>,
    lm: Option<NgramLM>,
    mode: Mode,
    reorder: ReorderConfig,
}

impl Pipeline {
    pub fn new(
        tagger: Box<dyn WordTagger + Send + Sync>,
        pl: ParallelLexicon,
        bn_trans: ParallelLexicon,
        translit: Option<TranslitModel>,
        mt: Option<MtModel>,
        lm: Option<NgramLM>,
    ) -> Self {
        Pipeline {
            tagger,
            pl,
            bn_trans,
            translit,
            mt,
            lm,
            mode: Mode::Cmt1,
            reorder: ReorderConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Result<Self> {
        if mode == Mode::Cmt2 && self.lm.is_none() {
            return Err(Error::Config("mode cmt2 requires a language model".into()));
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn with_reorder_config(mut self, reorder: ReorderConfig) -> Self {
        self.reorder = reorder;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn load(config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let tagger: Box<dyn WordTagger + Send + Sync> =
            match (&config.tagger_model, &config.gold_tags) {
                (Some(p), _) => Box::new(TaggerModel::load(p)?),
                (_, Some(p)) => Box::new(GoldTagger::new(load_tagged_words(p)?)),
                _ => unreachable!("validated"),
            };
        let lexicon = |p: &Option<PathBuf>, name: &str, dir: &str| match p {
            Some(p) => ParallelLexicon::from_tsv(p, name, dir),
            None => ParallelLexicon::new::<&str, &str>(name, dir, []),
        };
        let pipeline = Pipeline::new(
            tagger,
            lexicon(&config.pl, "PL", "roman->itrans")?,
            lexicon(&config.bn_trans, "BN_TRANS", "itrans->native")?,
            config
                .translit_model
                .as_ref()
                .map(TranslitModel::load)
                .transpose()?,
            config.mt_model.as_ref().map(MtModel::load).transpose()?,
            config.lm.as_ref().map(NgramLM::load).transpose()?,
        );
        Ok(pipeline
            .with_mode(config.mode)?
            .with_reorder_config(config.reorder))
    }

    fn translate_run(&self, words: &[Token]) -> Result<RoutedWord> {
        let mt = self.mt.as_ref().ok_or_else(|| {
            Error::Config("English segment found but no MT model is loaded".into())
        })?;
        let text = detokenize(words)?;
        let out = translate_segment(mt, &text)?;
        Ok(if out.empty {
            log::debug!("empty translation for {text:?}, echoing");
            RoutedWord {
                output: text.clone(),
                source: text,
                provenance: Provenance::Echo,
            }
        } else {
            RoutedWord {
                source: text,
                output: out.text,
                provenance: Provenance::Translation,
            }
        })
    }

    /// English segments are translated one punctuation-free run at a time.
    fn route_en(&self, seg: &Segment) -> Result<Vec<RoutedWord>> {
        let mut routed = Vec::new();
        let mut run: Vec<Token> = Vec::new();
        for t in &seg.tokens {
            if t.token.is_punct() {
                if !run.is_empty() {
                    routed.push(self.translate_run(&run)?);
                    run.clear();
                }
                routed.push(RoutedWord {
                    source: t.token.surface.clone(),
                    output: t.token.surface.clone(),
                    provenance: Provenance::Passthrough,
                });
            } else {
                run.push(t.token.clone());
            }
        }
        if !run.is_empty() {
            routed.push(self.translate_run(&run)?);
        }
        Ok(routed)
    }

    fn routed_tokens(routed: &[RoutedWord]) -> Result<Vec<Token>> {
        let mut out = Vec::new();
        for r in routed {
            match r.provenance {
                Provenance::Passthrough => out.push(Token::punct(r.output.clone())),
                Provenance::Translation => out.extend(tokenize(&r.output)?),
                _ if r.output.split_whitespace().count() > 1 => out.extend(tokenize(&r.output)?),
                _ => out.push(Token::new(r.output.clone())),
            }
        }
        Ok(out)
    }

    /// Translates one sentence, returning the output and its trace.
    pub fn translate(&self, sentence: &str) -> Result<(String, TraceRecord)> {
        let mut timings = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |stage: &'static str, timings: &mut Vec<StageTiming>| {
            timings.push(StageTiming {
                stage,
                micros: clock.elapsed().as_micros() as u64,
            });
            clock = Instant::now();
        };

        let tokens = tokenize(sentence).map_err(Error::at("tokenize"))?;
        lap("tokenize", &mut timings);
        let tagged = tag_sentence(&*self.tagger, &tokens).map_err(Error::at("tag"))?;
        lap("tag", &mut timings);
        let segments = segment(&tagged).map_err(Error::at("segment"))?;
        lap("segment", &mut timings);

        let mut seg_traces = Vec::with_capacity(segments.len());
        let mut joined_tokens = Vec::new();
        for (index, seg) in segments.iter().enumerate() {
            let (route, words) = match seg.tag {
                LangTag::Bn => (
                    Route::Transliterate,
                    transliterate_segment(seg, &self.pl, &self.bn_trans, self.translit.as_ref())
                        .map_err(Error::at("transliterate"))?,
                ),
                LangTag::En => (
                    Route::Translate,
                    self.route_en(seg).map_err(Error::at("translate"))?,
                ),
            };
            let out_tokens = Self::routed_tokens(&words).map_err(Error::at("join"))?;
            seg_traces.push(SegmentTrace {
                index,
                tag: seg.tag,
                route,
                input: seg.text(),
                output: detokenize(&out_tokens).map_err(Error::at("join"))?,
                words,
            });
            joined_tokens.extend(out_tokens);
        }
        lap("route", &mut timings);
        let joined = detokenize(&joined_tokens).map_err(Error::at("join"))?;
        lap("join", &mut timings);

        let (output, reordered, reorder_stats) = match (self.mode, &self.lm) {
            (Mode::Cmt2, Some(lm)) => {
                let (toks, stats) = reorder_traced(lm, &joined_tokens, &self.reorder)
                    .map_err(Error::at("reorder"))?;
                let text = detokenize(&toks).map_err(Error::at("reorder"))?;
                lap("reorder", &mut timings);
                (text.clone(), Some(text), Some(stats))
            }
            _ => (joined.clone(), None, None),
        };

        let echo_count = seg_traces
            .iter()
            .flat_map(|s| &s.words)
            .filter(|w| w.provenance == Provenance::Echo)
            .count();
        let trace = TraceRecord {
            input: sentence.to_string(),
            mode: self.mode,
            tagged,
            segments: seg_traces,
            joined,
            reordered,
            reorder_stats,
            output: output.clone(),
            echo_count,
            timings,
        };
        Ok((output, trace))
    }
}

pub fn translate_code_mixed(pipeline: &Pipeline, sentence: &str) -> Result<(String, TraceRecord)> {
    pipeline.translate(sentence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Transliterate,
    Translate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub index: usize,
    pub tag: LangTag,
    pub route: Route,
    pub input: String,
    pub output: String,
    /// One entry per Bn word, per translated En run, and per punctuation
    /// token.
    pub words: Vec<RoutedWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageTiming {
    pub stage: &'static str,
    pub micros: u64,
}

/// Everything each stage produced for one sentence, in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub input: String,
    pub mode: Mode,
    pub tagged: Vec<TaggedToken>,
    pub segments: Vec<SegmentTrace>,
    pub joined: String,
    pub reordered: Option<String>,
    pub reorder_stats: Option<ReorderStats>,
    pub output: String,
    pub echo_count: usize,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub lines: usize,
    pub failed: usize,
    pub segments_bn: usize,
    pub segments_en: usize,
    /// Bengali words (punctuation excluded) routed through transliteration.
    pub bn_words: usize,
    pub lexicon_hits: usize,
    pub model_words: usize,
    pub echo_count: usize,
}

impl BatchSummary {
    /// Lexicon hits over Bengali words, or `None` without Bengali words.
    pub fn lexicon_hit_rate(&self) -> Option<f64> {
        (self.bn_words > 0).then(|| self.lexicon_hits as f64 / self.bn_words as f64)
    }

    fn add(&mut self, trace: &TraceRecord) {
        for seg in &trace.segments {
            match seg.tag {
                LangTag::Bn => self.segments_bn += 1,
                LangTag::En => self.segments_en += 1,
            }
            for w in &seg.words {
                if seg.tag == LangTag::Bn && w.provenance != Provenance::Passthrough {
                    self.bn_words += 1;
                }
                match w.provenance {
                    Provenance::Lexicon => self.lexicon_hits += 1,
                    Provenance::Model => self.model_words += 1,
                    Provenance::Echo => self.echo_count += 1,
                    _ => {}
                }
            }
        }
    }
}

/// Result of one batch line.
pub type LineResult = std::result::Result<(String, TraceRecord), String>;

/// Translates every line; a failing line yields its error message and does
/// not stop the batch.
pub fn run_lines<S: AsRef<str>>(
    pipeline: &Pipeline,
    lines: &[S],
) -> (Vec<LineResult>, BatchSummary) {
    let mut summary = BatchSummary::default();
    let results = lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            summary.lines += 1;
            match pipeline.translate(line.as_ref()) {
                Ok((out, trace)) => {
                    summary.add(&trace);
                    Ok((out, trace))
                }
                Err(e) => {
                    log::error!("line {}: {e}", i + 1);
                    summary.failed += 1;
                    Err(e.to_string())
                }
            }
        })
        .collect();
    (results, summary)
}

/// Line-aligned batch translation. Failed lines are written empty; with
/// `trace` set, one JSON record per input line is written there.
pub fn run_batch(
    pipeline: &Pipeline,
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    trace: Option<&Path>,
) -> Result<BatchSummary> {
    let lines = read_lines(input.as_ref())?;
    let (results, summary) = run_lines(pipeline, &lines);
    write_results(&results, output.as_ref(), trace)?;
    Ok(summary)
}

pub fn write_results(results: &[LineResult], output: &Path, trace: Option<&Path>) -> Result<()> {
    let mut out = String::new();
    for r in results {
        if let Ok((text, _)) = r {
            out.push_str(text);
        }
        out.push('\n');
    }
    crate::text::write_file(output, out)?;
    if let Some(path) = trace {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_trace(results, &mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// One JSON object per line; failed lines become `{"line": n, "error": ..}`.
pub fn write_trace<W: Write>(results: &[LineResult], w: &mut W) -> std::io::Result<()> {
    for (i, r) in results.iter().enumerate() {
        let line = match r {
            Ok((_, t)) => serde_json::to_string(t)?,
            Err(msg) => serde_json::json!({ "line": i + 1, "error": msg }).to_string(),
        };
        writeln!(w, "{line}")?;
    }
    Ok(())
}
