use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use codemix_core::eval::{evaluate_corpus, EvalReport};
use codemix_core::mt::{train_mt, MtTrainSpec};
use codemix_core::neural::harness::{seq2seq_gradcheck, tagger_gradcheck};
use codemix_core::pipeline::{
    run_lines, write_results, write_trace, Mode, Pipeline, PipelineConfig,
};
use codemix_core::reorder::build_lm;
use codemix_core::tagger::{train_tagger, TaggerTrainSpec};
use codemix_core::text::{load_parallel_corpus, load_tagged_words, read_tsv_pairs, tokenize};
use codemix_core::translit::{train_translit, ParallelLexicon, TranslitTrainSpec};
use codemix_core::Error;

const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(
    name = "codemix",
    version,
    about = "Translate code-mixed Bengali-English text into Bengali"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the word-level language tagger.
    TrainTagger(TrainTaggerArgs),
    /// Train the back-transliteration model on BN_TRANS.
    TrainTranslit(TrainTranslitArgs),
    /// Train the English-to-Bengali translation model.
    TrainMt(TrainMtArgs),
    /// Build an n-gram language model from a sentence-per-line corpus.
    BuildLm(BuildLmArgs),
    /// Translate sentences from a file or stdin.
    Translate(TranslateArgs),
    /// Score hypotheses against references with BLEU and TER.
    Evaluate(EvaluateArgs),
    /// Print the per-stage record for one sentence.
    Trace(TraceArgs),
    /// Compare analytic and numeric gradients on the reference architectures.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainCommon {
    /// JSON file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct TrainTaggerArgs {
    /// word<TAB>tag file.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: TrainCommon,
    #[arg(long)]
    threshold: Option<f64>,
    /// Stop once training accuracy reaches this fraction.
    #[arg(long)]
    stop_at_accuracy: Option<f64>,
}

#[derive(Args)]
struct Seq2SeqFlags {
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    attention: Option<bool>,
    /// Stop once training exact match reaches this fraction.
    #[arg(long)]
    stop_at_exact_match: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
}

#[derive(Args)]
struct TrainTranslitArgs {
    /// ITRANS<TAB>native lexicon.
    #[arg(long)]
    bn_trans: PathBuf,
    #[command(flatten)]
    common: TrainCommon,
    #[command(flatten)]
    s2s: Seq2SeqFlags,
}

#[derive(Args)]
struct TrainMtArgs {
    /// English<TAB>Bengali parallel corpus.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    common: TrainCommon,
    #[command(flatten)]
    s2s: Seq2SeqFlags,
    #[arg(long)]
    max_chars: Option<usize>,
}

#[derive(Args)]
struct BuildLmArgs {
    /// One sentence per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(3..=3))]
    order: u8,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON pipeline configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tagger_model: Option<PathBuf>,
    /// word<TAB>tag file used in place of the tagger model.
    #[arg(long)]
    gold_tags: Option<PathBuf>,
    #[arg(long)]
    translit_model: Option<PathBuf>,
    #[arg(long)]
    mt_model: Option<PathBuf>,
    #[arg(long)]
    pl: Option<PathBuf>,
    #[arg(long)]
    bn_trans: Option<PathBuf>,
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Input file; stdin when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write one JSON trace record per input line here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    sentence: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    r#ref: PathBuf,
    /// File of 1-based line numbers to score, one per line.
    #[arg(long)]
    ids: Option<PathBuf>,
    /// Also write the full report, per-sentence scores included, as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Data(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&raw).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn train_tagger_cmd(args: TrainTaggerArgs) -> CliResult {
    let c = &args.common;
    let mut spec: TaggerTrainSpec = read_config(c.config.as_deref())?;
    if let Some(v) = c.seed {
        spec.seed = v;
    }
    if let Some(v) = c.epochs {
        spec.epochs = v;
    }
    if let Some(v) = c.batch_size {
        spec.batch_size = v;
    }
    if let Some(v) = c.lr {
        spec.learning_rate = v;
    }
    if let Some(v) = args.threshold {
        spec.threshold = v;
    }
    if args.stop_at_accuracy.is_some() {
        spec.stop_at_accuracy = args.stop_at_accuracy;
    }
    let words = load_tagged_words(&args.data)?;
    let t = train_tagger(&words, &spec)?;
    t.model.save(&c.out, spec.seed, Some(spec.train_config()))?;
    println!(
        "words {} (dropped {}), epochs {}, final loss {:.6}, train accuracy {:.4}",
        t.words_used,
        t.dropped_words,
        t.report.loss_curve.len(),
        t.report.loss_curve.last().copied().unwrap_or(f64::NAN),
        t.train_accuracy
    );
    Ok(())
}

macro_rules! apply_s2s_flags {
    ($spec:expr, $common:expr, $s2s:expr) => {{
        if let Some(v) = $common.seed {
            $spec.seed = v;
        }
        if let Some(v) = $common.epochs {
            $spec.epochs = v;
        }
        if let Some(v) = $common.batch_size {
            $spec.batch_size = v;
        }
        if let Some(v) = $common.lr {
            $spec.optimizer = $spec.optimizer.with_learning_rate(v);
        }
        if let Some(v) = $s2s.hidden {
            $spec.hidden = v;
        }
        if let Some(v) = $s2s.attention {
            $spec.attention = v;
        }
        if $s2s.stop_at_exact_match.is_some() {
            $spec.stop_at_exact_match = $s2s.stop_at_exact_match;
        }
        if $s2s.clip_norm.is_some() {
            $spec.clip_norm = $s2s.clip_norm;
        }
    }};
}

fn train_translit_cmd(args: TrainTranslitArgs) -> CliResult {
    let mut spec: TranslitTrainSpec = read_config(args.common.config.as_deref())?;
    apply_s2s_flags!(spec, args.common, args.s2s);
    let bn = ParallelLexicon::new(
        "BN_TRANS",
        "itrans->native",
        read_tsv_pairs(&args.bn_trans)?,
    )?;
    let t = train_translit(&bn, &spec)?;
    t.model
        .save(&args.common.out, spec.seed, Some(spec.train_config()))?;
    println!(
        "entries {}, epochs {}, final loss {:.6}, exact match {:.4}, per-char {:.4}",
        bn.len(),
        t.report.loss_curve.len(),
        t.report.loss_curve.last().copied().unwrap_or(f64::NAN),
        t.accuracy.sequence,
        t.accuracy.per_char
    );
    Ok(())
}

fn train_mt_cmd(args: TrainMtArgs) -> CliResult {
    let mut spec: MtTrainSpec = read_config(args.common.config.as_deref())?;
    apply_s2s_flags!(spec, args.common, args.s2s);
    if let Some(v) = args.max_chars {
        spec.max_chars = v;
    }
    let pairs = load_parallel_corpus(&args.data)?;
    let t = train_mt(&pairs, &spec)?;
    t.model
        .save(&args.common.out, spec.seed, Some(spec.train_config()))?;
    println!(
        "pairs {} (skipped {}), epochs {}, final loss {:.6}, exact match {:.4}, per-char {:.4}",
        pairs.len() - t.skipped,
        t.skipped,
        t.report.loss_curve.len(),
        t.report.loss_curve.last().copied().unwrap_or(f64::NAN),
        t.accuracy.sequence,
        t.accuracy.per_char
    );
    Ok(())
}

fn build_lm_cmd(args: BuildLmArgs) -> CliResult {
    let raw = std::fs::read_to_string(&args.corpus)
        .map_err(|e| Failure::Data(format!("{}: {e}", args.corpus.display())))?;
    let mut sentences = Vec::new();
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        sentences.push(
            tokenize(line)?
                .into_iter()
                .map(|t| t.surface)
                .collect::<Vec<_>>(),
        );
    }
    let lm = build_lm(&sentences, args.k)?;
    lm.save(&args.out)?;
    println!(
        "sentences {}, order {}, vocabulary {}, k {}",
        sentences.len(),
        args.order,
        lm.vocab_size(),
        args.k
    );
    Ok(())
}

fn load_pipeline(args: &PipelineArgs) -> CliResult<(Pipeline, PipelineConfig)> {
    let mut config = match &args.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            *slot = v.clone();
        }
    };
    if args.tagger_model.is_some() {
        config.gold_tags = None;
    }
    if args.gold_tags.is_some() {
        config.tagger_model = None;
    }
    set(&mut config.tagger_model, &args.tagger_model);
    set(&mut config.gold_tags, &args.gold_tags);
    set(&mut config.translit_model, &args.translit_model);
    set(&mut config.mt_model, &args.mt_model);
    set(&mut config.pl, &args.pl);
    set(&mut config.bn_trans, &args.bn_trans);
    set(&mut config.lm, &args.lm);
    if let Some(m) = args.mode {
        config.mode = m;
    }
    Ok((Pipeline::load(&config)?, config))
}

fn translate_cmd(args: TranslateArgs) -> CliResult {
    let (pipeline, config) = load_pipeline(&args.pipeline)?;
    let raw = match &args.input {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|e| Failure::Data(format!("stdin: {e}")))?;
            s
        }
    };
    let lines: Vec<&str> = raw.lines().collect();
    let (results, summary) = run_lines(&pipeline, &lines);
    if args.trace.is_none() && config.trace {
        write_trace(&results, &mut std::io::stderr().lock())
            .map_err(|e| Failure::Data(e.to_string()))?;
    }
    match &args.output {
        Some(p) => write_results(&results, p, args.trace.as_deref())?,
        None => {
            if let Some(t) = &args.trace {
                let io = |e: std::io::Error| Failure::Data(format!("{}: {e}", t.display()));
                let mut f = std::io::BufWriter::new(std::fs::File::create(t).map_err(io)?);
                write_trace(&results, &mut f)
                    .and_then(|_| f.flush())
                    .map_err(io)?;
            }
            let mut out = std::io::stdout().lock();
            for r in &results {
                let text = r.as_ref().map(|(t, _)| t.as_str()).unwrap_or("");
                writeln!(out, "{text}").map_err(|e| Failure::Data(e.to_string()))?;
            }
        }
    }
    eprintln!(
        "lines {}, failed {}, segments bn {} en {}, lexicon hit rate {}, echoes {}",
        summary.lines,
        summary.failed,
        summary.segments_bn,
        summary.segments_en,
        summary
            .lexicon_hit_rate()
            .map_or("n/a".to_string(), |r| format!("{r:.4}")),
        summary.echo_count
    );
    Ok(())
}

fn trace_cmd(args: TraceArgs) -> CliResult {
    let (pipeline, _) = load_pipeline(&args.pipeline)?;
    let (_, trace) = pipeline.translate(&args.sentence)?;
    let pretty = serde_json::to_string_pretty(&trace).map_err(|e| Failure::Data(e.to_string()))?;
    println!("{pretty}");
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> CliResult {
    let ids: Option<BTreeSet<String>> = match &args.ids {
        Some(p) => {
            let raw = std::fs::read_to_string(p)
                .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            Some(
                raw.lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
            )
        }
        None => None,
    };
    let report: EvalReport = evaluate_corpus(&args.hyp, &args.r#ref, ids.as_ref())?;
    println!("sentences {}", report.n_sentences);
    println!("BLEU {:.2}", report.bleu * 100.0);
    println!("TER {:.2}", report.ter * 100.0);
    if let Some(p) = &args.json {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Failure::Data(e.to_string()))?;
        std::fs::write(p, json + "\n")
            .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn gradcheck_cmd(args: GradcheckArgs) -> CliResult {
    let checks = [
        ("tagger 15-35-25-1", tagger_gradcheck(args.seed)?),
        (
            "seq2seq vocab 6, hidden 8, attention",
            seq2seq_gradcheck(args.seed)?,
        ),
    ];
    let mut ok = true;
    for (name, err) in checks {
        let pass = err <= GRADCHECK_TOLERANCE;
        ok &= pass;
        println!(
            "{name}: max relative error {err:.3e} {}",
            if pass { "ok" } else { "FAIL" }
        );
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Data(format!(
            "gradient error above {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CODEMIX_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainTagger(a) => train_tagger_cmd(a),
        Command::TrainTranslit(a) => train_translit_cmd(a),
        Command::TrainMt(a) => train_mt_cmd(a),
        Command::BuildLm(a) => build_lm_cmd(a),
        Command::Translate(a) => translate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Trace(a) => trace_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
