use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use codemix_core::eval::{
    bleu, bleu_stats, evaluate_corpus, fleiss_kappa, ter, BleuSmoothing, KappaTable,
};
use codemix_core::fixtures::{self, EXAMPLE_1, EXAMPLE_2, EXAMPLE_2_TEXT, OOV_WORDS, PL_ENTRIES};
use codemix_core::mt::MtModel;
use codemix_core::neural::harness::{seq2seq_gradcheck, tagger_gradcheck};
use codemix_core::pipeline::{run_lines, Pipeline, Route, TraceRecord};
use codemix_core::reorder::{build_lm, reorder, ReorderConfig};
use codemix_core::tagger::{GoldTagger, TaggerModel};
use codemix_core::text::{load_tagged_words, LangTag, Token};
use codemix_core::translit::{
    lexicon_lookup, train_translit, Provenance, TranslitModel, TranslitTrainSpec,
};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, format!("took {took:.2?}, limit {limit:?}"))
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let corpora: Vec<Vec<Vec<String>>> = vec![
        fixtures::MT_PAIRS.iter().map(|(_, t)| words(t)).collect(),
        fixtures::reorder_corpus(50, 3),
    ];
    for c in &corpora {
        let b = bleu(c, c, 4, BleuSmoothing::HalfCount).map_err(|e| e.to_string())?;
        check((b - 1.0).abs() <= 1e-9, format!("BLEU(x,x) = {b}"))?;
        for s in c {
            let (edits, rate) = ter(s, s).map_err(|e| e.to_string())?;
            check(edits == 0 && rate == 0.0, format!("TER(x,x) = {rate}"))?;
        }
    }
    let stats = bleu_stats(
        &[words("the the the the the the the")],
        &[words("the cat is on the mat")],
        4,
    )
    .map_err(|e| e.to_string())?;
    let p1 = stats.precision(1);
    check((p1 - 2.0 / 7.0).abs() < 1e-6, format!("p1 = {p1}"))?;
    let (edits, rate) = ter(&words("b a c d"), &words("a b c d")).map_err(|e| e.to_string())?;
    check(
        edits == 1 && (rate - 0.25).abs() < 1e-6,
        format!("shift case gave {edits} edits"),
    )?;
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "p1 {p1:.6}, shift case 1 edit, {:.2?}",
        start.elapsed()
    ))
}

fn kappa() -> Outcome {
    let start = Instant::now();
    let full = KappaTable::new(vec![vec![3, 0], vec![0, 3], vec![3, 0], vec![0, 3]])
        .map_err(|e| e.to_string())?;
    let k_full = fleiss_kappa(&full).map_err(|e| e.to_string())?;
    check(k_full == 1.0, format!("full agreement gave {k_full}"))?;
    let hand =
        KappaTable::from_ratings(&[vec!["A", "A"], vec!["A", "B"]]).map_err(|e| e.to_string())?;
    let k_hand = fleiss_kappa(&hand).map_err(|e| e.to_string())?;
    check(
        (k_hand + 1.0 / 3.0).abs() < 1e-9,
        format!("hand case gave {k_hand}"),
    )?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("full {k_full}, hand {k_hand:.9}"))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let tagger = tagger_gradcheck(0).map_err(|e| e.to_string())?;
    let s2s = seq2seq_gradcheck(0).map_err(|e| e.to_string())?;
    check(tagger <= 1e-5, format!("tagger error {tagger:e}"))?;
    check(s2s <= 1e-5, format!("seq2seq error {s2s:e}"))?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "tagger {tagger:.2e}, seq2seq {s2s:.2e}, {:.1?}",
        start.elapsed()
    ))
}

struct TrainRun {
    stdout: String,
    elapsed: Duration,
}

fn codemix(args: &[&str]) -> Result<TrainRun, String> {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_codemix"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(TrainRun {
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        elapsed: start.elapsed(),
    })
}

/// Value following `key` in a "key N," style summary line.
fn reported(stdout: &str, key: &str) -> Option<usize> {
    let rest = &stdout[stdout.find(&format!("{key} "))? + key.len() + 1..];
    rest.split(|c: char| !c.is_ascii_digit())
        .next()?
        .parse()
        .ok()
}

struct Trained {
    tagger: PathBuf,
    translit: PathBuf,
    mt: PathBuf,
    runs: Vec<(&'static str, TrainRun)>,
}

fn determinism(dir: &Path) -> (Outcome, Option<Trained>) {
    let jobs: [(&str, &str, &str, &str, &str); 3] = [
        (
            "tagger",
            "train-tagger",
            "--data",
            "tagger_words.tsv",
            "configs/tagger_toy.json",
        ),
        (
            "translit",
            "train-translit",
            "--bn-trans",
            "bn_trans.tsv",
            "configs/translit_toy.json",
        ),
        (
            "mt",
            "train-mt",
            "--data",
            "mt_pairs.tsv",
            "configs/mt_toy.json",
        ),
    ];
    let mut runs = Vec::new();
    let mut paths = Vec::new();
    for (name, cmd, flag, data, config) in jobs {
        let a = dir.join(format!("{name}.json"));
        let b = dir.join(format!("{name}.again.json"));
        let (data, config) = (fixture(data), fixture(config));
        for out in [&a, &b] {
            let args = [
                cmd,
                flag,
                data.to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ];
            match codemix(&args) {
                Ok(run) if out == &a => runs.push((name, run)),
                Ok(_) => {}
                Err(e) => return (Err(e), None),
            }
        }
        let (x, y) = (
            std::fs::read(&a).unwrap_or_default(),
            std::fs::read(&b).unwrap_or_default(),
        );
        if x.is_empty() || x != y {
            return (Err(format!("{name} model files differ")), None);
        }
        paths.push(a);
    }
    let total: Duration = runs.iter().map(|(_, r)| r.elapsed).sum();
    let trained = Trained {
        tagger: paths[0].clone(),
        translit: paths[1].clone(),
        mt: paths[2].clone(),
        runs,
    };
    (
        Ok(format!(
            "3 subcommands bit-identical across reruns, first runs {total:.1?}"
        )),
        Some(trained),
    )
}

fn overfit(trained: &Trained) -> Outcome {
    let mut detail = Vec::new();
    for (name, run) in &trained.runs {
        check(
            run.elapsed < Duration::from_secs(600),
            format!("{name} took {:.1?}", run.elapsed),
        )?;
        let epochs =
            reported(&run.stdout, "epochs").ok_or(format!("no epoch count in {:?}", run.stdout))?;
        let limit = if *name == "tagger" { 500 } else { 300 };
        check(epochs <= limit, format!("{name} ran {epochs} epochs"))?;
        let acc = match *name {
            "tagger" => {
                let model = TaggerModel::load(&trained.tagger).map_err(|e| e.to_string())?;
                let data =
                    load_tagged_words(fixture("tagger_words.tsv")).map_err(|e| e.to_string())?;
                check(
                    data.len() == 400,
                    format!("tagger fixture has {} words", data.len()),
                )?;
                let acc = model.accuracy(&data).map_err(|e| e.to_string())?;
                check(acc >= 0.99, format!("tagger accuracy {acc}"))?;
                acc
            }
            "translit" => {
                let model = TranslitModel::load(&trained.translit).map_err(|e| e.to_string())?;
                let lex = fixtures::bn_trans_lexicon().map_err(|e| e.to_string())?;
                check(
                    lex.len() == 20,
                    format!("translit fixture has {} pairs", lex.len()),
                )?;
                let acc = model.accuracy(&lex).map_err(|e| e.to_string())?.sequence;
                check(acc >= 0.95, format!("translit exact match {acc}"))?;
                acc
            }
            _ => {
                let model = MtModel::load(&trained.mt).map_err(|e| e.to_string())?;
                let pairs = fixtures::mt_pairs().map_err(|e| e.to_string())?;
                check(
                    pairs.len() == 20,
                    format!("mt fixture has {} pairs", pairs.len()),
                )?;
                let acc = model.accuracy(&pairs).map_err(|e| e.to_string())?.sequence;
                check(acc >= 0.95, format!("mt exact match {acc}"))?;
                acc
            }
        };
        detail.push(format!(
            "{name} {:.2}% in {epochs} epochs ({:.1?})",
            acc * 100.0,
            run.elapsed
        ));
    }
    Ok(detail.join(", "))
}

fn reorder_benchmark(dir: &Path) -> Outcome {
    let start = Instant::now();
    let corpus = fixtures::reorder_corpus(500, 11);
    let lm = build_lm(&corpus, 1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let config = ReorderConfig::default();
    let (mut restored, mut refs, mut scrambled_lines, mut reordered_lines) =
        (0, vec![], vec![], vec![]);
    for sentence in corpus.iter().take(200) {
        let mut scrambled = sentence.clone();
        fixtures::scramble_adjacent(&mut scrambled, &mut rng)
            .ok_or("sentence without a swappable pair")?;
        let tokens: Vec<Token> = scrambled.iter().map(|s| Token::new(s.clone())).collect();
        let out: Vec<String> = reorder(&lm, &tokens, &config)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|t| t.surface)
            .collect();
        let before = lm
            .sentence_score(&scrambled, 3)
            .map_err(|e| e.to_string())?;
        let after = lm.sentence_score(&out, 3).map_err(|e| e.to_string())?;
        check(
            after >= before,
            format!("score fell from {before} to {after} on {scrambled:?}"),
        )?;
        if &out == sentence {
            restored += 1;
        }
        refs.push(sentence.join(" "));
        scrambled_lines.push(scrambled.join(" "));
        reordered_lines.push(out.join(" "));
    }
    let write = |name: &str, lines: &[String]| {
        let p = dir.join(name);
        std::fs::write(&p, lines.join("\n") + "\n")
            .map(|_| p)
            .map_err(|e| e.to_string())
    };
    let ref_path = write("ref.txt", &refs)?;
    let scr = evaluate_corpus(write("scrambled.txt", &scrambled_lines)?, &ref_path, None)
        .map_err(|e| e.to_string())?;
    let reo = evaluate_corpus(write("reordered.txt", &reordered_lines)?, &ref_path, None)
        .map_err(|e| e.to_string())?;
    let rate = restored as f64 / 200.0;
    check(rate >= 0.6, format!("restored {restored}/200"))?;
    check(
        reo.bleu >= scr.bleu,
        format!("BLEU reordered {} < scrambled {}", reo.bleu, scr.bleu),
    )?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "restored {restored}/200, BLEU {:.2} -> {:.2}, TER {:.2} -> {:.2}, {:.2?}",
        scr.bleu * 100.0,
        reo.bleu * 100.0,
        scr.ter * 100.0,
        reo.ter * 100.0,
        start.elapsed()
    ))
}

fn gold_pipeline(
    trained: &Trained,
    translit: Option<TranslitModel>,
    tagger: GoldTagger,
) -> Result<Pipeline, String> {
    let mt = MtModel::load(&trained.mt).map_err(|e| e.to_string())?;
    let translit = match translit {
        Some(t) => t,
        None => TranslitModel::load(&trained.translit).map_err(|e| e.to_string())?,
    };
    Ok(Pipeline::new(
        Box::new(tagger),
        fixtures::pl_lexicon().map_err(|e| e.to_string())?,
        fixtures::bn_trans_lexicon().map_err(|e| e.to_string())?,
        Some(translit),
        Some(mt),
        None,
    ))
}

/// Bracketed groups of an annotated example as (tag, text).
fn groups(annotated: &str) -> Vec<(LangTag, String)> {
    annotated
        .split('(')
        .skip(1)
        .map(|part| {
            let (text, rest) = part.split_once(')').unwrap();
            (rest[..2].parse().unwrap(), text.to_string())
        })
        .collect()
}

fn check_partition(trace: &TraceRecord, annotated: &str) -> Result<(), String> {
    let expect = groups(annotated);
    check(
        trace.segments.len() == expect.len(),
        format!(
            "{} segments, expected {}",
            trace.segments.len(),
            expect.len()
        ),
    )?;
    for (seg, (tag, text)) in trace.segments.iter().zip(&expect) {
        let input = seg
            .input
            .trim_end_matches(|c: char| c.is_ascii_punctuation());
        check(
            seg.tag == *tag && input == text,
            format!("segment {:?} tagged {}", seg.input, seg.tag),
        )?;
        let route = if *tag == LangTag::Bn {
            Route::Transliterate
        } else {
            Route::Translate
        };
        check(
            seg.route == route,
            format!("segment {:?} took {:?}", seg.input, seg.route),
        )?;
    }
    let outputs: Vec<&str> = trace.segments.iter().map(|s| s.output.as_str()).collect();
    check(
        trace.joined == outputs.join(" "),
        format!(
            "joined {:?} is not the ordered segment outputs {outputs:?}",
            trace.joined
        ),
    )
}

fn pipeline_fidelity(trained: &Trained) -> Outcome {
    let start = Instant::now();
    let gold = load_tagged_words(fixture("gold_tags.tsv")).map_err(|e| e.to_string())?;
    let oov = OOV_WORDS.iter().map(|w| (w.to_string(), LangTag::Bn));
    let p = gold_pipeline(trained, None, GoldTagger::new(gold.into_iter().chain(oov)))?;

    let plain_1: String = groups(EXAMPLE_1)
        .into_iter()
        .map(|(_, t)| t)
        .collect::<Vec<_>>()
        .join(" ");
    let (_, t1) = p.translate(&plain_1).map_err(|e| e.to_string())?;
    check_partition(&t1, EXAMPLE_1)?;
    let (_, t2) = p.translate(EXAMPLE_2_TEXT).map_err(|e| e.to_string())?;
    check_partition(&t2, EXAMPLE_2)?;

    let (_, bn) = p.translate("ami khub bhalo").map_err(|e| e.to_string())?;
    check(
        bn.segments.len() == 1 && bn.segments[0].route == Route::Transliterate,
        "Bn-only input was not a single transliteration",
    )?;
    check(
        bn.segments[0]
            .words
            .iter()
            .all(|w| w.provenance != Provenance::Translation),
        "Bn-only input reached the translator",
    )?;
    let (_, en) = p.translate("I had to go").map_err(|e| e.to_string())?;
    check(
        en.segments.len() == 1 && en.segments[0].route == Route::Translate,
        "En-only input was not a single translation",
    )?;
    check(
        en.segments[0]
            .words
            .iter()
            .all(|w| w.provenance == Provenance::Translation),
        "En-only input reached the transliterator",
    )?;
    within(start, Duration::from_secs(10))?;
    Ok(format!(
        "example 1: {} segments, example 2: {} segments, monolingual inputs single-route, {:.2?}",
        t1.segments.len(),
        t2.segments.len(),
        start.elapsed()
    ))
}

fn routing(trained: &Trained) -> Outcome {
    let in_lex: Vec<&str> = PL_ENTRIES.iter().take(6).map(|(r, _)| *r).collect();
    let mixed: Vec<&str> = in_lex
        .iter()
        .zip(OOV_WORDS)
        .flat_map(|(a, b)| [*a, *b])
        .collect();
    let tagger = || GoldTagger::new(mixed.iter().map(|w| (*w, LangTag::Bn)));
    let sentence = mixed.join(" ");

    let other = train_translit(
        &fixtures::bn_trans_lexicon().map_err(|e| e.to_string())?,
        &TranslitTrainSpec {
            seed: 99,
            epochs: 3,
            hidden: 16,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?
    .model;

    let pl = fixtures::pl_lexicon().map_err(|e| e.to_string())?;
    let bn = fixtures::bn_trans_lexicon().map_err(|e| e.to_string())?;
    let mut per_model = Vec::new();
    for model in [None, Some(other)] {
        let p = gold_pipeline(trained, model, tagger())?;
        let (results, summary) = run_lines(&p, &[sentence.as_str()]);
        let (_, trace) = results[0].as_ref().map_err(|e| e.clone())?;
        let routed: Vec<_> = trace.segments.iter().flat_map(|s| s.words.iter()).collect();
        check(
            routed.len() == mixed.len(),
            format!("{} routed words for {} inputs", routed.len(), mixed.len()),
        )?;
        for (w, src) in routed.iter().zip(&mixed) {
            check(
                w.source == *src,
                format!("word {src:?} routed as {:?}", w.source),
            )?;
            let expect = if in_lex.contains(src) {
                Provenance::Lexicon
            } else {
                Provenance::Model
            };
            check(
                w.provenance == expect,
                format!("{src:?} labelled {}", w.provenance),
            )?;
            if expect == Provenance::Lexicon {
                check(
                    lexicon_lookup(src, &pl, &bn).as_deref() == Some(w.output.as_str()),
                    format!("{src:?} gave {:?}", w.output),
                )?;
            }
        }
        let rate = summary
            .lexicon_hit_rate()
            .ok_or("no Bengali words counted")?;
        check(rate == 0.5, format!("hit rate {rate}"))?;
        per_model.push(
            routed
                .iter()
                .filter(|w| w.provenance == Provenance::Lexicon)
                .map(|w| w.output.clone())
                .collect::<Vec<_>>(),
        );
    }
    check(
        per_model[0] == per_model[1],
        "in-lexicon outputs depend on the model",
    )?;
    Ok(format!(
        "{} words, hit rate 0.5, lexicon outputs identical under two models",
        mixed.len()
    ))
}

fn main() -> std::process::ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("metric oracles", metric_oracles()),
        ("fleiss kappa", kappa()),
        ("gradient check", gradients()),
    ];
    let (det, trained) = determinism(dir.path());
    results.push(("training determinism", det));
    let missing = || Err("training runs did not complete".to_string());
    results.push((
        "overfit gates",
        trained.as_ref().map_or_else(missing, overfit),
    ));
    results.push(("reorder benchmark", reorder_benchmark(dir.path())));
    results.push((
        "pipeline fidelity",
        trained.as_ref().map_or_else(missing, pipeline_fidelity),
    ));
    results.push((
        "transliteration routing",
        trained.as_ref().map_or_else(missing, routing),
    ));

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        std::process::ExitCode::SUCCESS
    } else {
        std::process::ExitCode::FAILURE
    }
}
