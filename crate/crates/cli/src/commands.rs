use std::collections::HashMap;
use std::fs;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use speechrag::checkpoint::Checkpoint;
use speechrag::corpus::{load_manifest, split, synth_corpus, write_manifest, Codebook, Corpus, SynthParams};
use speechrag::encoder::{ModelConfig, Retriever, Vocab, UNK};
use speechrag::index::{recall_at_k, write_jsonl, Index, QueryReport, SearchResult};
use speechrag::ragpipe::{
    build_index, corpus_wer, eval_generation, passage_embeddings, retrieve, run_pipeline, transcribe_all,
    CorruptionConfig, Generator, HttpGenerator, MockJudge, NoiseSpec, OracleGenerator, PassageView, PipelineMode,
    PipelineOptions, Representation, TemplateAsr, Trace,
};
use speechrag::training::{grad_check, mean_cosine, prepare_items, train_on_items, EpochLog};

use crate::config::RunConfig;
use crate::report::{fmt_metric, write_json, Reports, Table};
use crate::{Cli, Command, EmbedArgs, ModeArg, SplitArg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Splits {
    seed: u64,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

#[derive(Debug, Serialize)]
struct SynthReport {
    passages: usize,
    queries: usize,
    words: usize,
    vocabulary: usize,
    params: SynthParams,
}

#[derive(Debug, Serialize)]
struct EpochRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    train_passages: usize,
    val_passages: usize,
    epochs_run: usize,
    best_epoch: usize,
    best_val_loss: f64,
    optimizer_steps: u64,
    train_cosine: f64,
    val_cosine: f64,
    history: Vec<EpochRow>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingRow {
    id: String,
    embedding: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SearchRow<'a> {
    rank: usize,
    id: &'a str,
    score: f64,
}

#[derive(Debug, Serialize)]
struct CorruptRow<'a> {
    id: &'a str,
    reference: &'a str,
    hypothesis: &'a str,
}

#[derive(Debug, Serialize)]
struct ScoredTrace<'a> {
    #[serde(flatten)]
    trace: &'a Trace,
    gold: &'a str,
    exact_match: Option<u8>,
    correct: Option<u8>,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.set_seed(cli.seed.unwrap_or(cfg.seed));
    let args = match &cli.command {
        Command::Synth | Command::Split | Command::Train => serde_json::Value::Null,
        Command::Embed(a) | Command::Index(a) => serde_json::to_value(a)?,
        Command::Search(a) => serde_json::to_value(a)?,
        Command::EvalRetrieval(a) => {
            override_list(&mut cfg.k, &a.k);
            override_list(&mut cfg.corruption.target_wers, &a.target_wer);
            serde_json::to_value(a)?
        }
        Command::NoiseSweep(a) => {
            override_list(&mut cfg.snr_grid, &a.snr);
            override_list(&mut cfg.k, &a.k);
            serde_json::to_value(a)?
        }
        Command::Corrupt(a) => {
            override_list(&mut cfg.corruption.target_wers, &a.target_wer);
            serde_json::to_value(a)?
        }
        Command::EvalGeneration(a) => {
            override_list(&mut cfg.corruption.target_wers, &a.target_wer);
            if let Some(k) = a.top_k_context {
                cfg.top_k_context = k;
            }
            if let Some(url) = &a.generator_url {
                cfg.generator.url = Some(url.clone());
            }
            serde_json::to_value(a)?
        }
        Command::Gradcheck(a) => serde_json::to_value(a)?,
    };
    cfg.validate()?;
    let reports = Reports::open(&cfg)?;
    let name = command_name(&cli.command);
    reports.write_meta(name, args, &cfg)?;

    match &cli.command {
        Command::Synth => synth(&cfg, &reports),
        Command::Split => split_cmd(&cfg),
        Command::Train => train(&cfg, &reports),
        Command::Embed(a) => embed(&cfg, a),
        Command::Index(a) => index(&cfg, a),
        Command::Search(a) => search(&cfg, &reports, &a.index, a.k, &a.query),
        Command::EvalRetrieval(a) => eval_retrieval(&cfg, &reports, &a.mode, a.split),
        Command::NoiseSweep(a) => noise_sweep(&cfg, &reports, a.split),
        Command::Corrupt(a) => corrupt(&cfg, &reports, a.split),
        Command::EvalGeneration(a) => eval_gen(&cfg, &reports, &a.mode, a.split),
        Command::Gradcheck(a) => gradcheck(&cfg, &reports, a.probes, a.eps, a.threshold, a.passages),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth => "synth",
        Command::Split => "split",
        Command::Train => "train",
        Command::Embed(_) => "embed",
        Command::Index(_) => "index",
        Command::Search(_) => "search",
        Command::EvalRetrieval(_) => "eval-retrieval",
        Command::NoiseSweep(_) => "noise-sweep",
        Command::Corrupt(_) => "corrupt",
        Command::EvalGeneration(_) => "eval-generation",
        Command::Gradcheck(_) => "gradcheck",
    }
}

fn override_list<T: Clone>(target: &mut Vec<T>, value: &Option<Vec<T>>) {
    if let Some(v) = value {
        *target = v.clone();
    }
}

fn synth(cfg: &RunConfig, reports: &Reports) -> Result<()> {
    let corpus = synth_corpus(&cfg.synth)?;
    let manifest = cfg.manifest_path();
    fs::create_dir_all(cfg.corpus_dir())?;
    write_manifest(&corpus, &manifest)?;
    let report = SynthReport {
        passages: corpus.passages().len(),
        queries: corpus.queries().len(),
        words: corpus.word_count(),
        vocabulary: corpus_vocab(&corpus).len() - 1,
        params: cfg.synth.clone(),
    };
    reports.json("synth.json", &report)?;
    println!(
        "wrote {} passages ({} words) to {}",
        report.passages,
        report.words,
        manifest.display()
    );
    Ok(())
}

fn split_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let (train, val, test) = split(&corpus, cfg.split.train, cfg.split.val, cfg.seed)?;
    let ids = |c: &Corpus| c.passage_ids().iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let splits = Splits {
        seed: cfg.seed,
        train: ids(&train),
        val: ids(&val),
        test: ids(&test),
    };
    write_json(&cfg.splits_path(), &splits)?;
    println!(
        "train {} / val {} / test {} -> {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        cfg.splits_path().display()
    );
    Ok(())
}

fn train(cfg: &RunConfig, reports: &Reports) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let train_set = select(cfg, &corpus, SplitArg::Train)?;
    let val_set = select(cfg, &corpus, SplitArg::Val)?;
    let model = Retriever::new(corpus_vocab(&corpus), cfg.model.clone(), cfg.features.clone(), cfg.seed)?;
    let train_items = prepare_items(&model, &train_set)?;
    let val_items = prepare_items(&model, &val_set)?;

    let mut log: Vec<EpochLog> = Vec::new();
    let mut on_epoch = |e: &EpochLog| {
        eprintln!("epoch {:>4}  train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
        log.push(e.clone());
    };
    let outcome = train_on_items(model, &train_items, &val_items, &cfg.train, &mut on_epoch)?;

    fs::create_dir_all(cfg.checkpoint_dir())?;
    write_jsonl(cfg.checkpoint_dir().join("train_log.jsonl"), &log)?;
    Checkpoint::from_outcome(&outcome, &cfg.train).save(cfg.checkpoint_path())?;

    let report = TrainReport {
        train_passages: train_items.len(),
        val_passages: val_items.len(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_loss: outcome.best_val_loss,
        optimizer_steps: outcome.optimizer_steps,
        train_cosine: mean_cosine(&outcome.model, &train_items)?,
        val_cosine: mean_cosine(&outcome.model, &val_items)?,
        history: outcome
            .history
            .iter()
            .map(|e| EpochRow {
                epoch: e.epoch,
                train_loss: e.train_loss,
                val_loss: e.val_loss,
            })
            .collect(),
    };
    reports.json("train.json", &report)?;
    println!(
        "best epoch {} of {}: train cosine {:.4}, val cosine {:.4} -> {}",
        report.best_epoch,
        report.epochs_run,
        report.train_cosine,
        report.val_cosine,
        cfg.checkpoint_path().display()
    );
    Ok(())
}

fn embed(cfg: &RunConfig, a: &EmbedArgs) -> Result<()> {
    let corpus = select(cfg, &load_corpus(cfg)?, a.split)?;
    let model = load_model(cfg)?;
    let mode = PipelineMode::from(a.mode);
    let wer = artifact_wer(cfg, mode, a.target_wer)?;
    let view = passage_view(cfg, &corpus, &model, wer)?;
    let noise = noise_for(cfg, mode, a.snr)?;
    let embeddings = passage_embeddings(&corpus, &view, &model, mode.representation(), noise)?;
    let rows: Vec<EmbeddingRow> = view
        .ids
        .iter()
        .zip(embeddings)
        .map(|(id, e)| EmbeddingRow {
            id: id.clone(),
            embedding: e.to_vec(),
        })
        .collect();
    fs::create_dir_all(cfg.index_dir())?;
    let path = cfg.index_dir().join(format!("{}.embeddings.jsonl", artifact_name(a.split, mode, wer, a.snr)));
    write_jsonl(&path, &rows)?;
    println!("wrote {} embeddings to {}", rows.len(), path.display());
    Ok(())
}

fn index(cfg: &RunConfig, a: &EmbedArgs) -> Result<()> {
    let mode = PipelineMode::from(a.mode);
    let wer = artifact_wer(cfg, mode, a.target_wer)?;
    let name = artifact_name(a.split, mode, wer, a.snr);
    let source = cfg.index_dir().join(format!("{name}.embeddings.jsonl"));
    let text = fs::read_to_string(&source)
        .with_context(|| format!("reading {} (run `speechrag embed` first)", source.display()))?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<EmbeddingRow>(l).with_context(|| format!("parsing {}", source.display())))
        .collect::<Result<Vec<_>>>()?;
    let index = Index::build(rows.into_iter().map(|r| (r.id, r.embedding.into())))?;
    let path = cfg.index_dir().join(format!("{name}.idx"));
    index.save(&path)?;
    println!("indexed {} vectors of dim {} -> {}", index.len(), index.dim(), path.display());
    Ok(())
}

fn search(cfg: &RunConfig, reports: &Reports, a: &EmbedArgs, k: usize, query: &str) -> Result<()> {
    let mode = PipelineMode::from(a.mode);
    let wer = artifact_wer(cfg, mode, a.target_wer)?;
    let path = cfg.index_dir().join(format!("{}.idx", artifact_name(a.split, mode, wer, a.snr)));
    let index = Index::load(&path).with_context(|| format!("loading {} (run `speechrag index` first)", path.display()))?;
    let model = load_model(cfg)?;
    let hits = index.search(&model.embed_text(query)?, k)?;
    let rows: Vec<SearchRow> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| SearchRow {
            rank: i + 1,
            id: &h.id,
            score: h.score,
        })
        .collect();
    for r in &rows {
        println!("{}", serde_json::to_string(r)?);
    }
    reports.jsonl("search.jsonl", &rows)
}

fn eval_retrieval(cfg: &RunConfig, reports: &Reports, modes: &[ModeArg], which: SplitArg) -> Result<()> {
    let corpus = select(cfg, &load_corpus(cfg)?, which)?;
    let model = load_model(cfg)?;
    let qrels = corpus.qrels();
    let k_max = *cfg.k.last().expect("validated non-empty");
    let mut table = Table::new(retrieval_header(cfg));

    for &m in modes {
        let mode = PipelineMode::from(m);
        let wers: Vec<Option<f64>> = if mode == PipelineMode::FullyCascaded {
            cfg.corruption.target_wers.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for wer in wers {
            let view = passage_view(cfg, &corpus, &model, wer)?;
            let index = build_index(&corpus, &view, &model, mode.representation(), None)?;
            let results = retrieve(&corpus, &model, &index.index, k_max)?;
            let per_query = query_reports(&corpus, &results);
            reports.jsonl(&format!("eval_retrieval_{}.jsonl", report_name(mode, wer)), &per_query)?;
            table.push(retrieval_row(cfg, mode, wer, &results, &qrels)?);
        }
    }
    reports.csv("eval_retrieval.csv", &table)?;
    println!("{}", table.render());
    Ok(())
}

fn noise_sweep(cfg: &RunConfig, reports: &Reports, which: SplitArg) -> Result<()> {
    let corpus = select(cfg, &load_corpus(cfg)?, which)?;
    let model = load_model(cfg)?;
    let qrels = corpus.qrels();
    let k_max = *cfg.k.last().expect("validated non-empty");
    let asr = TemplateAsr::new(&Codebook::for_params(&cfg.synth), &model.features)?;
    let clean = PassageView::new(&corpus, None)?;
    let mut table = Table::new(
        ["snr_db", "mode", "asr_wer"]
            .into_iter()
            .map(String::from)
            .chain(cfg.k.iter().map(|k| format!("recall@{k}"))),
    );

    for &snr in &cfg.snr_grid {
        let noise = NoiseSpec { snr_db: snr, seed: cfg.seed };
        let speech = build_index(&corpus, &clean, &model, Representation::Speech, Some(noise))?;
        let results = retrieve(&corpus, &model, &speech.index, k_max)?;
        table.push(sweep_row(cfg, snr, PipelineMode::SpeechRag, None, &results, &qrels)?);

        let transcripts = transcribe_all(&asr, &corpus, Some(noise))?;
        let asr_wer = corpus_wer(
            clean
                .ground_truth
                .iter()
                .map(String::as_str)
                .zip(transcripts.iter().map(String::as_str)),
        )?;
        let view = PassageView {
            transcripts,
            ..clean.clone()
        };
        let cascaded = build_index(&corpus, &view, &model, Representation::Transcript, None)?;
        let results = retrieve(&corpus, &model, &cascaded.index, k_max)?;
        table.push(sweep_row(cfg, snr, PipelineMode::FullyCascaded, Some(asr_wer), &results, &qrels)?);
    }
    reports.csv("noise_sweep.csv", &table)?;
    println!("{}", table.render());
    Ok(())
}

fn corrupt(cfg: &RunConfig, reports: &Reports, which: SplitArg) -> Result<()> {
    let full = load_corpus(cfg)?;
    let corpus = select(cfg, &full, which)?;
    let vocab = corpus_vocab(&full);
    let mut table = Table::new(["target_wer", "achieved_wer", "passages", "reference_words"]);
    for &target in &cfg.corruption.target_wers {
        let view = PassageView::new(&corpus, Some(&corruption_config(cfg, &vocab, target)))?;
        let rows: Vec<CorruptRow> = view
            .ids
            .iter()
            .zip(&view.ground_truth)
            .zip(&view.transcripts)
            .map(|((id, r), h)| CorruptRow {
                id,
                reference: r,
                hypothesis: h,
            })
            .collect();
        reports.jsonl(&format!("corrupt_wer{target}.jsonl"), &rows)?;
        let achieved = corpus_wer(rows.iter().map(|r| (r.reference, r.hypothesis)))?;
        table.push(vec![
            target.to_string(),
            fmt_metric(achieved),
            rows.len().to_string(),
            corpus.word_count().to_string(),
        ]);
    }
    reports.csv("corrupt.csv", &table)?;
    println!("{}", table.render());
    Ok(())
}

fn eval_gen(cfg: &RunConfig, reports: &Reports, modes: &[ModeArg], which: SplitArg) -> Result<()> {
    let corpus = select(cfg, &load_corpus(cfg)?, which)?;
    let model = load_model(cfg)?;
    let generator: Box<dyn Generator> = match &cfg.generator.url {
        Some(url) => Box::new(HttpGenerator::new(
            url.clone(),
            Duration::from_secs_f64(cfg.generator.timeout_s),
            cfg.generator.concurrency,
        )?),
        None => Box::new(OracleGenerator::from_corpus(&corpus)),
    };
    let opts = PipelineOptions {
        top_k_context: cfg.top_k_context,
        ..Default::default()
    };
    let golds: Vec<String> = corpus.queries().iter().map(|q| q.gold_answer.clone()).collect();
    let mut table = Table::new([
        "mode",
        "target_wer",
        "exact_match",
        "correctness",
        "queries",
        "generation_failures",
        "judge_failures",
    ]);

    for &m in modes {
        let mode = PipelineMode::from(m);
        let wers: Vec<Option<f64>> = match mode {
            PipelineMode::FullyCascaded | PipelineMode::SemiCascaded => {
                cfg.corruption.target_wers.iter().copied().map(Some).collect()
            }
            _ => vec![None],
        };
        for wer in wers {
            let view = passage_view(cfg, &corpus, &model, wer)?;
            let index = build_index(&corpus, &view, &model, mode.representation(), None)?;
            let traces = run_pipeline(&corpus, mode, &model, &index, &view, &opts, generator.as_ref())?;
            let report = eval_generation(&traces, &golds, &MockJudge::default());
            let scored: Vec<ScoredTrace> = traces
                .iter()
                .zip(&report.rows)
                .map(|(t, r)| ScoredTrace {
                    trace: t,
                    gold: &r.gold,
                    exact_match: r.exact_match,
                    correct: r.correct,
                })
                .collect();
            reports.jsonl(&format!("generation_{}.jsonl", report_name(mode, wer)), &scored)?;
            table.push(vec![
                mode.to_string(),
                wer.map(|w| w.to_string()).unwrap_or_default(),
                fmt_metric(report.exact_match),
                fmt_metric(report.correctness),
                report.queries.to_string(),
                report.generation_failures.to_string(),
                report.judge_failures.to_string(),
            ]);
        }
    }
    reports.csv("eval_generation.csv", &table)?;
    println!("{}", table.render());
    Ok(())
}

fn gradcheck(
    cfg: &RunConfig,
    reports: &Reports,
    probes: usize,
    eps: f64,
    threshold: f64,
    passages: usize,
) -> Result<()> {
    let params = SynthParams {
        n_passages: passages,
        ..cfg.synth.clone()
    };
    let corpus = synth_corpus(&params)?;
    // A zero projection would leave every encoder gradient at exactly zero.
    let model_cfg = ModelConfig {
        adapter_gain: if cfg.model.adapter_gain > 0.0 { cfg.model.adapter_gain } else { 1.0 },
        ..cfg.model.clone()
    };
    let model = Retriever::new(corpus_vocab(&corpus), model_cfg, cfg.features.clone(), cfg.seed)?;
    let items = prepare_items(&model, &corpus)?;
    let report = grad_check(&model, &items, probes, eps, cfg.seed)?;
    reports.json("gradcheck.json", &report)?;
    for t in &report.tensors {
        println!("{:<24} probes {:>3}  max rel error {:.3e}", t.name, t.probes, t.max_rel_error);
    }
    let pass = report.max_rel_error <= threshold;
    println!(
        "max relative error {:.3e} (threshold {threshold:e}): {}",
        report.max_rel_error,
        if pass { "PASS" } else { "FAIL" }
    );
    if !pass {
        bail!("gradient check failed");
    }
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let path = cfg.manifest_path();
    load_manifest(&path).with_context(|| format!("loading {} (run `speechrag synth` first)", path.display()))
}

fn select(cfg: &RunConfig, corpus: &Corpus, which: SplitArg) -> Result<Corpus> {
    if which == SplitArg::All {
        return Ok(corpus.clone());
    }
    let path = cfg.splits_path();
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {} (run `speechrag split` first)", path.display()))?;
    let splits: Splits = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let ids = match which {
        SplitArg::Train => &splits.train,
        SplitArg::Val => &splits.val,
        SplitArg::Test => &splits.test,
        SplitArg::All => unreachable!(),
    };
    if ids.is_empty() {
        bail!("split {which:?} is empty");
    }
    Ok(corpus.select(ids)?)
}

fn load_model(cfg: &RunConfig) -> Result<Retriever> {
    let path = cfg.checkpoint_path();
    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {} (run `speechrag train` first)", path.display()))?;
    Ok(ckpt.to_retriever()?)
}

fn corpus_vocab(corpus: &Corpus) -> Vocab {
    Vocab::from_texts(corpus.passages().iter().map(|p| p.transcript.as_str()))
}

fn corruption_config(cfg: &RunConfig, vocab: &Vocab, target: f64) -> CorruptionConfig {
    CorruptionConfig {
        mix: cfg.corruption.mix,
        ..CorruptionConfig::new(
            target,
            vocab.tokens().iter().filter(|t| t.as_str() != UNK).cloned().collect(),
            cfg.seed,
        )
    }
}

fn passage_view(cfg: &RunConfig, corpus: &Corpus, model: &Retriever, wer: Option<f64>) -> Result<PassageView> {
    let corruption = wer.map(|w| corruption_config(cfg, &model.vocab, w));
    Ok(PassageView::new(corpus, corruption.as_ref())?)
}

/// Transcript WER an artifact is built at: only the transcript-based modes have one.
fn artifact_wer(cfg: &RunConfig, mode: PipelineMode, requested: Option<f64>) -> Result<Option<f64>> {
    if mode.representation() != Representation::Transcript {
        if requested.is_some() {
            bail!("--target-wer applies to the cascaded mode only");
        }
        return Ok(None);
    }
    match requested.or_else(|| cfg.corruption.target_wers.first().copied()) {
        Some(w) => Ok(Some(w)),
        None => bail!("no target WER configured for the cascaded mode"),
    }
}

fn noise_for(cfg: &RunConfig, mode: PipelineMode, snr: Option<f64>) -> Result<Option<NoiseSpec>> {
    match snr {
        Some(_) if mode.representation() != Representation::Speech => bail!("--snr applies to speech modes only"),
        Some(s) => Ok(Some(NoiseSpec { snr_db: s, seed: cfg.seed })),
        None => Ok(None),
    }
}

/// File stem of embeddings and indexes; the speech modes share one.
fn artifact_name(which: SplitArg, mode: PipelineMode, wer: Option<f64>, snr: Option<f64>) -> String {
    let rep = match mode.representation() {
        Representation::Speech => "speech",
        Representation::Transcript => "transcript",
        Representation::GroundTruth => "ground_truth",
    };
    let mut name = format!("{}_{rep}", split_name(which));
    if let Some(w) = wer {
        name.push_str(&format!("_wer{w}"));
    }
    if let Some(s) = snr {
        name.push_str(&format!("_snr{s}"));
    }
    name
}

fn split_name(which: SplitArg) -> &'static str {
    match which {
        SplitArg::Train => "train",
        SplitArg::Val => "val",
        SplitArg::Test => "test",
        SplitArg::All => "all",
    }
}

fn report_name(mode: PipelineMode, wer: Option<f64>) -> String {
    match wer {
        Some(w) => format!("{mode}_wer{w}"),
        None => mode.to_string(),
    }
}

fn retrieval_header(cfg: &RunConfig) -> Vec<String> {
    ["mode", "target_wer"]
        .into_iter()
        .map(String::from)
        .chain(cfg.k.iter().map(|k| format!("recall@{k}")))
        .collect()
}

fn recalls(cfg: &RunConfig, results: &[SearchResult], qrels: &HashMap<usize, String>) -> Result<Vec<String>> {
    cfg.k
        .iter()
        .map(|&k| Ok(fmt_metric(recall_at_k(results, qrels, k)?)))
        .collect()
}

fn retrieval_row(
    cfg: &RunConfig,
    mode: PipelineMode,
    wer: Option<f64>,
    results: &[SearchResult],
    qrels: &HashMap<usize, String>,
) -> Result<Vec<String>> {
    let mut row = vec![mode.to_string(), wer.map(|w| w.to_string()).unwrap_or_default()];
    row.extend(recalls(cfg, results, qrels)?);
    Ok(row)
}

fn sweep_row(
    cfg: &RunConfig,
    snr: f64,
    mode: PipelineMode,
    asr_wer: Option<f64>,
    results: &[SearchResult],
    qrels: &HashMap<usize, String>,
) -> Result<Vec<String>> {
    let mut row = vec![
        snr.to_string(),
        mode.to_string(),
        asr_wer.map(fmt_metric).unwrap_or_default(),
    ];
    row.extend(recalls(cfg, results, qrels)?);
    Ok(row)
}

fn query_reports(corpus: &Corpus, results: &[SearchResult]) -> Vec<QueryReport> {
    corpus
        .queries()
        .iter()
        .zip(results)
        .enumerate()
        .map(|(i, (q, r))| QueryReport::new(i, &q.text, &q.relevant_passage_id, r))
        .collect()
}
