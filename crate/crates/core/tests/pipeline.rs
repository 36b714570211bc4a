use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use speechrag::corpus::{synth_corpus, Corpus, SynthParams};
use speechrag::dsp::FeatureConfig;
use speechrag::encoder::{ModelConfig, Retriever, Vocab, UNK};
use speechrag::index::recall_at_k;
use speechrag::ragpipe::{
    build_index, eval_generation, retrieve, run_pipeline, CorruptionConfig, HttpGenerator, MockJudge,
    OracleGenerator, PassageView, PipelineMode, PipelineOptions, Representation,
};
use speechrag::Error;

fn setup(n: usize) -> (Corpus, Retriever) {
    let corpus = synth_corpus(&SynthParams {
        n_passages: n,
        ..Default::default()
    })
    .unwrap();
    let vocab = Vocab::from_texts(corpus.passages().iter().map(|p| p.transcript.as_str()));
    let config = ModelConfig {
        hidden: 16,
        enc_dim: 12,
        adapter_gain: 1.0,
        ..Default::default()
    };
    let model = Retriever::new(vocab, config, FeatureConfig::default(), 3).unwrap();
    (corpus, model)
}

fn words(model: &Retriever) -> Vec<String> {
    model.vocab.tokens().iter().filter(|t| t.as_str() != UNK).cloned().collect()
}

#[test]
fn zero_wer_cascade_matches_ground_truth_traces() {
    let (corpus, model) = setup(12);
    let view = PassageView::new(&corpus, Some(&CorruptionConfig::new(0.0, words(&model), 9))).unwrap();
    assert_eq!(view.transcripts, view.ground_truth);
    let opts = PipelineOptions::default();
    let generator = OracleGenerator::from_corpus(&corpus);
    let gt = build_index(&corpus, &view, &model, Representation::GroundTruth, None).unwrap();
    let tr = build_index(&corpus, &view, &model, Representation::Transcript, None).unwrap();
    let a = run_pipeline(&corpus, PipelineMode::GtText, &model, &gt, &view, &opts, &generator).unwrap();
    let b = run_pipeline(&corpus, PipelineMode::FullyCascaded, &model, &tr, &view, &opts, &generator).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_exact_match_equals_recall() {
    let (corpus, model) = setup(24);
    let view = PassageView::new(&corpus, Some(&CorruptionConfig::new(0.4, words(&model), 2))).unwrap();
    let generator = OracleGenerator::from_corpus(&corpus);
    let golds: Vec<String> = corpus.queries().iter().map(|q| q.gold_answer.clone()).collect();
    for (mode, rep) in [
        (PipelineMode::GtText, Representation::GroundTruth),
        (PipelineMode::FullyCascaded, Representation::Transcript),
    ] {
        for k in [1, 3, 5] {
            let index = build_index(&corpus, &view, &model, rep, None).unwrap();
            let opts = PipelineOptions {
                top_k_context: k,
                ..Default::default()
            };
            let traces = run_pipeline(&corpus, mode, &model, &index, &view, &opts, &generator).unwrap();
            let em = eval_generation(&traces, &golds, &MockJudge::default()).exact_match;
            let results = retrieve(&corpus, &model, &index.index, k).unwrap();
            assert_eq!(em, recall_at_k(&results, &corpus.qrels(), k).unwrap(), "{mode} k={k}");
        }
    }
}

#[test]
fn speech_modes_retrieve_the_same_ids_with_different_contexts() {
    let (corpus, model) = setup(10);
    let view = PassageView::new(&corpus, Some(&CorruptionConfig::new(0.3, words(&model), 4))).unwrap();
    let index = build_index(&corpus, &view, &model, Representation::Speech, None).unwrap();
    let opts = PipelineOptions {
        top_k_context: 3,
        ..Default::default()
    };
    let generator = OracleGenerator::from_corpus(&corpus);
    let rag = run_pipeline(&corpus, PipelineMode::SpeechRag, &model, &index, &view, &opts, &generator).unwrap();
    let semi = run_pipeline(&corpus, PipelineMode::SemiCascaded, &model, &index, &view, &opts, &generator).unwrap();
    for (r, s) in rag.iter().zip(&semi) {
        assert_eq!(r.retrieved, s.retrieved);
        assert_eq!(r.contexts.len(), 3);
        assert!(r.contexts.iter().all(|c| c.starts_with("memory:")));
        assert!(s.contexts.iter().all(|c| view.transcripts.contains(c)));
    }
}

#[test]
fn index_of_the_wrong_representation_is_rejected() {
    let (corpus, model) = setup(4);
    let view = PassageView::new(&corpus, None).unwrap();
    let gt = build_index(&corpus, &view, &model, Representation::GroundTruth, None).unwrap();
    let generator = OracleGenerator::from_corpus(&corpus);
    let err = run_pipeline(
        &corpus,
        PipelineMode::SpeechRag,
        &model,
        &gt,
        &view,
        &PipelineOptions::default(),
        &generator,
    )
    .unwrap_err();
    assert!(matches!(err, Error::ModeMismatch(_)));
}

/// Answers every request with its first context, for `n` connections.
fn stub_server(n: usize) -> (String, thread::JoinHandle<Vec<serde_json::Value>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/generate", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for stream in listener.incoming().take(n) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let reply = serde_json::json!({ "answer": req["contexts"][0] }).to_string();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            seen.push(req);
        }
        seen
    });
    (url, handle)
}

#[test]
fn http_generator_speaks_the_wire_format() {
    let (corpus, model) = setup(3);
    let view = PassageView::new(&corpus, None).unwrap();
    let index = build_index(&corpus, &view, &model, Representation::GroundTruth, None).unwrap();
    let (url, server) = stub_server(corpus.queries().len());
    let generator = HttpGenerator::new(url, Duration::from_secs(10), 1).unwrap();
    let opts = PipelineOptions {
        top_k_context: 2,
        ..Default::default()
    };
    let traces = run_pipeline(&corpus, PipelineMode::GtText, &model, &index, &view, &opts, &generator).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(seen.len(), corpus.queries().len());
    for t in &traces {
        assert_eq!(t.error, None);
        assert_eq!(t.answer.as_deref(), Some(t.contexts[0].as_str()));
    }
    for req in &seen {
        assert_eq!(req["contexts"].as_array().unwrap().len(), 2);
        assert_eq!(req["context_ids"].as_array().unwrap().len(), 2);
        assert!(req["instruction"].as_str().is_some_and(|s| !s.is_empty()));
        assert!(req["query"].as_str().is_some_and(|s| !s.is_empty()));
    }
}

#[test]
fn unreachable_generator_is_recorded_per_query() {
    let (corpus, model) = setup(3);
    let view = PassageView::new(&corpus, None).unwrap();
    let index = build_index(&corpus, &view, &model, Representation::GroundTruth, None).unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let generator = HttpGenerator::new(format!("http://127.0.0.1:{port}/"), Duration::from_secs(2), 2).unwrap();
    let traces = run_pipeline(
        &corpus,
        PipelineMode::GtText,
        &model,
        &index,
        &view,
        &PipelineOptions::default(),
        &generator,
    )
    .unwrap();
    assert!(traces.iter().all(|t| t.answer.is_none() && t.error.is_some()));
    let golds: Vec<String> = corpus.queries().iter().map(|q| q.gold_answer.clone()).collect();
    let report = eval_generation(&traces, &golds, &MockJudge::default());
    assert_eq!(report.generation_failures, corpus.queries().len());
}
