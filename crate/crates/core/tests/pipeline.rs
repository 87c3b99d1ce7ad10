use std::fs;
use std::path::{Path, PathBuf};

use slicelm::encode::{EmbeddingTable, EncoderConfig};
use slicelm::graph::{read_mrp_file, write_mrp_file, Edge, LabelVocabulary};
use slicelm::neural::{quick_eval, BaseLogits, ModelParams};
use slicelm::pipeline::{
    encode_corpus, prepare_graphs, run_pipeline, slice_corpus, write_synth_dataset, PipelineConfig, SynthOptions,
};
use slicelm::tokenize::{bbpe_tokenize, TokenizerTables};
use slicelm::Error;

fn small_dataset(dir: &Path) -> PathBuf {
    let opts = SynthOptions {
        seed: 4,
        train: 60,
        eval: 15,
        emb_dim: 16,
        ..Default::default()
    };
    write_synth_dataset(dir, &opts).unwrap()
}

fn small_config(path: &Path, extra: &[(&str, &str)]) -> PipelineConfig {
    let mut overrides: Vec<(String, String)> = [("hidden", "[32,16]"), ("epochs", "2")]
        .iter()
        .chain(extra)
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    overrides.push(("significance_rounds".into(), "50".into()));
    PipelineConfig::load(path, &overrides).unwrap()
}

#[test]
fn zero_learning_rate_reports_the_initialized_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_dataset(tmp.path());
    let cfg = small_config(&cfg_path, &[("lr", "0"), ("epochs", "1")]);
    let out = run_pipeline(&cfg).unwrap();

    let emb = EmbeddingTable::load(&cfg.embeddings).unwrap();
    let tables = TokenizerTables::load(&cfg.vocab, &cfg.merges).unwrap();
    let train = prepare_graphs(read_mrp_file(&cfg.train_graphs).unwrap()).unwrap();
    let eval = prepare_graphs(read_mrp_file(&cfg.eval_graphs).unwrap()).unwrap();
    let labels = LabelVocabulary::from_graphs(train.iter().chain(&eval));
    let enc = EncoderConfig::new(labels.len(), emb.dim());
    let corpus = encode_corpus(&slice_corpus(&eval, &tables).unwrap(), &enc, &labels).unwrap();
    let init = ModelParams::init(corpus.dim, &cfg.hidden, &emb, cfg.dropout, cfg.seed).unwrap();
    assert_eq!(out.params, init);

    let base = BaseLogits::load(cfg.base_logits.as_ref().unwrap()).unwrap();
    let (ppl, acc) = quick_eval(Some(&init), &corpus, Some(&base)).unwrap();
    assert_eq!(out.report.model.metrics.ppl, ppl);
    assert_eq!(out.report.model.metrics.accuracy, acc);
    assert_eq!(out.report.eval_tokens, corpus.token_count());
}

#[test]
fn cached_rerun_reproduces_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_dataset(tmp.path());
    let cfg = small_config(&cfg_path, &[]);
    let first = run_pipeline(&cfg).unwrap();
    assert!(first.manifest.stages.iter().all(|s| !s.reused));
    let report = fs::read(cfg.out_dir.join("report.json")).unwrap();
    let ckpt = fs::read(cfg.out_dir.join("model.ckpt")).unwrap();

    let second = run_pipeline(&cfg).unwrap();
    assert!(second.manifest.stages.iter().all(|s| s.reused));
    assert_eq!(second.report, first.report);
    assert_eq!(fs::read(cfg.out_dir.join("report.json")).unwrap(), report);
    assert_eq!(fs::read(cfg.out_dir.join("model.ckpt")).unwrap(), ckpt);

    // a perturbation touches only the stages downstream of ingest
    let shuffled = small_config(&cfg_path, &[("shuffle_anchors", "true"), ("perturb_phase", "\"test\"")]);
    let third = run_pipeline(&shuffled).unwrap();
    let reused: Vec<&str> = third
        .manifest
        .stages
        .iter()
        .filter(|s| s.reused)
        .map(|s| s.stage.as_str())
        .collect();
    assert_eq!(reused, ["ingest", "slice", "encode", "train"]);
    assert!(third.report.model.metrics.ppl > first.report.model.metrics.ppl);
}

#[test]
fn uncached_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_dataset(tmp.path());
    let a = small_config(&cfg_path, &[("out_dir", "a")]);
    let b = small_config(&cfg_path, &[("out_dir", "b")]);
    run_pipeline(&a).unwrap();
    run_pipeline(&b).unwrap();
    for f in ["report.json", "model.ckpt", "labels.json"] {
        assert_eq!(
            fs::read(a.out_dir.join(f)).unwrap(),
            fs::read(b.out_dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn ingest_errors_name_the_stage_and_sentence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_dataset(tmp.path());
    let cfg = small_config(&cfg_path, &[]);
    let clean = read_mrp_file(&cfg.train_graphs).unwrap();
    let bad = clean[3].id.clone();

    // a cycle parses but fails validation
    let mut graphs = clean.clone();
    let e = graphs[3].edges[0].clone();
    graphs[3].edges.push(Edge::new(e.target, e.source, "x"));
    write_mrp_file(&cfg.train_graphs, &graphs).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, sentence, .. } => {
            assert_eq!(*stage, "ingest");
            assert_eq!(sentence.as_deref(), Some(bad.as_str()));
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(!err.is_config());

    // a dangling edge is rejected while parsing
    let mut graphs = clean;
    let first = graphs[3].nodes[0].id;
    graphs[3].edges.push(Edge::new(first, 9999, "x"));
    write_mrp_file(&cfg.train_graphs, &graphs).unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "ingest", .. }));
    assert!(err.to_string().contains(&format!("graph {bad}")), "{err}");
}

#[test]
fn config_errors_are_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = small_dataset(tmp.path());
    let unknown = PipelineConfig::load(&cfg_path, &[("epochz".into(), "3".into())]).unwrap_err();
    assert!(unknown.is_config());
    let cfg = small_config(&cfg_path, &[("hidden", "[32,8]")]);
    assert!(run_pipeline(&cfg).unwrap_err().is_config());
    let cfg = small_config(&cfg_path, &[("vocab", "missing.json")]);
    assert!(run_pipeline(&cfg).unwrap_err().is_config());
}

#[test]
fn synthetic_dataset_files_parse_and_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(&small_dataset(tmp.path()), &[]);
    let tables = TokenizerTables::load(&cfg.vocab, &cfg.merges).unwrap();
    let emb = EmbeddingTable::load(&cfg.embeddings).unwrap();
    assert_eq!(tables.vocab_size(), emb.rows());
    assert!(tables.vocab_size() <= 200);

    let base_path = cfg.base_logits.clone().unwrap();
    let base = BaseLogits::load(&base_path).unwrap();
    assert_eq!(base.vocab(), emb.rows());
    let copy = tmp.path().join("copy.lgt");
    base.save(&copy).unwrap();
    assert_eq!(fs::read(&copy).unwrap(), fs::read(&base_path).unwrap());

    let mut rows = 0;
    for path in [&cfg.train_graphs, &cfg.eval_graphs] {
        for g in read_mrp_file(path).unwrap() {
            let n = bbpe_tokenize(&g.text, &tables).unwrap().tokens.len();
            assert_eq!(base.sentence(&g.id, n).unwrap().nrows(), n);
            rows += n;
        }
    }
    assert_eq!(base.rows_total(), rows);

    let dep = tmp.path().join("config.dep.json");
    let dep_cfg = PipelineConfig::load(&dep, &[]).unwrap();
    assert_eq!(read_mrp_file(&dep_cfg.eval_graphs).unwrap().len(), 15);
    let tags = fs::read_to_string(cfg.eval_tags.unwrap()).unwrap();
    assert_eq!(tags.lines().count(), 15);
}
