//! End-to-end driver: ingest, tokenize and slice, encode, train, evaluate.
//!
//! Every stage writes its output under `<out_dir>/cache`, keyed by a SHA-256
//! over the stage name, its parameters and the keys of its inputs, so reruns
//! and ablation sweeps reuse whatever did not change.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::encode::{encode_slice_sparse, EmbeddingTable, EncoderConfig, SparseInput, DEFAULT_CAPACITIES};
use crate::error::{Error, Result};
use crate::graph::{
    classify_framework, ensure_nonempty_edges, read_mrp_file, validate_graph, write_mrp_file, FrameworkClass, Graph,
    LabelVocabulary, Span,
};
use crate::metrics::{
    approx_randomization_test, pos_breakdown, token_eval, token_tags, EvalReport, PosBreakdown, TokenEval,
};
use crate::neural::{
    for_each_posterior, load_checkpoint, save_checkpoint, train, BaseLogits, EncodedCorpus, EncodedSentence,
    ModelParams, TrainConfig, TrainLog,
};
use crate::perturb::{perturb_corpus, PerturbSpec, Phase};
use crate::slice::{extract_slices, Slice};
use crate::synth::{generate_synthetic_corpus, synth_embeddings, synth_tokenizer, tags_text, BigramLm};
use crate::tokenize::{align_tokens_to_anchors, bbpe_tokenize, TokenizerTables};

/// Bumped whenever a cached format changes.
const CACHE_VERSION: u32 = 1;

/// Flat run configuration. Relative paths resolve against the directory of
/// the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub train_graphs: PathBuf,
    pub eval_graphs: PathBuf,
    pub vocab: PathBuf,
    pub merges: PathBuf,
    pub embeddings: PathBuf,
    /// LGT1 rows for every train and eval sentence; without it the head is
    /// trained and evaluated alone.
    pub base_logits: Option<PathBuf>,
    /// Word-level UPOS lines, one per eval sentence.
    pub eval_tags: Option<PathBuf>,
    pub capacities: [usize; 6],

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub dev_fraction: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train_embeddings: bool,

    pub shuffle_labels: bool,
    pub shuffle_anchors: bool,
    pub perturb_phase: Phase,
    pub perturb_seed: u64,

    /// Rounds of the paired randomization test between the model and the base
    /// LM; 0 skips it.
    pub significance_rounds: usize,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PipelineConfig {
            train_graphs: PathBuf::new(),
            eval_graphs: PathBuf::new(),
            vocab: PathBuf::new(),
            merges: PathBuf::new(),
            embeddings: PathBuf::new(),
            base_logits: None,
            eval_tags: None,
            capacities: DEFAULT_CAPACITIES,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            weight_decay: t.weight_decay,
            dev_fraction: t.dev_fraction,
            seed: t.seed,
            hidden: t.hidden,
            dropout: t.dropout,
            train_embeddings: t.train_embeddings,
            shuffle_labels: false,
            shuffle_anchors: false,
            perturb_phase: Phase::Both,
            perturb_seed: 0,
            significance_rounds: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Parses `value` as JSON, falling back to a plain string.
fn override_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

impl PipelineConfig {
    /// Builds a config from a JSON object plus `key=value` overrides.
    pub fn from_value(mut base: Value, overrides: &[(String, String)]) -> Result<Self> {
        let obj = base
            .as_object_mut()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        for (k, v) in overrides {
            obj.insert(k.clone(), override_value(v));
        }
        serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file, applies overrides and resolves relative paths.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_value(value, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.train_graphs,
            &mut self.eval_graphs,
            &mut self.vocab,
            &mut self.merges,
            &mut self.embeddings,
            &mut self.out_dir,
        ] {
            fix(p);
        }
        for p in [&mut self.base_logits, &mut self.eval_tags].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            dev_fraction: self.dev_fraction,
            seed: self.seed,
            hidden: self.hidden.clone(),
            dropout: self.dropout,
            train_embeddings: self.train_embeddings,
        }
    }

    pub fn perturbation(&self) -> Option<PerturbSpec> {
        (self.shuffle_labels || self.shuffle_anchors).then_some(PerturbSpec {
            shuffle_labels: self.shuffle_labels,
            shuffle_anchors: self.shuffle_anchors,
            phase: self.perturb_phase,
            seed: self.perturb_seed,
        })
    }

    /// Checks that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let required = [
            ("train_graphs", &self.train_graphs),
            ("eval_graphs", &self.eval_graphs),
            ("vocab", &self.vocab),
            ("merges", &self.merges),
            ("embeddings", &self.embeddings),
        ];
        let optional = [("base_logits", &self.base_logits), ("eval_tags", &self.eval_tags)];
        let all = required
            .into_iter()
            .chain(optional.into_iter().filter_map(|(k, p)| p.as_ref().map(|p| (k, p))));
        for (key, p) in all {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{key} is not set")));
            }
            if !p.is_file() {
                return Err(Error::Config(format!("{key}: {} does not exist", p.display())));
            }
        }
        if let Some(spec) = self.perturbation() {
            spec.validate()?;
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(hash_bytes(&fs::read(path)?))
}

fn stage_key(stage: &str, params: Value) -> String {
    hash_bytes(
        json!({"stage": stage, "version": CACHE_VERSION, "params": params})
            .to_string()
            .as_bytes(),
    )
}

/// One line of the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub file: PathBuf,
    pub reused: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
    pub report: PathBuf,
    pub checkpoint: PathBuf,
    pub labels: PathBuf,
}

/// Metrics of one posterior source on the eval split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(flatten)]
    pub metrics: EvalReport,
    pub pos: Option<PosBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub framework: FrameworkClass,
    pub labels: usize,
    pub input_dim: usize,
    pub train_tokens: usize,
    pub eval_tokens: usize,
    pub train: TrainLog,
    /// `ensemble` with base logits, `slr` without.
    pub condition: String,
    pub model: ConditionReport,
    pub base: Option<ConditionReport>,
    /// Paired randomization test on per-token NLL, model vs. base.
    pub p_value: Option<f64>,
}

/// Everything a caller may want after a run.
#[derive(Debug)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub manifest: Manifest,
    pub params: ModelParams,
}

struct Cache {
    dir: PathBuf,
    records: Vec<StageRecord>,
}

impl Cache {
    fn path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{}.{ext}", &key[..16]))
    }

    /// Returns the cached value, or computes and stores it.
    fn get_or<T>(
        &mut self,
        stage: &'static str,
        key: &str,
        ext: &str,
        read: impl FnOnce(&Path) -> Result<T>,
        write: impl FnOnce(&Path, &T) -> Result<()>,
        compute: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let path = self.path(stage, key, ext);
        let reused = path.is_file();
        let value = if reused {
            read(&path).map_err(|e| e.in_stage(stage, None))?
        } else {
            let v = compute()?;
            let tmp = path.with_extension(format!("{ext}.tmp"));
            write(&tmp, &v).map_err(|e| e.in_stage(stage, None))?;
            fs::rename(&tmp, &path)?;
            v
        };
        self.records.push(StageRecord {
            stage: stage.to_string(),
            key: key.to_string(),
            file: path,
            reused,
        });
        Ok(value)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(p)?))?)
}

fn write_json<T: Serialize>(p: &Path, v: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(p)?);
    serde_json::to_writer(&mut w, v)?;
    w.flush()?;
    Ok(())
}

/// JSON lines, one value per line.
fn read_jsonl<T: for<'de> Deserialize<'de>>(p: &Path) -> Result<Vec<T>> {
    BufReader::new(fs::File::open(p)?)
        .lines()
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn write_jsonl<T: Serialize>(p: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(p)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Validates graphs and gives edgeless ones their artificial edge.
pub fn prepare_graphs(graphs: Vec<Graph>) -> Result<Vec<Graph>> {
    graphs
        .into_iter()
        .map(|g| {
            let report = validate_graph(&g);
            if !report.is_valid() {
                return Err(Error::Schema(format!("{:?}", report.violations)).in_stage("ingest", Some(g.id)));
            }
            ensure_nonempty_edges(&g).map_err(|e| e.in_stage("ingest", Some(g.id.clone())))
        })
        .collect()
}

/// Slices of one sentence plus the token spans needed to spread word tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceSlices {
    pub id: String,
    pub text: String,
    pub spans: Vec<Span>,
    pub slices: Vec<Slice>,
}

pub fn slice_corpus(graphs: &[Graph], tables: &TokenizerTables) -> Result<Vec<SentenceSlices>> {
    graphs
        .par_iter()
        .map(|g| {
            let wrap = |e: Error| e.in_stage("slice", Some(g.id.clone()));
            let tokens = bbpe_tokenize(&g.text, tables).map_err(wrap)?;
            let aligned = align_tokens_to_anchors(&tokens, g).map_err(wrap)?;
            Ok(SentenceSlices {
                id: g.id.clone(),
                text: g.text.clone(),
                spans: tokens.tokens.iter().map(|t| t.span).collect(),
                slices: extract_slices(&aligned, g),
            })
        })
        .collect()
}

pub fn encode_corpus(
    sentences: &[SentenceSlices],
    cfg: &EncoderConfig,
    labels: &LabelVocabulary,
) -> Result<EncodedCorpus> {
    let sentences = sentences
        .par_iter()
        .map(|s| {
            let inputs = s
                .slices
                .iter()
                .map(|sl| encode_slice_sparse(sl, cfg, labels))
                .collect::<Result<Vec<SparseInput>>>()
                .map_err(|e| e.in_stage("encode", Some(s.id.clone())))?;
            Ok(EncodedSentence {
                id: s.id.clone(),
                inputs,
                targets: s.slices.iter().map(|sl| sl.target).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedCorpus {
        dim: crate::encode::vector_dim(cfg),
        sentences,
    })
}

/// Per-token evaluations of the model (ensembled when `base` is given) or of
/// the base LM alone when `params` is `None`.
pub fn token_evals(
    params: Option<&ModelParams>,
    corpus: &EncodedCorpus,
    base: Option<&BaseLogits>,
) -> Result<Vec<TokenEval>> {
    let mut out = Vec::with_capacity(corpus.token_count());
    for_each_posterior(params, corpus, base, |id, _, dist, gold| {
        out.push(token_eval(dist, gold).map_err(|e| e.in_stage("eval", Some(id.to_string())))?);
        Ok(())
    })?;
    Ok(out)
}

fn condition(evals: &[TokenEval], tags: Option<&[String]>) -> Result<ConditionReport> {
    Ok(ConditionReport {
        metrics: EvalReport::from_evals(evals),
        pos: tags.map(|t| pos_breakdown(evals, t)).transpose()?,
    })
}

fn spread_tags(path: &Path, sentences: &[SentenceSlices]) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != sentences.len() {
        return Err(Error::Input(format!(
            "{} tag lines for {} eval sentences",
            lines.len(),
            sentences.len()
        ))
        .in_stage("eval", None));
    }
    let mut out = Vec::new();
    for (s, line) in sentences.iter().zip(lines) {
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        out.extend(token_tags(&s.text, &s.spans, &words).map_err(|e| e.in_stage("eval", Some(s.id.clone())))?);
    }
    Ok(out)
}

/// Runs every stage, writing `report.json`, `model.ckpt`, `labels.json` and
/// `manifest.json` under the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let train_cfg = cfg.train_config();
    let emb = EmbeddingTable::load(&cfg.embeddings).map_err(|e| e.in_stage("load", None))?;
    train_cfg.validate(emb.dim())?;
    let tables = TokenizerTables::load(&cfg.vocab, &cfg.merges).map_err(|e| e.in_stage("load", None))?;
    if tables.vocab_size() != emb.rows() {
        return Err(Error::Config(format!(
            "tokenizer has {} types, embeddings {}",
            tables.vocab_size(),
            emb.rows()
        )));
    }
    let base = cfg
        .base_logits
        .as_ref()
        .map(BaseLogits::load)
        .transpose()
        .map_err(|e| e.in_stage("load", None))?;
    if let Some(b) = &base {
        if b.vocab() != emb.rows() {
            return Err(Error::Config(format!(
                "base logits over {} types, embeddings over {}",
                b.vocab(),
                emb.rows()
            )));
        }
    }
    let perturb = cfg.perturbation();

    let cache_dir = cfg.out_dir.join("cache");
    fs::create_dir_all(&cache_dir)?;
    let mut cache = Cache {
        dir: cache_dir,
        records: vec![],
    };

    let tables_key = stage_key("tables", json!([hash_file(&cfg.vocab)?, hash_file(&cfg.merges)?]));
    let emb_hash = hash_file(&cfg.embeddings)?;
    let base_hash = cfg.base_logits.as_ref().map(hash_file).transpose()?;

    // ingest
    let raw_train = prepare_graphs(read_mrp_file(&cfg.train_graphs).map_err(|e| e.in_stage("ingest", None))?)?;
    let raw_eval = prepare_graphs(read_mrp_file(&cfg.eval_graphs).map_err(|e| e.in_stage("ingest", None))?)?;
    let labels = LabelVocabulary::from_graphs(raw_train.iter().chain(&raw_eval));
    let framework = classify_framework(&raw_train);
    let enc_cfg = EncoderConfig {
        capacities: cfg.capacities,
        ..EncoderConfig::new(labels.len(), emb.dim())
    };
    let labels_key = hash_bytes(labels.to_json().as_bytes());

    let mut encode_keys = BTreeMap::new();
    let mut encoded = BTreeMap::new();
    let mut eval_slices = None;
    for (split, phase, graphs, path) in [
        ("train", Phase::Train, &raw_train, &cfg.train_graphs),
        ("eval", Phase::Test, &raw_eval, &cfg.eval_graphs),
    ] {
        let spec = perturb.filter(|p| p.phase.covers(phase));
        let ingest_key = stage_key("ingest", json!({"graphs": hash_file(path)?, "perturb": spec}));
        let graphs = cache.get_or(
            "ingest",
            &ingest_key,
            "mrp",
            |p| read_mrp_file(p),
            |p, g| write_mrp_file(p, g),
            || match &spec {
                Some(s) => perturb_corpus(graphs, s, phase).map_err(|e| e.in_stage("ingest", None)),
                None => Ok(graphs.clone()),
            },
        )?;
        let slice_key = stage_key("slice", json!([ingest_key, tables_key]));
        let slices = cache.get_or(
            "slice",
            &slice_key,
            "jsonl",
            read_jsonl,
            |p, s: &Vec<SentenceSlices>| write_jsonl(p, s),
            || slice_corpus(&graphs, &tables),
        )?;
        let encode_key = stage_key("encode", json!([slice_key, labels_key, enc_cfg.capacities, emb.dim()]));
        let corpus = cache.get_or("encode", &encode_key, "json", read_json, write_json, || {
            encode_corpus(&slices, &enc_cfg, &labels)
        })?;
        encode_keys.insert(split, encode_key);
        encoded.insert(split, corpus);
        if split == "eval" {
            eval_slices = Some(slices);
        }
    }
    let eval_slices = eval_slices.expect("eval split processed");

    // train
    let train_key = stage_key(
        "train",
        json!({"encoded": encode_keys["train"], "emb": emb_hash, "base": base_hash, "cfg": train_cfg}),
    );
    let with_emb = cfg.train_embeddings;
    let train_corpus = &encoded["train"];
    let log_path = cache.path("trainlog", &train_key, "json");
    let (params, train_log) = cache.get_or(
        "train",
        &train_key,
        "ckpt",
        |p| {
            let params = load_checkpoint(p, (!with_emb).then_some(&emb))?;
            Ok((params, read_json::<TrainLog>(&log_path)?))
        },
        |p, (params, log)| {
            write_json(&log_path, log)?;
            save_checkpoint(params, p, with_emb)
        },
        || train(train_corpus, &emb, base.as_ref(), &train_cfg).map_err(|e| e.in_stage("train", None)),
    )?;

    // eval
    let tags_hash = cfg.eval_tags.as_ref().map(hash_file).transpose()?;
    let eval_key = stage_key(
        "eval",
        json!({"train": train_key, "encoded": encode_keys["eval"], "base": base_hash, "tags": tags_hash,
               "rounds": cfg.significance_rounds, "seed": cfg.seed, "framework": framework,
               "labels": labels.len()}),
    );
    let eval_corpus = &encoded["eval"];
    let report = cache.get_or("eval", &eval_key, "json", read_json, write_json, || {
        let tags = cfg
            .eval_tags
            .as_ref()
            .map(|p| spread_tags(p, &eval_slices))
            .transpose()?;
        let model = token_evals(Some(&params), eval_corpus, base.as_ref())?;
        let base_evals = base
            .as_ref()
            .map(|b| token_evals(None, eval_corpus, Some(b)))
            .transpose()?;
        let p_value = match &base_evals {
            Some(b) if cfg.significance_rounds > 0 => {
                let a: Vec<f64> = model.iter().map(|e| e.nll).collect();
                let b: Vec<f64> = b.iter().map(|e| e.nll).collect();
                Some(approx_randomization_test(&a, &b, cfg.significance_rounds, cfg.seed)?)
            }
            _ => None,
        };
        Ok(PipelineReport {
            framework,
            labels: labels.len(),
            input_dim: eval_corpus.dim,
            train_tokens: train_corpus.token_count(),
            eval_tokens: eval_corpus.token_count(),
            train: train_log.clone(),
            condition: if base.is_some() { "ensemble" } else { "slr" }.into(),
            model: condition(&model, tags.as_deref())?,
            base: base_evals.map(|b| condition(&b, tags.as_deref())).transpose()?,
            p_value,
        })
    })?;

    let report_path = cfg.out_dir.join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)? + "\n")?;
    let checkpoint = cfg.out_dir.join("model.ckpt");
    save_checkpoint(&params, &checkpoint, with_emb)?;
    let labels_path = cfg.out_dir.join("labels.json");
    fs::write(&labels_path, labels.to_json())?;
    let manifest = Manifest {
        config_hash: hash_bytes(serde_json::to_string(cfg)?.as_bytes()),
        stages: cache.records,
        report: report_path,
        checkpoint,
        labels: labels_path,
    };
    fs::write(
        cfg.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(PipelineOutput {
        report,
        manifest,
        params,
    })
}

/// Options for a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub seed: u64,
    pub train: usize,
    pub eval: usize,
    pub max_vocab: usize,
    pub emb_dim: usize,
    /// Add-k smoothing of the bigram base LM.
    pub bigram_k: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 0,
            train: 5000,
            eval: 500,
            max_vocab: 200,
            emb_dim: 64,
            bigram_k: 0.1,
        }
    }
}

/// Writes a synthetic dataset and ready-to-run configs `config.json`
/// (constituency graphs) and `config.dep.json` (dependency graphs) into
/// `dir`; returns the constituency config path.
///
/// The base LM is fitted on the train split only; its logits cover both.
pub fn write_synth_dataset(dir: impl AsRef<Path>, opts: &SynthOptions) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if opts.train < 2 || opts.eval < 1 {
        return Err(Error::Config("need at least 2 train and 1 eval sentence".into()));
    }
    fs::create_dir_all(dir)?;
    let corpus = generate_synthetic_corpus(opts.seed, opts.train + opts.eval);
    let (train_part, eval_part) = corpus.split_at(opts.train);
    let tables = synth_tokenizer(&corpus, opts.max_vocab)?;
    tables.save(dir.join("vocab.json"), dir.join("merges.txt"))?;
    synth_embeddings(tables.vocab_size(), opts.emb_dim, opts.seed)?.save(dir.join("emb.bin"))?;

    let ids = corpus
        .iter()
        .map(|s| Ok(bbpe_tokenize(&s.text, &tables)?.ids()))
        .collect::<Result<Vec<_>>>()?;
    let lm = BigramLm::fit(
        tables.vocab_size(),
        opts.bigram_k,
        ids[..opts.train].iter().map(Vec::as_slice),
    )?;
    lm.export(corpus.iter().zip(&ids).map(|(s, t)| (s.id.as_str(), t.as_slice())))?
        .save(dir.join("base.lgt"))?;

    for (name, part) in [("train", train_part), ("eval", eval_part)] {
        let cons: Vec<Graph> = part.iter().map(|s| s.constituency.clone()).collect();
        let deps: Vec<Graph> = part.iter().map(|s| s.dependency.clone()).collect();
        write_mrp_file(dir.join(format!("{name}.mrp")), &cons)?;
        write_mrp_file(dir.join(format!("{name}.dep.mrp")), &deps)?;
    }
    fs::write(dir.join("eval.tags"), tags_text(eval_part))?;

    let mut config = json!({
        "train_graphs": "train.mrp",
        "eval_graphs": "eval.mrp",
        "vocab": "vocab.json",
        "merges": "merges.txt",
        "embeddings": "emb.bin",
        "base_logits": "base.lgt",
        "eval_tags": "eval.tags",
        "hidden": [256, opts.emb_dim],
        "lr": 1e-3,
        "seed": opts.seed,
        "out_dir": "run",
    });
    let write_config = |name: &str, config: &Value| -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, serde_json::to_string_pretty(config)? + "\n")?;
        Ok(path)
    };
    let cons = write_config("config.json", &config)?;
    config["train_graphs"] = json!("train.dep.mrp");
    config["eval_graphs"] = json!("eval.dep.mrp");
    config["out_dir"] = json!("run-dep");
    write_config("config.dep.json", &config)?;
    Ok(cons)
}
