use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use slicelm::binio::{self, RowIndex, RowRange};
use slicelm::encode::{SliceVectors, DEFAULT_CAPACITIES};
use slicelm::graph::{classify_framework, read_mrp_file, validate_graph, write_mrp_file};
use slicelm::metrics::{approx_randomization_test, evaluate, pos_breakdown, token_eval, token_tags, EvalReport};
use slicelm::neural::{
    for_each_posterior, load_checkpoint, save_checkpoint, train, BaseLogits, EncodedCorpus, TrainConfig,
};
use slicelm::perturb::{perturb_corpus, PerturbSpec, Phase};
use slicelm::pipeline::{
    prepare_graphs, run_pipeline, slice_corpus, write_synth_dataset, PipelineConfig, SynthOptions,
};
use slicelm::tokenize::bbpe_tokenize;
use slicelm::{EmbeddingTable, EncoderConfig, Error, LabelVocabulary, Result, Slice, Span, TokenizerTables};

#[derive(Parser)]
#[command(name = "slicelm", version, about = "Graph-sliced language modeling")]
struct Cli {
    /// Worker threads for per-sentence parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    merges: PathBuf,
}

impl TablesArgs {
    fn load(&self) -> Result<TokenizerTables> {
        TokenizerTables::load(&self.vocab, &self.merges)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Train,
    Test,
    Both,
}

impl From<PhaseArg> for Phase {
    fn from(p: PhaseArg) -> Phase {
        match p {
            PhaseArg::Train => Phase::Train,
            PhaseArg::Test => Phase::Test,
            PhaseArg::Both => Phase::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read MRP graphs, report framework and label counts, optionally validate.
    Ingest {
        #[arg(long)]
        graphs: PathBuf,
        /// Fail on the first invalid graph.
        #[arg(long)]
        validate: bool,
        /// Write the graphs back, with edgeless graphs given their artificial edge.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tokenize one sentence per line; prints token ids and strings as JSON lines.
    Tokenize {
        #[command(flatten)]
        tables: TablesArgs,
        #[arg(long)]
        text: PathBuf,
    },
    /// One JSON slice per token.
    Slice {
        #[arg(long)]
        graphs: PathBuf,
        #[command(flatten)]
        tables: TablesArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write gold token sequences (ids, text, token spans) as JSON lines.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Also write the label vocabulary of the graphs.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Encode slices into an SVC1 matrix.
    Encode {
        #[arg(long)]
        slices: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// High-resolution capacities in P,B,O,T,C,R order.
        #[arg(long, value_delimiter = ',', num_args = 6)]
        capacities: Option<Vec<usize>>,
    },
    /// Train the SLR head on encoded vectors.
    Train {
        #[arg(long)]
        encoded: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        base_logits: Option<PathBuf>,
        /// JSON training config; missing keys take the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score posteriors against gold tokens.
    Eval(EvalArgs),
    /// Shuffle edge labels and/or anchors within each graph.
    Ablate {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        labels: bool,
        #[arg(long)]
        anchors: bool,
        #[arg(long, value_enum, default_value = "both")]
        phase: PhaseArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired approximate-randomization test on per-token scores (one per line).
    Sigtest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long = "R", default_value_t = 10_000)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a synthetic grammar corpus with tables, embeddings, base logits and configs.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        eval: usize,
        #[arg(long, default_value_t = 200)]
        max_vocab: usize,
        #[arg(long, default_value_t = 64)]
        emb_dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config override, `key=value` with a JSON or plain-string value.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// PST1 posterior matrix (with its index sidecar).
    #[arg(long, requires = "gold")]
    posteriors: Option<PathBuf>,
    /// Gold JSON lines as written by `slice --gold`.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Word-level UPOS lines aligned with the gold sentences.
    #[arg(long, requires = "gold")]
    tags: Option<PathBuf>,
    /// Score a checkpoint on SVC1 vectors instead of stored posteriors.
    #[arg(long, conflicts_with = "posteriors", requires_all = ["encoded", "embeddings"])]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    encoded: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    base_logits: Option<PathBuf>,
    /// Write the computed posteriors as PST1.
    #[arg(long)]
    save_posteriors: Option<PathBuf>,
    /// Write per-token negative log-likelihoods, one per line.
    #[arg(long)]
    scores: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct GoldSentence {
    id: String,
    text: String,
    targets: Vec<u32>,
    spans: Vec<Span>,
}

/// Posterior rows grouped by sentence, in file order.
struct Posteriors {
    vocab: usize,
    rows: Vec<Vec<f64>>,
    index: RowIndex,
}

impl Posteriors {
    fn save(&self, path: &Path) -> Result<()> {
        binio::write_f32_matrix(
            path,
            b"PST1",
            [self.rows.len() as u32, self.vocab as u32],
            self.rows.iter().flatten().map(|&p| p as f32),
        )?;
        binio::write_index(binio::index_path(path), &self.index)
    }

    fn load(path: &Path) -> Result<Self> {
        let ([rows, vocab], data) = binio::read_f32_matrix(path, b"PST1", "PST1")?;
        let index = binio::read_index(binio::index_path(path))?;
        binio::check_index(&index, rows as usize, "PST1")?;
        let vocab = vocab as usize;
        Ok(Posteriors {
            vocab,
            rows: data
                .chunks(vocab.max(1))
                .map(|r| r.iter().map(|&p| p as f64).collect())
                .collect(),
            index,
        })
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    BufReader::new(fs::File::open(path)?)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, &it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(v: &impl Serialize) -> Result<()> {
    emit(&(serde_json::to_string_pretty(v)? + "\n"))
}

fn read_scores(path: &Path) -> Result<Vec<f64>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Input(format!("{}: not a number: {l:?}", path.display())))
        })
        .collect()
}

fn ingest(graphs: &Path, validate: bool, out: Option<&Path>) -> Result<()> {
    let corpus = read_mrp_file(graphs)?;
    let invalid: Vec<_> = corpus
        .iter()
        .map(|g| (g, validate_graph(g)))
        .filter(|(_, r)| !r.is_valid())
        .map(|(g, r)| serde_json::json!({"id": g.id, "violations": format!("{:?}", r.violations)}))
        .collect();
    if validate {
        if let Some(first) = invalid.first() {
            return Err(Error::Schema(first["violations"].to_string())
                .in_stage("ingest", first["id"].as_str().map(str::to_string)));
        }
    }
    let labels = LabelVocabulary::from_graphs(&corpus);
    print_json(&serde_json::json!({
        "graphs": corpus.len(),
        "framework": classify_framework(&corpus),
        "labels": labels.len(),
        "invalid": invalid,
    }))?;
    if let Some(out) = out {
        write_mrp_file(out, &prepare_graphs(corpus)?)?;
    }
    Ok(())
}

fn tokenize(tables: &TablesArgs, text: &Path) -> Result<()> {
    let tables = tables.load()?;
    let mut out = String::new();
    for line in fs::read_to_string(text)?.lines() {
        let toks = bbpe_tokenize(line, &tables)?;
        let strs: Vec<&str> = toks.tokens.iter().filter_map(|t| tables.token_str(t.id)).collect();
        out += &serde_json::json!({"ids": toks.ids(), "tokens": strs}).to_string();
        out.push('\n');
    }
    emit(&out)
}

fn slice(graphs: &Path, tables: &TablesArgs, out: &Path, gold: Option<&Path>, labels_out: Option<&Path>) -> Result<()> {
    let corpus = prepare_graphs(read_mrp_file(graphs)?)?;
    let sentences = slice_corpus(&corpus, &tables.load()?)?;
    write_jsonl(out, sentences.iter().flat_map(|s| &s.slices))?;
    if let Some(gold) = gold {
        write_jsonl(
            gold,
            sentences.iter().map(|s| GoldSentence {
                id: s.id.clone(),
                text: s.text.clone(),
                targets: s.slices.iter().map(|sl| sl.target).collect(),
                spans: s.spans.clone(),
            }),
        )?;
    }
    if let Some(p) = labels_out {
        fs::write(p, LabelVocabulary::from_graphs(&corpus).to_json())?;
    }
    Ok(())
}

fn encode(slices: &Path, embeddings: &Path, labels: &Path, out: &Path, capacities: Option<&[usize]>) -> Result<()> {
    let all: Vec<Slice> = read_jsonl(slices)?;
    let mut grouped: Vec<Vec<Slice>> = vec![];
    for s in all {
        match grouped.last_mut() {
            Some(g) if g[0].graph_id == s.graph_id => g.push(s),
            _ => grouped.push(vec![s]),
        }
    }
    let emb = EmbeddingTable::load(embeddings)?;
    let labels = LabelVocabulary::from_json(&fs::read_to_string(labels)?)?;
    let mut cfg = EncoderConfig::new(labels.len(), emb.dim());
    cfg.capacities = match capacities {
        Some(c) => c
            .try_into()
            .map_err(|_| Error::Config("capacities need six values".into()))?,
        None => DEFAULT_CAPACITIES,
    };
    SliceVectors::from_slices(&grouped, &cfg, &emb, &labels)?.save(out)
}

fn train_cmd(
    encoded: &Path,
    embeddings: &Path,
    base_logits: Option<&Path>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg: TrainConfig = match config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let emb = EmbeddingTable::load(embeddings)?;
    let corpus = EncodedCorpus::from_dense(&SliceVectors::load(encoded)?);
    let base = base_logits.map(BaseLogits::load).transpose()?;
    let (params, log) = train(&corpus, &emb, base.as_ref(), &cfg)?;
    save_checkpoint(&params, out, cfg.train_embeddings)?;
    let log_path = out.with_extension("log.json");
    fs::write(&log_path, serde_json::to_string_pretty(&log)? + "\n")?;
    print_json(&log)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let gold: Option<Vec<GoldSentence>> = a.gold.as_deref().map(read_jsonl).transpose()?;
    let (post, golds) = if let Some(ckpt) = &a.checkpoint {
        let emb = EmbeddingTable::load(a.embeddings.as_ref().expect("required by clap"))?;
        let corpus = EncodedCorpus::from_dense(&SliceVectors::load(a.encoded.as_ref().expect("required by clap"))?);
        let params = load_checkpoint(ckpt, Some(&emb))?;
        let base = a.base_logits.as_deref().map(BaseLogits::load).transpose()?;
        let mut post = Posteriors {
            vocab: emb.rows(),
            rows: vec![],
            index: RowIndex::new(),
        };
        let mut offset = 0;
        for s in &corpus.sentences {
            let count = s.targets.len();
            post.index.insert(s.id.clone(), RowRange { offset, count });
            offset += count;
        }
        let mut golds = vec![];
        for_each_posterior(Some(&params), &corpus, base.as_ref(), |_, _, dist, g| {
            post.rows.push(dist.to_vec());
            golds.push(g);
            Ok(())
        })?;
        if let Some(gold) = &gold {
            let expected: Vec<u32> = gold.iter().flat_map(|s| s.targets.iter().copied()).collect();
            if expected != golds {
                return Err(Error::Alignment("gold tokens differ from the encoded targets".into()));
            }
        }
        (post, golds)
    } else {
        let Some(path) = &a.posteriors else {
            return Err(Error::Config("eval needs --posteriors or --checkpoint".into()));
        };
        let post = Posteriors::load(path)?;
        let gold = gold.as_ref().expect("required by clap");
        let mut golds = Vec::with_capacity(post.rows.len());
        for s in gold {
            let r = post
                .index
                .get(&s.id)
                .ok_or_else(|| Error::Alignment(format!("no posteriors for sentence {}", s.id)))?;
            if r.count != s.targets.len() || r.offset != golds.len() {
                return Err(Error::Alignment(format!(
                    "posterior rows of {} do not line up with gold",
                    s.id
                )));
            }
            golds.extend(&s.targets);
        }
        if golds.len() != post.rows.len() {
            return Err(Error::Alignment(format!(
                "{} posterior rows for {} gold tokens",
                post.rows.len(),
                golds.len()
            )));
        }
        (post, golds)
    };

    let report: EvalReport = evaluate(&post.rows, &golds)?;
    let evals = post
        .rows
        .iter()
        .zip(&golds)
        .map(|(d, &g)| token_eval(d, g))
        .collect::<Result<Vec<_>>>()?;
    let pos = match (&a.tags, &gold) {
        (Some(tags), Some(gold)) => {
            let text = fs::read_to_string(tags)?;
            let lines: Vec<&str> = text.lines().collect();
            if lines.len() != gold.len() {
                return Err(Error::Input(format!(
                    "{} tag lines for {} sentences",
                    lines.len(),
                    gold.len()
                )));
            }
            let mut token_level = vec![];
            for (s, l) in gold.iter().zip(lines) {
                let words: Vec<String> = l.split_whitespace().map(str::to_string).collect();
                token_level
                    .extend(token_tags(&s.text, &s.spans, &words).map_err(|e| e.in_stage("eval", Some(s.id.clone())))?);
            }
            Some(pos_breakdown(&evals, &token_level)?)
        }
        _ => None,
    };
    if let Some(p) = &a.save_posteriors {
        post.save(p)?;
    }
    if let Some(p) = &a.scores {
        let text: String = evals.iter().map(|e| format!("{}\n", e.nll)).collect();
        fs::write(p, text)?;
    }
    print_json(&serde_json::json!({"report": report, "pos": pos}))
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.to_string()))
                .ok_or_else(|| Error::Config(format!("override {s:?} is not KEY=VALUE")))
        })
        .collect()
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { graphs, validate, out } => ingest(&graphs, validate, out.as_deref()),
        Command::Tokenize { tables, text } => tokenize(&tables, &text),
        Command::Slice {
            graphs,
            tables,
            out,
            gold,
            labels_out,
        } => slice(&graphs, &tables, &out, gold.as_deref(), labels_out.as_deref()),
        Command::Encode {
            slices,
            embeddings,
            labels,
            out,
            capacities,
        } => encode(&slices, &embeddings, &labels, &out, capacities.as_deref()),
        Command::Train {
            encoded,
            embeddings,
            base_logits,
            config,
            seed,
            out,
        } => train_cmd(
            &encoded,
            &embeddings,
            base_logits.as_deref(),
            config.as_deref(),
            seed,
            &out,
        ),
        Command::Eval(a) => eval(&a),
        Command::Ablate {
            graphs,
            labels,
            anchors,
            phase,
            seed,
            out,
        } => {
            let spec = PerturbSpec {
                shuffle_labels: labels,
                shuffle_anchors: anchors,
                phase: phase.into(),
                seed,
            };
            let corpus = read_mrp_file(&graphs)?;
            write_mrp_file(&out, &perturb_corpus(&corpus, &spec, spec.phase)?)
        }
        Command::Sigtest { a, b, rounds, seed } => {
            let p = approx_randomization_test(&read_scores(&a)?, &read_scores(&b)?, rounds, seed)?;
            print_json(&serde_json::json!({"p_value": p, "rounds": rounds, "seed": seed}))
        }
        Command::Synth {
            seed,
            train,
            eval,
            max_vocab,
            emb_dim,
            out,
        } => {
            let opts = SynthOptions {
                seed,
                train,
                eval,
                max_vocab,
                emb_dim,
                ..SynthOptions::default()
            };
            let config = write_synth_dataset(&out, &opts)?;
            emit(&format!("{}\n", config.display()))
        }
        Command::Run { config, out, overrides } => {
            let mut cfg = PipelineConfig::load(&config, &parse_overrides(&overrides)?)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            let output = run_pipeline(&cfg)?;
            print_json(&output.report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
