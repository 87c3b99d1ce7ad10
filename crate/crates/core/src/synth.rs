//! Synthetic corpus: a small probabilistic grammar with number agreement and
//! verb subcategorization, emitting constituency and dependency graphs,
//! word-level UPOS tags, compact tokenizer tables, random embeddings and an
//! add-k bigram base LM.

use std::collections::{BTreeMap, HashMap};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::encode::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, Node, NodeId, Span, ROOT_NODE_LABEL};
use crate::neural::BaseLogits;
use crate::tokenize::TokenizerTables;

/// A phrase rule. `head` indexes the child that heads the phrase.
struct Rule {
    name: &'static str,
    lhs: &'static str,
    rhs: &'static [&'static str],
    head: usize,
    weight: f64,
    /// Expands into a phrase that can contain `lhs` again.
    recursive: bool,
}

const fn r(
    name: &'static str,
    lhs: &'static str,
    rhs: &'static [&'static str],
    head: usize,
    weight: f64,
    recursive: bool,
) -> Rule {
    Rule {
        name,
        lhs,
        rhs,
        head,
        weight,
        recursive,
    }
}

const RULES: &[Rule] = &[
    r("TOP", "TOP", &["S", "PUNCT"], 0, 1.0, false),
    r("S1", "S", &["NPs", "VPs"], 1, 3.0, false),
    r("S2", "S", &["NPp", "VPp"], 1, 3.0, false),
    r("S3", "S", &["PP", "NPs", "VPs"], 2, 0.5, false),
    r("NPs1", "NPs", &["DETs", "Ns"], 1, 4.0, false),
    r("NPs2", "NPs", &["DETs", "ADJP", "Ns"], 2, 2.0, false),
    r("NPs3", "NPs", &["DETs", "Ns", "PP"], 1, 1.0, true),
    r("NPs4", "NPs", &["PROPN"], 0, 1.5, false),
    r("NPs5", "NPs", &["PRONs"], 0, 1.0, false),
    r("NPs6", "NPs", &["DETs", "Ns", "RCs"], 1, 0.6, true),
    r("NPp1", "NPp", &["DETp", "Np"], 1, 4.0, false),
    r("NPp2", "NPp", &["DETp", "ADJP", "Np"], 2, 2.0, false),
    r("NPp3", "NPp", &["DETp", "Np", "PP"], 1, 1.0, true),
    r("NPp4", "NPp", &["Np"], 0, 1.0, false),
    r("NPp5", "NPp", &["PRONp"], 0, 1.0, false),
    r("NPp6", "NPp", &["NPs", "CONJ", "NPs"], 0, 0.6, true),
    r("NPp7", "NPp", &["DETp", "Np", "RCp"], 1, 0.6, true),
    r("ADJP1", "ADJP", &["ADJ"], 0, 4.0, false),
    r("ADJP2", "ADJP", &["DEG", "ADJ"], 1, 1.5, false),
    r("ADJP3", "ADJP", &["ADJ", "ADJP"], 0, 0.5, true),
    r("PP1", "PP", &["P", "NPs"], 0, 2.0, false),
    r("PP2", "PP", &["P", "NPp"], 0, 1.0, false),
    r("RCs", "RCs", &["THAT", "VPs"], 1, 1.0, false),
    r("RCp", "RCp", &["THAT", "VPp"], 1, 1.0, false),
    r("VPs1", "VPs", &["VIs"], 0, 2.0, false),
    r("VPs2", "VPs", &["VTs", "NPs"], 0, 3.0, true),
    r("VPs3", "VPs", &["VTs", "NPp"], 0, 2.0, true),
    r("VPs4", "VPs", &["VIs", "ADV"], 0, 1.0, false),
    r("VPs5", "VPs", &["VIs", "PP"], 0, 1.0, true),
    r("VPs6", "VPs", &["COPs", "ADJP"], 0, 1.5, false),
    r("VPs7", "VPs", &["VTs", "NPs", "PP"], 0, 0.7, true),
    r("VPs8", "VPs", &["VSs", "THAT", "S"], 0, 0.4, true),
    r("VPp1", "VPp", &["VIp"], 0, 2.0, false),
    r("VPp2", "VPp", &["VTp", "NPs"], 0, 3.0, true),
    r("VPp3", "VPp", &["VTp", "NPp"], 0, 2.0, true),
    r("VPp4", "VPp", &["VIp", "ADV"], 0, 1.0, false),
    r("VPp5", "VPp", &["VIp", "PP"], 0, 1.0, true),
    r("VPp6", "VPp", &["COPp", "ADJP"], 0, 1.5, false),
    r("VPp7", "VPp", &["VTp", "NPs", "PP"], 0, 0.7, true),
    r("VPp8", "VPp", &["VSp", "THAT", "S"], 0, 0.4, true),
];

/// Preterminal categories: (category, UPOS tag, words).
const LEXICON: &[(&str, &str, &[&str])] = &[
    ("DETs", "DET", &["the", "a", "this", "every"]),
    ("DETp", "DET", &["the", "these", "some", "many"]),
    (
        "Ns",
        "NOUN",
        &[
            "dog", "cat", "man", "woman", "idea", "house", "child", "bird", "car", "tree",
        ],
    ),
    (
        "Np",
        "NOUN",
        &[
            "dogs", "cats", "men", "women", "ideas", "houses", "children", "birds", "cars", "trees",
        ],
    ),
    ("PROPN", "PROPN", &["john", "mary", "paris", "kim"]),
    ("PRONs", "PRON", &["he", "she", "it"]),
    ("PRONp", "PRON", &["they", "we"]),
    ("ADJ", "ADJ", &["big", "small", "red", "happy", "old", "new"]),
    ("DEG", "ADV", &["very", "quite"]),
    ("ADV", "ADV", &["often", "slowly", "here"]),
    ("P", "ADP", &["in", "on", "with", "near", "under"]),
    ("THAT", "SCONJ", &["that"]),
    ("CONJ", "CCONJ", &["and"]),
    ("VIs", "VERB", &["sleeps", "runs", "laughs", "waits"]),
    ("VIp", "VERB", &["sleep", "run", "laugh", "wait"]),
    ("VTs", "VERB", &["sees", "likes", "finds", "chases"]),
    ("VTp", "VERB", &["see", "like", "find", "chase"]),
    ("COPs", "AUX", &["is", "seems"]),
    ("COPp", "AUX", &["are", "seem"]),
    ("VSs", "VERB", &["says", "thinks"]),
    ("VSp", "VERB", &["say", "think"]),
    ("PUNCT", "PUNCT", &["."]),
];

/// Number of grammar rules (phrase rules plus one per preterminal category).
pub fn rule_count() -> usize {
    RULES.len() + LEXICON.len()
}

/// Depth beyond which only non-recursive expansions are drawn.
const MAX_DEPTH: usize = 5;

enum Tree {
    Phrase { rule: usize, children: Vec<Tree> },
    Word { category: usize, word: usize },
}

fn sample(rng: &mut ChaCha8Rng, symbol: &str, depth: usize) -> Tree {
    if let Some(cat) = LEXICON.iter().position(|(c, ..)| *c == symbol) {
        return Tree::Word {
            category: cat,
            word: rng.gen_range(0..LEXICON[cat].2.len()),
        };
    }
    let options: Vec<usize> = (0..RULES.len())
        .filter(|&k| RULES[k].lhs == symbol && (depth < MAX_DEPTH || !RULES[k].recursive))
        .collect();
    let dist = WeightedIndex::new(options.iter().map(|&k| RULES[k].weight)).expect("grammar covers every symbol");
    let rule = options[dist.sample(rng)];
    Tree::Phrase {
        rule,
        children: RULES[rule].rhs.iter().map(|s| sample(rng, s, depth + 1)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSentence {
    pub id: String,
    pub text: String,
    pub words: Vec<String>,
    /// Universal POS tag per word.
    pub tags: Vec<String>,
    /// Phrase nodes are unanchored; each word has an anchored leaf.
    pub constituency: Graph,
    /// One node per word plus an unanchored ROOT node.
    pub dependency: Graph,
}

struct Builder {
    words: Vec<String>,
    tags: Vec<String>,
    spans: Vec<Span>,
    text: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    dep_edges: Vec<Edge>,
}

impl Builder {
    /// Adds the subtree in preorder; returns (node id, index of its head word).
    fn add(&mut self, t: &Tree) -> (NodeId, usize) {
        let id = self.nodes.len() as NodeId;
        match t {
            Tree::Word { category, word } => {
                let (_, tag, words) = LEXICON[*category];
                if !self.text.is_empty() {
                    self.text.push(' ');
                }
                let span = Span::new(self.text.len(), self.text.len() + words[*word].len());
                self.text.push_str(words[*word]);
                self.nodes.push(Node::new(id, vec![span]).with_label(tag));
                self.words.push(words[*word].to_string());
                self.tags.push(tag.to_string());
                self.spans.push(span);
                (id, self.words.len() - 1)
            }
            Tree::Phrase { rule, children } => {
                let rule = &RULES[*rule];
                self.nodes.push(Node::new(id, vec![]).with_label(rule.lhs));
                let mut heads = Vec::with_capacity(children.len());
                for (k, c) in children.iter().enumerate() {
                    let (child, head) = self.add(c);
                    self.edges.push(Edge::new(id, child, format!("{}:{k}", rule.name)));
                    heads.push(head);
                }
                let head = heads[rule.head];
                for (k, &h) in heads.iter().enumerate() {
                    if k != rule.head {
                        self.dep_edges
                            .push(Edge::new(head as NodeId, h as NodeId, format!("{}:{k}", rule.name)));
                    }
                }
                (id, head)
            }
        }
    }
}

fn build(id: String, tree: &Tree) -> SynthSentence {
    let mut b = Builder {
        words: vec![],
        tags: vec![],
        spans: vec![],
        text: String::new(),
        nodes: vec![],
        edges: vec![],
        dep_edges: vec![],
    };
    let (root, head) = b.add(tree);

    let mut constituency = Graph::new(id.clone(), b.text.clone());
    constituency.nodes = b.nodes;
    constituency.edges = b.edges;
    constituency.tops = vec![root];

    let n = b.words.len() as NodeId;
    let mut dependency = Graph::new(id.clone(), b.text.clone());
    dependency.nodes = b
        .spans
        .iter()
        .zip(&b.tags)
        .enumerate()
        .map(|(k, (s, t))| Node::new(k as NodeId, vec![*s]).with_label(t.clone()))
        .collect();
    dependency.nodes.push(Node::new(n, vec![]).with_label(ROOT_NODE_LABEL));
    dependency.edges = b.dep_edges;
    dependency.edges.push(Edge::new(n, head as NodeId, "root"));
    dependency.tops = vec![n];

    SynthSentence {
        id,
        text: b.text,
        words: b.words,
        tags: b.tags,
        constituency,
        dependency,
    }
}

/// `n` sentences drawn from the grammar; ids are `syn{seed}-{k}`.
pub fn generate_synthetic_corpus(seed: u64, n: usize) -> Vec<SynthSentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| build(format!("syn{seed}-{k}"), &sample(&mut rng, "TOP", 0)))
        .collect()
}

/// Tokenizer tables covering the corpus alphabet, with whole-word merges for
/// the most frequent words (sentence-initial and space-prefixed forms are
/// counted separately) until `max_vocab` entries exist.
pub fn synth_tokenizer(sentences: &[SynthSentence], max_vocab: usize) -> Result<TokenizerTables> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for s in sentences {
        for (k, w) in s.words.iter().enumerate() {
            let form = if k == 0 { w.clone() } else { format!(" {w}") };
            *counts.entry(form).or_default() += 1;
        }
    }
    let mut forms: Vec<(String, usize)> = counts.into_iter().collect();
    forms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words: Vec<&str> = forms.iter().map(|(f, _)| f.as_str()).collect();
    TokenizerTables::from_word_chains(&words, Some(max_vocab))
}

/// Gaussian embeddings with standard deviation `1 / sqrt(dim)`.
pub fn synth_embeddings(rows: usize, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (dim.max(1) as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let data = (0..rows * dim).map(|_| normal.sample(&mut rng) as f32).collect();
    EmbeddingTable::new(rows, dim, data)
}

/// Add-k smoothed bigram model; the row for the first token of a sentence
/// conditions on a begin-of-sentence state.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramLm {
    vocab: usize,
    k: f64,
    /// `(vocab + 1) × vocab` counts; row `vocab` is the begin state.
    counts: Vec<u32>,
}

impl BigramLm {
    pub fn fit<'a>(vocab: usize, k: f64, sentences: impl IntoIterator<Item = &'a [u32]>) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Config("add-k smoothing needs k > 0".into()));
        }
        let mut counts = vec![0u32; (vocab + 1) * vocab];
        for ids in sentences {
            let mut prev = vocab;
            for &t in ids {
                if t as usize >= vocab {
                    return Err(Error::Input(format!("token {t} outside vocabulary of {vocab}")));
                }
                counts[prev * vocab + t as usize] += 1;
                prev = t as usize;
            }
        }
        Ok(BigramLm { vocab, k, counts })
    }

    /// Log-probability rows, one per token of `ids`.
    pub fn logits(&self, ids: &[u32]) -> Vec<f32> {
        let v = self.vocab;
        let mut out = Vec::with_capacity(ids.len() * v);
        let mut prev = v;
        for &t in ids {
            let row = &self.counts[prev * v..(prev + 1) * v];
            let total: f64 = row.iter().map(|&c| c as f64).sum::<f64>() + self.k * v as f64;
            out.extend(row.iter().map(|&c| ((c as f64 + self.k) / total).ln() as f32));
            prev = t as usize;
        }
        out
    }

    /// LGT1 contents for tokenized sentences `(id, token ids)`.
    pub fn export<'a>(&self, sentences: impl IntoIterator<Item = (&'a str, &'a [u32])>) -> Result<BaseLogits> {
        BaseLogits::from_sentences(
            self.vocab,
            sentences.into_iter().map(|(id, ids)| (id, self.logits(ids))),
        )
    }
}

/// Word-level tag lines, one sentence per line.
pub fn tags_text(sentences: &[SynthSentence]) -> String {
    sentences.iter().map(|s| s.tags.join(" ") + "\n").collect()
}

/// Occurrences of each edge label in a set of graphs.
pub fn label_histogram<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> BTreeMap<String, usize> {
    let mut h = BTreeMap::new();
    for g in graphs {
        for e in &g.edges {
            *h.entry(e.label.clone()).or_default() += 1;
        }
    }
    h
}
