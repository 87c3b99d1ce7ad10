//! Random anchored DAGs and a brute-force slicer written independently of
//! `slicelm::slice`: relatives come from exhaustive edge-path enumeration and
//! visibility from raw span overlap.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slicelm::graph::{Edge, Graph, Node, NodeId, Span};
use slicelm::slice::{AnchorState, RelativeType};
use slicelm::tokenize::{bbpe_tokenize, AlignedSentence, TokenSequence, TokenizerTables};

pub struct Sample {
    pub graph: Graph,
    pub tables: TokenizerTables,
}

/// A short sentence over a 3-letter alphabet with a random anchored DAG.
///
/// Anchors are mostly whole words or word ranges; some are discontiguous,
/// some cover part of a word, some nodes are unanchored.
pub fn random_sample(seed: u64, max_nodes: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_words = rng.gen_range(1..=7);
    let words: Vec<String> = (0..n_words)
        .map(|_| {
            let len = rng.gen_range(1..=4);
            (0..len).map(|_| *b"abc".choose(&mut rng).unwrap() as char).collect()
        })
        .collect();
    let text = words.join(" ");
    let mut word_spans = Vec::new();
    let mut at = 0;
    for w in &words {
        word_spans.push(Span::new(at, at + w.len()));
        at += w.len() + 1;
    }

    // a budget small enough that longer words split into several tokens
    let chain_words = ["a", "b", "c", " a", " b", " c", "ab", " ab", "ca", " abc", "bb"];
    let tables = TokenizerTables::from_word_chains(&chain_words, Some(rng.gen_range(5..=16))).unwrap();

    let n_nodes = rng.gen_range(1..=max_nodes);
    let mut ids: Vec<NodeId> = (0..n_nodes as NodeId).map(|k| k * 2 + rng.gen_range(0..2)).collect();
    ids.shuffle(&mut rng);
    let nodes: Vec<Node> = ids
        .iter()
        .map(|&id| {
            let anchors = match rng.gen_range(0..10) {
                0 | 1 => vec![],
                2 => {
                    let w = word_spans[rng.gen_range(0..n_words)];
                    let cut = rng.gen_range(w.from + 1..=w.to);
                    vec![Span::new(w.from, cut)]
                }
                3 if n_words >= 3 => {
                    let a = rng.gen_range(0..n_words - 2);
                    let b = rng.gen_range(a + 2..n_words);
                    vec![word_spans[a], word_spans[b]]
                }
                4 | 5 => {
                    let a = rng.gen_range(0..n_words);
                    let b = rng.gen_range(a..n_words);
                    vec![Span::new(word_spans[a].from, word_spans[b].to)]
                }
                _ => vec![word_spans[rng.gen_range(0..n_words)]],
            };
            Node::new(id, anchors)
        })
        .collect();

    // edges follow a random topological order, so the graph is acyclic
    let mut order = ids.clone();
    order.shuffle(&mut rng);
    let density: f64 = rng.gen_range(0.1..0.5);
    let mut edges = Vec::new();
    for a in 0..order.len() {
        for b in a + 1..order.len() {
            if rng.gen_bool(density) {
                let label = ["a", "b", "c", "d"][rng.gen_range(0..4)];
                edges.push(Edge::new(order[a], order[b], label));
            }
        }
    }
    edges.shuffle(&mut rng);

    let mut graph = Graph::new(format!("rand-{seed}"), text);
    graph.nodes = nodes;
    graph.edges = edges;
    graph.tops = vec![order[0]];
    Sample { graph, tables }
}

pub fn tokens_of(sample: &Sample) -> TokenSequence {
    bbpe_tokenize(&sample.graph.text, &sample.tables).unwrap()
}

/// Relative as (node, label, via, state, accessible positions).
pub type OracleRelative = (NodeId, String, Vec<NodeId>, AnchorState, Vec<usize>);

#[derive(Debug, PartialEq)]
pub struct OracleSlice {
    pub anchor: Option<NodeId>,
    pub relatives: [Vec<OracleRelative>; 6],
    pub context: Vec<usize>,
}

fn token_positions(g: &Graph, tokens: &TokenSequence, node: NodeId) -> Vec<usize> {
    let n = g.nodes.iter().find(|n| n.id == node).unwrap();
    tokens
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| n.anchors.iter().any(|a| a.from < t.span.to && t.span.from < a.to))
        .map(|(p, _)| p)
        .collect()
}

/// Unmasked relatives in discovery order, one entry per discovering path.
pub fn oracle_collect(g: &Graph, a: NodeId) -> [Vec<(NodeId, String, Vec<NodeId>)>; 6] {
    let e = |k: usize| &g.edges[k];
    let m = g.edges.len();
    let mut out: [Vec<(NodeId, String, Vec<NodeId>)>; 6] = Default::default();
    let into_a: Vec<usize> = (0..m).filter(|&k| e(k).target == a && e(k).source != a).collect();
    let from_a: Vec<usize> = (0..m).filter(|&k| e(k).source == a && e(k).target != a).collect();
    for &k in &into_a {
        out[0].push((e(k).source, e(k).label.clone(), vec![]));
    }
    for &k1 in &into_a {
        for k2 in 0..m {
            if e(k2).source == e(k1).source && e(k2).target != a && e(k2).target != e(k2).source {
                out[1].push((e(k2).target, e(k2).label.clone(), vec![e(k1).source]));
            }
        }
    }
    for &k1 in &into_a {
        for k2 in 0..m {
            if e(k2).target == e(k1).source && e(k2).source != e(k2).target {
                out[2].push((e(k2).source, e(k2).label.clone(), vec![e(k1).source]));
            }
        }
    }
    for &k1 in &into_a {
        for k2 in 0..m {
            if e(k2).target != e(k1).source || e(k2).source == e(k2).target {
                continue;
            }
            for k3 in 0..m {
                let t = e(k3).target;
                if e(k3).source == e(k2).source && t != e(k1).source && t != a && t != e(k3).source {
                    out[3].push((t, e(k3).label.clone(), vec![e(k1).source, e(k2).source]));
                }
            }
        }
    }
    for &k in &from_a {
        out[4].push((e(k).target, e(k).label.clone(), vec![]));
    }
    for &k1 in &from_a {
        for k2 in 0..m {
            if e(k2).target == e(k1).target && e(k2).source != a && e(k2).source != e(k2).target {
                out[5].push((e(k2).source, e(k2).label.clone(), vec![e(k1).target]));
            }
        }
    }
    out
}

pub fn oracle_slice(g: &Graph, aligned: &AlignedSentence, i: usize) -> OracleSlice {
    let tokens = &aligned.tokens;
    let Some(j) = (0..=i).rev().find(|&j| aligned.aligned[j].unanalyzable.is_none()) else {
        return OracleSlice {
            anchor: None,
            relatives: Default::default(),
            context: vec![],
        };
    };
    let a = aligned.aligned[j].anchor.unwrap();
    let future = |v: NodeId| {
        let p = token_positions(g, tokens, v);
        !p.is_empty() && p.iter().all(|&x| x > j)
    };
    let mut relatives: [Vec<OracleRelative>; 6] = Default::default();
    for (t, list) in oracle_collect(g, a).into_iter().enumerate() {
        let mut kept: Vec<(OracleRelative, usize)> = Vec::new();
        for (node, label, via) in list {
            if future(node) || via.iter().any(|&v| future(v)) {
                continue;
            }
            if kept.iter().any(|(r, _)| r.0 == node) {
                continue;
            }
            let p = token_positions(g, tokens, node);
            let (state, acc) = if p.is_empty() {
                (AnchorState::Unanchored, vec![])
            } else if p.contains(&j) {
                (AnchorState::Stripped, vec![])
            } else {
                (AnchorState::Accessible, p.into_iter().filter(|&x| x < j).collect())
            };
            let d = kept.len();
            kept.push(((node, label, via, state, acc), d));
        }
        kept.sort_by_key(|((.., acc), d)| match acc.last() {
            Some(&p) => (0, j - p, *d),
            None => (1, 0, *d),
        });
        relatives[t] = kept.into_iter().map(|(r, _)| r).collect();
    }
    OracleSlice {
        anchor: Some(a),
        relatives,
        context: (j..i).collect(),
    }
}

pub fn as_oracle(s: &slicelm::slice::Slice) -> OracleSlice {
    let mut relatives: [Vec<OracleRelative>; 6] = Default::default();
    for t in RelativeType::ALL {
        relatives[t.index()] = s
            .relatives
            .get(t)
            .iter()
            .map(|r| (r.node, r.label.clone(), r.via.clone(), r.state, r.positions.clone()))
            .collect();
    }
    OracleSlice {
        anchor: s.anchor,
        relatives,
        context: s.context_positions.clone(),
    }
}
