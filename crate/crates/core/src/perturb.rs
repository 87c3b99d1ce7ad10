//! Ablation perturbations: within-graph shuffles of edge labels and of node
//! anchorings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Test,
    Both,
}

impl Phase {
    pub fn covers(self, other: Phase) -> bool {
        self == Phase::Both || self == other
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub shuffle_labels: bool,
    pub shuffle_anchors: bool,
    pub phase: Phase,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.shuffle_labels && !self.shuffle_anchors {
            return Err(Error::Config(
                "a perturbation must shuffle labels, anchors, or both".into(),
            ));
        }
        Ok(())
    }
}

/// Permutes the edge labels of `g` across its edges.
pub fn shuffle_labels(g: &Graph, rng: &mut ChaCha8Rng) -> Graph {
    let mut labels: Vec<String> = g.edges.iter().map(|e| e.label.clone()).collect();
    labels.shuffle(rng);
    let mut out = g.clone();
    for (e, l) in out.edges.iter_mut().zip(labels) {
        e.label = l;
    }
    out
}

/// Permutes the anchor lists of `g` across all of its nodes, including
/// unanchored ones.
pub fn shuffle_anchors(g: &Graph, rng: &mut ChaCha8Rng) -> Graph {
    let mut anchors: Vec<_> = g.nodes.iter().map(|n| n.anchors.clone()).collect();
    anchors.shuffle(rng);
    let mut out = g.clone();
    for (n, a) in out.nodes.iter_mut().zip(anchors) {
        n.anchors = a;
    }
    out
}

const LABEL_STREAM: u64 = 0;
const ANCHOR_STREAM: u64 = 1;

/// Generator for one graph: `seed` selects the key, the sentence index and
/// the shuffle kind select the stream.
pub fn graph_rng(seed: u64, sentence: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sentence as u64) << 1) | stream);
    rng
}

/// Applies `spec` to a corpus if it covers `phase`; otherwise returns the
/// graphs unchanged.
pub fn perturb_corpus(graphs: &[Graph], spec: &PerturbSpec, phase: Phase) -> Result<Vec<Graph>> {
    spec.validate()?;
    if !spec.phase.covers(phase) {
        return Ok(graphs.to_vec());
    }
    Ok(graphs
        .iter()
        .enumerate()
        .map(|(k, g)| {
            let mut g = g.clone();
            if spec.shuffle_labels {
                g = shuffle_labels(&g, &mut graph_rng(spec.seed, k, LABEL_STREAM));
            }
            if spec.shuffle_anchors {
                g = shuffle_anchors(&g, &mut graph_rng(spec.seed, k, ANCHOR_STREAM));
            }
            g
        })
        .collect())
}
