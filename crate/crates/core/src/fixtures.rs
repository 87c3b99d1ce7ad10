//! Small hand-built graphs and tokenizer tables for the sentence
//! "Numerous injuries were reported", in several annotation styles.

use crate::graph::{Edge, Graph, Node, Span, ROOT_NODE_LABEL};
use crate::tokenize::TokenizerTables;

pub const FIG1_TEXT: &str = "Numerous injuries were reported";

/// Tables that split the sentence into `N umerous Ġinjuries Ġwere Ġreported`.
pub fn fig1_tables() -> TokenizerTables {
    TokenizerTables::from_word_chains(&["N", "umerous", " injuries", " were", " reported"], None)
        .expect("fixture tables are consistent")
}

const NUMEROUS: Span = Span { from: 0, to: 8 };
const INJURIES: Span = Span { from: 9, to: 17 };
const WERE: Span = Span { from: 18, to: 22 };
const REPORTED: Span = Span { from: 23, to: 31 };

/// Semantic constituency graph: a quantifier node spanning "Numerous injuries",
/// the adjective, the noun, and the predicate; "were" is unanchored.
pub fn fig1_eds() -> Graph {
    let mut g = Graph::new("fig1-eds", FIG1_TEXT);
    g.nodes = vec![
        Node::new(0, vec![Span::new(0, 17)]).with_label("udef_q"),
        Node::new(1, vec![NUMEROUS]).with_label("numerous_a_1"),
        Node::new(2, vec![INJURIES]).with_label("_injury_n_1"),
        Node::new(3, vec![REPORTED]).with_label("_report_v_to"),
    ];
    g.edges = vec![Edge::new(1, 2, "ARG1"), Edge::new(0, 2, "BV"), Edge::new(3, 2, "ARG2")];
    g.tops = vec![3];
    g
}

/// Syntactic dependency tree headed by "reported".
pub fn fig1_ud() -> Graph {
    let mut g = Graph::new("fig1-ud", FIG1_TEXT);
    g.nodes = vec![
        Node::new(0, vec![NUMEROUS]),
        Node::new(1, vec![INJURIES]),
        Node::new(2, vec![WERE]),
        Node::new(3, vec![REPORTED]),
    ];
    g.edges = vec![
        Edge::new(3, 1, "nsubj:pass"),
        Edge::new(3, 2, "aux:pass"),
        Edge::new(1, 0, "amod"),
    ];
    g.tops = vec![3];
    g
}

/// [`fig1_ud`] with an explicit unanchored ROOT node.
pub fn fig1_ud_rooted() -> Graph {
    let mut g = fig1_ud();
    g.nodes.push(Node::new(4, vec![]).with_label(ROOT_NODE_LABEL));
    g.edges.push(Edge::new(4, 3, "root"));
    g.tops = vec![4];
    g
}

/// Tectogrammatical-style graph with an abstract root and a multiword
/// anchor covering "were reported".
pub fn fig1_ptg() -> Graph {
    let mut g = Graph::new("fig1-ptg", FIG1_TEXT);
    g.nodes = vec![
        Node::new(0, vec![]),
        Node::new(1, vec![NUMEROUS]),
        Node::new(2, vec![INJURIES]),
        Node::new(3, vec![WERE, REPORTED]),
    ];
    g.edges = vec![Edge::new(0, 3, "PRED"), Edge::new(2, 1, "EXT"), Edge::new(3, 2, "PAT")];
    g.tops = vec![0];
    g
}
