//! Per-token slicing: typed relatives of the anchor node, future masking and
//! proximity ranking.
//!
//! Discovery order of a relative is the lexicographic order of the edge
//! indices along the path that found it (e.g. for a sibling: the parent edge,
//! then the parent's outgoing edge).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{Adjacency, Graph, NodeId};
use crate::tokenize::AlignedSentence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeType {
    Parent,
    Sibling,
    Grandparent,
    Aunt,
    Child,
    Coparent,
}

impl RelativeType {
    /// Fixed global order, also the slot order of the encoder.
    pub const ALL: [RelativeType; 6] = [
        RelativeType::Parent,
        RelativeType::Sibling,
        RelativeType::Grandparent,
        RelativeType::Aunt,
        RelativeType::Child,
        RelativeType::Coparent,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> char {
        ['P', 'B', 'O', 'T', 'C', 'R'][self.index()]
    }
}

impl fmt::Display for RelativeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RelativeType::Parent => "parent",
            RelativeType::Sibling => "sibling",
            RelativeType::Grandparent => "grandparent",
            RelativeType::Aunt => "aunt",
            RelativeType::Child => "child",
            RelativeType::Coparent => "coparent",
        };
        f.write_str(name)
    }
}

/// What the future mask left of a relative's anchoring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorState {
    /// Some anchor tokens precede the target and are visible.
    Accessible,
    /// Anchored at the target token itself; anchors removed.
    Stripped,
    /// The node has no anchors at all.
    Unanchored,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relative {
    pub node: NodeId,
    pub rel: RelativeType,
    /// Label of the edge that selected this relative.
    pub label: String,
    /// Intermediate nodes between the anchor and the relative.
    pub via: Vec<NodeId>,
    /// Rank in discovery order among the relatives of its type (renumbered
    /// after masking).
    pub discovery: usize,
    pub state: AnchorState,
    /// Accessible anchor token positions (ascending, all before the target).
    pub positions: Vec<usize>,
    /// Token ids at `positions`.
    pub tokens: Vec<u32>,
}

impl Relative {
    /// Distance from the target to the nearest accessible anchor token.
    pub fn distance(&self, target: usize) -> Option<usize> {
        self.positions.last().map(|&p| target - p)
    }
}

/// One list per relative type, indexed by [`RelativeType::index`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relatives(pub [Vec<Relative>; 6]);

impl Relatives {
    pub fn get(&self, rel: RelativeType) -> &[Relative] {
        &self.0[rel.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    fn push(&mut self, rel: RelativeType, node: NodeId, label: &str, via: Vec<NodeId>) {
        let list = &mut self.0[rel.index()];
        list.push(Relative {
            node,
            rel,
            label: label.to_string(),
            via,
            discovery: list.len(),
            state: AnchorState::Unanchored,
            positions: Vec::new(),
            tokens: Vec::new(),
        });
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slice {
    pub graph_id: String,
    pub position: usize,
    /// Token id being predicted.
    pub target: u32,
    pub anchor: Option<NodeId>,
    pub relatives: Relatives,
    /// Preceding tokens of the current anchor group (unanalyzable targets only).
    pub context_positions: Vec<usize>,
    pub context_tokens: Vec<u32>,
}

/// Unmasked typed relatives of `anchor`, in discovery order.
///
/// Aunts exclude the parent they were reached through and the anchor itself;
/// siblings and coparents exclude the anchor.
pub fn collect_relatives(g: &Graph, adj: &Adjacency, anchor: NodeId) -> Relatives {
    let mut out = Relatives::default();
    let edge = |i: usize| &g.edges[i];

    for &pe in adj.incoming(anchor) {
        let p = edge(pe).source;
        out.push(RelativeType::Parent, p, &edge(pe).label, vec![]);
    }
    for &pe in adj.incoming(anchor) {
        let p = edge(pe).source;
        for &se in adj.outgoing(p) {
            let s = edge(se).target;
            if s != anchor {
                out.push(RelativeType::Sibling, s, &edge(se).label, vec![p]);
            }
        }
    }
    for &pe in adj.incoming(anchor) {
        let p = edge(pe).source;
        for &ge in adj.incoming(p) {
            out.push(RelativeType::Grandparent, edge(ge).source, &edge(ge).label, vec![p]);
        }
    }
    for &pe in adj.incoming(anchor) {
        let p = edge(pe).source;
        for &ge in adj.incoming(p) {
            let o = edge(ge).source;
            for &te in adj.outgoing(o) {
                let t = edge(te).target;
                if t != p && t != anchor {
                    out.push(RelativeType::Aunt, t, &edge(te).label, vec![p, o]);
                }
            }
        }
    }
    for &ce in adj.outgoing(anchor) {
        out.push(RelativeType::Child, edge(ce).target, &edge(ce).label, vec![]);
    }
    for &ce in adj.outgoing(anchor) {
        let c = edge(ce).target;
        for &re in adj.incoming(c) {
            let r = edge(re).source;
            if r != anchor {
                out.push(RelativeType::Coparent, r, &edge(re).label, vec![c]);
            }
        }
    }
    out
}

/// Visibility of a node from target position `i`.
enum Visibility {
    Future,
    Visible(AnchorState, Vec<usize>),
}

fn visibility(aligned: &AlignedSentence, node: NodeId, i: usize) -> Visibility {
    let positions = aligned.positions_of(node);
    if positions.is_empty() {
        Visibility::Visible(AnchorState::Unanchored, vec![])
    } else if positions.contains(&i) {
        Visibility::Visible(AnchorState::Stripped, vec![])
    } else if positions[0] > i {
        Visibility::Future
    } else {
        let past: Vec<usize> = positions.iter().copied().filter(|&p| p < i).collect();
        Visibility::Visible(AnchorState::Accessible, past)
    }
}

/// Drops relatives that are, or are reached through, nodes anchored only
/// after position `i`; strips anchors overlapping `i`; keeps the first
/// surviving occurrence of each node per type.
pub fn apply_future_mask(relatives: Relatives, aligned: &AlignedSentence, i: usize) -> Relatives {
    let ids = aligned.tokens.ids();
    let mut out = Relatives::default();
    for (list, kept) in relatives.0.into_iter().zip(out.0.iter_mut()) {
        for mut r in list {
            if kept.iter().any(|k| k.node == r.node) {
                continue;
            }
            if r.via
                .iter()
                .any(|&v| matches!(visibility(aligned, v, i), Visibility::Future))
            {
                continue;
            }
            let Visibility::Visible(state, positions) = visibility(aligned, r.node, i) else {
                continue;
            };
            r.state = state;
            r.discovery = kept.len();
            r.tokens = positions.iter().map(|&p| ids[p]).collect();
            r.positions = positions;
            kept.push(r);
        }
    }
    out
}

/// Stable sort per type: anchored relatives by distance to `i`, then
/// anchorless ones in discovery order.
pub fn rank_relatives(mut relatives: Relatives, i: usize) -> Relatives {
    for list in relatives.0.iter_mut() {
        list.sort_by_key(|r| match r.distance(i) {
            Some(d) => (0, d, r.discovery),
            None => (1, 0, r.discovery),
        });
    }
    relatives
}

/// Slice for position `i`. Unanalyzable tokens reuse the slice of the most
/// recent analyzable token and add the tokens in between as context; if no
/// analyzable token precedes, the slice is empty.
pub fn extract_slice(aligned: &AlignedSentence, adj: &Adjacency, g: &Graph, i: usize) -> Slice {
    let ids = aligned.tokens.ids();
    let source = (0..=i).rev().find(|&j| aligned.aligned[j].is_analyzable());
    let mut slice = Slice {
        graph_id: aligned.graph_id.clone(),
        position: i,
        target: ids[i],
        anchor: None,
        relatives: Relatives::default(),
        context_positions: vec![],
        context_tokens: vec![],
    };
    let Some(j) = source else { return slice };
    let anchor = aligned.aligned[j].anchor.expect("analyzable tokens have an anchor");
    let collected = collect_relatives(g, adj, anchor);
    slice.anchor = Some(anchor);
    slice.relatives = rank_relatives(apply_future_mask(collected, aligned, j), j);
    slice.context_positions = (j..i).collect();
    slice.context_tokens = ids[j..i].to_vec();
    slice
}

/// Slices for every token of a sentence.
pub fn extract_slices(aligned: &AlignedSentence, g: &Graph) -> Vec<Slice> {
    let adj = g.adjacency();
    (0..aligned.len()).map(|i| extract_slice(aligned, &adj, g, i)).collect()
}
