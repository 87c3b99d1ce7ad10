//! Anchored, edge-labeled sentence graphs.
//!
//! Graphs are read from and written to MRP-style JSON lines. Anchors are stored
//! as half-open *byte* ranges into the UTF-8 sentence text; the interchange
//! format uses character offsets, and the conversion happens at the I/O
//! boundary only.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub type NodeId = u32;

/// Label carried by the artificial edge added to edgeless graphs.
pub const DUMMY_LABEL: &str = "__DUMMY__";
/// Label placed on the edge into a preterminal after PTB label conversion.
pub const TERMINAL_LABEL: &str = "TERM";
/// Node label marking the artificial root of dependency trees.
pub const ROOT_NODE_LABEL: &str = "ROOT";

/// Half-open byte range `[from, to)` into the sentence text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub from: usize,
    pub to: usize,
}

impl Span {
    pub fn new(from: usize, to: usize) -> Self {
        Span { from, to }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.from < other.to && other.from < self.to
    }

    pub fn is_empty(&self) -> bool {
        self.from >= self.to
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.from, self.to)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub anchors: Vec<Span>,
    pub label: Option<String>,
}

impl Node {
    pub fn new(id: NodeId, anchors: Vec<Span>) -> Self {
        Node {
            id,
            anchors,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn overlaps(&self, span: &Span) -> bool {
        self.anchors.iter().any(|a| a.overlaps(span))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub label: String,
}

impl Edge {
    pub fn new(source: NodeId, target: NodeId, label: impl Into<String>) -> Self {
        Edge {
            source,
            target,
            label: label.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub id: String,
    pub text: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub tops: Vec<NodeId>,
}

/// Incidence lists over edge indices, keyed by node position in `Graph::nodes`.
#[derive(Clone, Debug)]
pub struct Adjacency {
    index: HashMap<NodeId, usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl Adjacency {
    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Edge indices entering `id`, in edge-list order. Self-loops are skipped.
    pub fn incoming(&self, id: NodeId) -> &[usize] {
        self.position(id).map_or(&[], |p| &self.incoming[p])
    }

    /// Edge indices leaving `id`, in edge-list order. Self-loops are skipped.
    pub fn outgoing(&self, id: NodeId) -> &[usize] {
        self.position(id).map_or(&[], |p| &self.outgoing[p])
    }

    /// Number of incident edges (parents plus children, parallel edges counted separately).
    pub fn degree(&self, id: NodeId) -> usize {
        self.incoming(id).len() + self.outgoing(id).len()
    }
}

impl Graph {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Graph {
            id: id.into(),
            text: text.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            tops: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn adjacency(&self) -> Adjacency {
        let index: HashMap<NodeId, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        let mut outgoing = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            if edge.source == edge.target {
                continue;
            }
            if let (Some(&s), Some(&t)) = (index.get(&edge.source), index.get(&edge.target)) {
                outgoing[s].push(e);
                incoming[t].push(e);
            }
        }
        Adjacency {
            index,
            incoming,
            outgoing,
        }
    }

    /// Drops self-loop edges, returning how many were removed.
    pub fn drop_self_loops(&mut self) -> usize {
        let before = self.edges.len();
        self.edges.retain(|e| e.source != e.target);
        before - self.edges.len()
    }

    fn max_node_id(&self) -> Option<NodeId> {
        self.nodes.iter().map(|n| n.id).max()
    }
}

// ---------------------------------------------------------------------------
// MRP JSON lines

fn char_to_byte_table(text: &str) -> Vec<usize> {
    let mut table: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    table.push(text.len());
    table
}

fn char_to_byte(table: &[usize], offset: usize) -> usize {
    match table.get(offset) {
        Some(&b) => b,
        // Past the end: keep the overshoot so validation can report it.
        None => table[table.len() - 1] + (offset + 1 - table.len()),
    }
}

fn byte_to_char(text: &str, offset: usize) -> usize {
    if offset >= text.len() {
        return text.chars().count() + (offset - text.len());
    }
    let mut boundary = offset;
    while !text.is_char_boundary(boundary) {
        boundary -= 1;
    }
    text[..boundary].chars().count()
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::Schema(format!("missing required field `{ctx}{name}`")))
}

fn as_u64(v: &Value, what: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| Error::Schema(format!("`{what}` must be a non-negative integer")))
}

fn as_node_id(v: &Value, what: &str) -> Result<NodeId> {
    let raw = as_u64(v, what)?;
    NodeId::try_from(raw).map_err(|_| Error::Schema(format!("`{what}` is out of range")))
}

fn as_array<'a>(v: &'a Value, what: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::Schema(format!("`{what}` must be an array")))
}

fn as_object<'a>(v: &'a Value, what: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::Schema(format!("`{what}` must be an object")))
}

/// Parses one MRP graph object. Unknown fields are ignored.
pub fn parse_mrp_line(line: &str) -> Result<Graph> {
    let value: Value = serde_json::from_str(line).map_err(|e| {
        // serde_json reports 1-based line/column; convert to a byte offset.
        let position = line
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::Json {
            position,
            message: e.to_string(),
        }
    })?;
    let obj = as_object(&value, "graph")?;

    let id = match field(obj, "id", "")? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        _ => return Err(Error::Schema("`id` must be a string or number".into())),
    };
    let text = field(obj, "input", "")?
        .as_str()
        .ok_or_else(|| Error::Schema("`input` must be a string".into()))?
        .to_string();
    let table = char_to_byte_table(&text);

    let mut nodes = Vec::new();
    for (i, raw) in as_array(field(obj, "nodes", "")?, "nodes")?.iter().enumerate() {
        let ctx = format!("nodes[{i}].");
        let node = as_object(raw, &format!("nodes[{i}]"))?;
        let nid = as_node_id(field(node, "id", &ctx)?, &format!("{ctx}id"))?;
        let mut anchors = Vec::new();
        if let Some(list) = node.get("anchors") {
            for (j, a) in as_array(list, &format!("{ctx}anchors"))?.iter().enumerate() {
                let actx = format!("{ctx}anchors[{j}].");
                let a = as_object(a, &format!("{ctx}anchors[{j}]"))?;
                let from = as_u64(field(a, "from", &actx)?, &format!("{actx}from"))? as usize;
                let to = as_u64(field(a, "to", &actx)?, &format!("{actx}to"))? as usize;
                anchors.push(Span::new(char_to_byte(&table, from), char_to_byte(&table, to)));
            }
        }
        let label = node.get("label").and_then(Value::as_str).map(str::to_string);
        nodes.push(Node {
            id: nid,
            anchors,
            label,
        });
    }

    let known: BTreeSet<NodeId> = nodes.iter().map(|n| n.id).collect();
    let mut edges = Vec::new();
    for (i, raw) in as_array(field(obj, "edges", "")?, "edges")?.iter().enumerate() {
        let ctx = format!("edges[{i}].");
        let edge = as_object(raw, &format!("edges[{i}]"))?;
        let source = as_node_id(field(edge, "source", &ctx)?, &format!("{ctx}source"))?;
        let target = as_node_id(field(edge, "target", &ctx)?, &format!("{ctx}target"))?;
        for endpoint in [source, target] {
            if !known.contains(&endpoint) {
                return Err(Error::Schema(format!("`{ctx}` references missing node {endpoint}")));
            }
        }
        let label = field(edge, "label", &ctx)?
            .as_str()
            .ok_or_else(|| Error::Schema(format!("`{ctx}label` must be a string")))?
            .to_string();
        edges.push(Edge { source, target, label });
    }

    let mut tops = Vec::new();
    if let Some(list) = obj.get("tops") {
        for (i, t) in as_array(list, "tops")?.iter().enumerate() {
            tops.push(as_node_id(t, &format!("tops[{i}]"))?);
        }
    }

    Ok(Graph {
        id,
        text,
        nodes,
        edges,
        tops,
    })
}

/// Serializes the supported field subset back into one MRP JSON line.
pub fn to_mrp_line(g: &Graph) -> String {
    let nodes: Vec<Value> = g
        .nodes
        .iter()
        .map(|n| {
            let mut obj = Map::new();
            obj.insert("id".into(), json!(n.id));
            if let Some(label) = &n.label {
                obj.insert("label".into(), json!(label));
            }
            if !n.anchors.is_empty() {
                let anchors: Vec<Value> = n
                    .anchors
                    .iter()
                    .map(|a| json!({"from": byte_to_char(&g.text, a.from), "to": byte_to_char(&g.text, a.to)}))
                    .collect();
                obj.insert("anchors".into(), Value::Array(anchors));
            }
            Value::Object(obj)
        })
        .collect();
    let edges: Vec<Value> = g
        .edges
        .iter()
        .map(|e| json!({"source": e.source, "target": e.target, "label": e.label}))
        .collect();
    json!({
        "id": g.id,
        "input": g.text,
        "tops": g.tops,
        "nodes": nodes,
        "edges": edges,
    })
    .to_string()
}

pub fn read_mrp<R: BufRead>(reader: R) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let g = parse_mrp_line(&line).map_err(|e| match e {
            Error::Json { position, message } => Error::Json {
                position,
                message: format!("line {}: {message}", lineno + 1),
            },
            Error::Schema(m) => {
                let id = serde_json::from_str::<Value>(&line).ok().and_then(|v| {
                    v.get("id")
                        .map(|id| id.as_str().map_or_else(|| id.to_string(), str::to_string))
                });
                match id {
                    Some(id) => Error::Schema(format!("line {} (graph {id}): {m}", lineno + 1)),
                    None => Error::Schema(format!("line {}: {m}", lineno + 1)),
                }
            }
            other => other,
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn read_mrp_file(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    read_mrp(BufReader::new(File::open(path)?))
}

pub fn write_mrp_file(path: impl AsRef<Path>, graphs: &[Graph]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for g in graphs {
        writeln!(out, "{}", to_mrp_line(g))?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateNode {
        node: NodeId,
    },
    DanglingEndpoint {
        edge: usize,
        node: NodeId,
    },
    SelfLoop {
        edge: usize,
        node: NodeId,
    },
    /// Nodes that could not be topologically ordered.
    Cycle {
        nodes: Vec<NodeId>,
    },
    BadSpan {
        node: NodeId,
        span: Span,
        reason: String,
    },
    UnorderedAnchors {
        node: NodeId,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_graph(g: &Graph) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for n in &g.nodes {
        if !seen.insert(n.id) {
            violations.push(Violation::DuplicateNode { node: n.id });
        }
    }

    for (e, edge) in g.edges.iter().enumerate() {
        for endpoint in [edge.source, edge.target] {
            if !seen.contains(&endpoint) {
                violations.push(Violation::DanglingEndpoint {
                    edge: e,
                    node: endpoint,
                });
            }
        }
        if edge.source == edge.target {
            violations.push(Violation::SelfLoop {
                edge: e,
                node: edge.source,
            });
        }
    }

    // Kahn's algorithm; whatever cannot be ordered sits on or behind a cycle.
    // Duplicate ids resolve to one position; the shadowed copies are skipped.
    let adj = g.adjacency();
    let canonical: Vec<bool> = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| adj.position(n.id) == Some(i))
        .collect();
    let mut indegree: Vec<usize> = g.nodes.iter().map(|n| adj.incoming(n.id).len()).collect();
    let mut queue: Vec<usize> = (0..g.nodes.len())
        .filter(|&i| canonical[i] && indegree[i] == 0)
        .collect();
    let total = canonical.iter().filter(|&&c| c).count();
    let mut ordered = 0;
    while let Some(p) = queue.pop() {
        ordered += 1;
        for &e in adj.outgoing(g.nodes[p].id) {
            if let Some(t) = adj.position(g.edges[e].target) {
                indegree[t] -= 1;
                if indegree[t] == 0 {
                    queue.push(t);
                }
            }
        }
    }
    if ordered < total {
        let mut nodes: Vec<NodeId> = (0..g.nodes.len())
            .filter(|&i| canonical[i] && indegree[i] > 0)
            .map(|i| g.nodes[i].id)
            .collect();
        nodes.sort_unstable();
        violations.push(Violation::Cycle { nodes });
    }

    for n in &g.nodes {
        for a in &n.anchors {
            let reason = if a.from >= a.to {
                Some("inverted or empty")
            } else if a.to > g.text.len() {
                Some("beyond end of text")
            } else {
                None
            };
            if let Some(reason) = reason {
                violations.push(Violation::BadSpan {
                    node: n.id,
                    span: *a,
                    reason: reason.into(),
                });
            }
        }
        if n.anchors.windows(2).any(|w| w[1].from < w[0].to) {
            violations.push(Violation::UnorderedAnchors { node: n.id });
        }
    }

    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Normalization

/// Moves PTB phrase labels from nodes onto each node's single incoming edge.
///
/// Edges into preterminals (leaves) get [`TERMINAL_LABEL`]; their POS labels are
/// discarded, as is the root label, which has no incoming edge to carry it.
pub fn convert_ptb_node_labels(g: &Graph) -> Result<Graph> {
    let adj = g.adjacency();
    for n in &g.nodes {
        let parents = adj.incoming(n.id).len();
        if parents > 1 {
            return Err(Error::NotATree {
                id: g.id.clone(),
                node: n.id,
                parents,
            });
        }
    }
    let mut out = g.clone();
    for edge in &mut out.edges {
        let child = g
            .node(edge.target)
            .ok_or_else(|| Error::Schema(format!("edge into missing node {}", edge.target)))?;
        edge.label = if adj.outgoing(child.id).is_empty() {
            TERMINAL_LABEL.to_string()
        } else {
            child
                .label
                .clone()
                .ok_or_else(|| Error::Schema(format!("internal node {} of {} has no label", child.id, g.id)))?
        };
    }
    for n in &mut out.nodes {
        n.label = None;
    }
    Ok(out)
}

/// Gives edgeless graphs one artificial edge from a fresh root to the lowest-id node.
pub fn ensure_nonempty_edges(g: &Graph) -> Result<Graph> {
    if g.nodes.is_empty() {
        return Err(Error::EmptyGraph { id: g.id.clone() });
    }
    if !g.edges.is_empty() {
        return Ok(g.clone());
    }
    let mut out = g.clone();
    let root = g.max_node_id().expect("nonempty") + 1;
    let lowest = g.nodes.iter().map(|n| n.id).min().expect("nonempty");
    out.nodes.push(Node::new(root, Vec::new()));
    out.edges.push(Edge::new(root, lowest, DUMMY_LABEL));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Framework classification

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkClass {
    Dependency,
    Constituency,
}

/// Whitespace-delimited word spans of `text`.
pub fn word_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = None;
    for (b, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(Span::new(s, b));
                start = None;
            }
            (false, None) => start = Some(b),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(s, text.len()));
    }
    spans
}

fn is_exempt_root(g: &Graph, adj: &Adjacency, n: &Node) -> bool {
    if n.label.as_deref() == Some(ROOT_NODE_LABEL) {
        return true;
    }
    let out = adj.outgoing(n.id);
    n.anchors.is_empty()
        && adj.incoming(n.id).is_empty()
        && !out.is_empty()
        && out.iter().all(|&e| g.edges[e].label == DUMMY_LABEL)
}

/// Dependency iff every (non-root) node is anchored in exactly one word.
pub fn classify_framework(corpus: &[Graph]) -> FrameworkClass {
    for g in corpus {
        let words = word_spans(&g.text);
        let adj = g.adjacency();
        for n in &g.nodes {
            if is_exempt_root(g, &adj, n) {
                continue;
            }
            let covered = words.iter().filter(|w| n.overlaps(w)).count();
            if covered != 1 {
                return FrameworkClass::Constituency;
            }
        }
    }
    FrameworkClass::Dependency
}

// ---------------------------------------------------------------------------
// Label vocabulary

/// Sorted, duplicate-free edge-label inventory; always includes [`DUMMY_LABEL`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        set.insert(DUMMY_LABEL.to_string());
        let labels: Vec<String> = set.into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        LabelVocabulary { labels, index }
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Self {
        Self::from_labels(graphs.into_iter().flat_map(|g| g.edges.iter().map(|e| e.label.clone())))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.labels).expect("strings serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let labels: Vec<String> = serde_json::from_str(s)?;
        Ok(Self::from_labels(labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_object_parses() {
        let g =
            parse_mrp_line(r#"{"id":"s1","input":"ab","nodes":[{"id":0,"anchors":[{"from":0,"to":2}]}],"edges":[]}"#)
                .unwrap();
        assert_eq!(g.id, "s1");
        assert_eq!(g.text, "ab");
        assert_eq!(g.nodes, vec![Node::new(0, vec![Span::new(0, 2)])]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn dangling_endpoint_is_schema_error() {
        let err = parse_mrp_line(
            r#"{"id":"s1","input":"ab","nodes":[{"id":0}],"edges":[{"source":0,"target":9,"label":"x"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(m) if m.contains("missing node 9")));
    }

    #[test]
    fn missing_field_is_named() {
        let err = parse_mrp_line(r#"{"id":"s1","nodes":[],"edges":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(m) if m.contains("`input`")));
        let err = parse_mrp_line(r#"{"id":"s1","input":"","nodes":[{"anchors":[]}],"edges":[]}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(m) if m.contains("nodes[0].id")));
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_mrp_line(r#"{"id": "s1", "input": }"#).unwrap_err();
        match err {
            Error::Json { position, .. } => assert_eq!(position, 22),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let g = parse_mrp_line(
            r#"{"id":"s1","flavor":1,"framework":"eds","input":"a","nodes":[{"id":0,"properties":["x"]}],"edges":[]}"#,
        )
        .unwrap();
        assert_eq!(g.nodes.len(), 1);
    }

    #[test]
    fn character_offsets_become_byte_offsets() {
        let g = parse_mrp_line(
            r#"{"id":"u","input":"Zürich ist","nodes":[{"id":0,"anchors":[{"from":7,"to":10}]}],"edges":[]}"#,
        )
        .unwrap();
        assert_eq!(g.nodes[0].anchors[0], Span::new(8, 11));
        assert_eq!(&g.text[8..11], "ist");
        let back = parse_mrp_line(&to_mrp_line(&g)).unwrap();
        assert_eq!(back, g);
    }

    fn chain() -> Graph {
        let mut g = Graph::new("c", "a b c");
        g.nodes = (0..3)
            .map(|i| Node::new(i, vec![Span::new(2 * i as usize, 2 * i as usize + 1)]))
            .collect();
        g.edges = vec![Edge::new(0, 1, "x"), Edge::new(1, 2, "y")];
        g
    }

    #[test]
    fn acyclic_chain_is_valid() {
        assert!(validate_graph(&chain()).is_valid());
    }

    #[test]
    fn two_cycle_is_reported_once() {
        let mut g = Graph::new("c", "ab");
        g.nodes = vec![Node::new(0, vec![]), Node::new(1, vec![])];
        g.edges = vec![Edge::new(0, 1, "x"), Edge::new(1, 0, "y")];
        let report = validate_graph(&g);
        assert_eq!(report.violations, vec![Violation::Cycle { nodes: vec![0, 1] }]);
    }

    #[test]
    fn inverted_span_is_reported_once() {
        let mut g = chain();
        g.text = "a b c d e f".into();
        g.nodes[1].anchors = vec![Span::new(5, 3)];
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::BadSpan { node: 1, .. }));
    }

    #[test]
    fn self_loop_is_its_own_violation() {
        let mut g = chain();
        g.edges.push(Edge::new(2, 2, "z"));
        let report = validate_graph(&g);
        assert_eq!(report.violations, vec![Violation::SelfLoop { edge: 2, node: 2 }]);
        assert_eq!(g.drop_self_loops(), 1);
        assert!(validate_graph(&g).is_valid());
    }

    #[test]
    fn ptb_root_to_np() {
        let mut g = Graph::new("p", "x");
        g.nodes = vec![
            Node::new(0, vec![]).with_label("S"),
            Node::new(1, vec![]).with_label("NP"),
            Node::new(2, vec![Span::new(0, 1)]).with_label("NN"),
        ];
        g.edges = vec![Edge::new(0, 1, ""), Edge::new(1, 2, "")];
        let out = convert_ptb_node_labels(&g).unwrap();
        assert_eq!(out.edges[0], Edge::new(0, 1, "NP"));
        assert_eq!(out.edges[1], Edge::new(1, 2, TERMINAL_LABEL));
        assert!(out.nodes.iter().all(|n| n.label.is_none()));
    }

    #[test]
    fn ptb_five_node_tree() {
        // (S (NP (DT the) (NN dog)) (VP (VBZ barks)))
        let mut g = Graph::new("p", "the dog barks");
        g.nodes = vec![
            Node::new(0, vec![Span::new(0, 13)]).with_label("S"),
            Node::new(1, vec![Span::new(0, 7)]).with_label("NP"),
            Node::new(2, vec![Span::new(0, 3)]).with_label("DT"),
            Node::new(3, vec![Span::new(4, 7)]).with_label("NN"),
            Node::new(4, vec![Span::new(8, 13)]).with_label("VP"),
            Node::new(5, vec![Span::new(8, 13)]).with_label("VBZ"),
        ];
        g.edges = vec![
            Edge::new(0, 1, "_"),
            Edge::new(1, 2, "_"),
            Edge::new(1, 3, "_"),
            Edge::new(0, 4, "_"),
            Edge::new(4, 5, "_"),
        ];
        let out = convert_ptb_node_labels(&g).unwrap();
        let labels: Vec<&str> = out.edges.iter().map(|e| e.label.as_str()).collect();
        assert_eq!(labels, ["NP", "TERM", "TERM", "VP", "TERM"]);
        let mut nonterminal: Vec<&str> = labels.into_iter().filter(|l| *l != TERMINAL_LABEL).collect();
        nonterminal.sort();
        assert_eq!(nonterminal, ["NP", "VP"]);
        assert_eq!(out.nodes.len(), g.nodes.len());
        assert_eq!(out.edges.len(), g.edges.len());
    }

    #[test]
    fn ptb_single_node_unchanged() {
        let mut g = Graph::new("p", "x");
        g.nodes = vec![Node::new(0, vec![Span::new(0, 1)]).with_label("S")];
        let out = convert_ptb_node_labels(&g).unwrap();
        assert!(out.edges.is_empty());
        assert_eq!(out.nodes[0].label, None);
    }

    #[test]
    fn ptb_rejects_reentrancy() {
        let mut g = Graph::new("p", "x");
        g.nodes = (0..3).map(|i| Node::new(i, vec![]).with_label("X")).collect();
        g.edges = vec![Edge::new(0, 2, ""), Edge::new(1, 2, "")];
        assert!(matches!(
            convert_ptb_node_labels(&g),
            Err(Error::NotATree {
                node: 2,
                parents: 2,
                ..
            })
        ));
    }

    #[test]
    fn dummy_edge_rule() {
        let g = chain();
        assert_eq!(ensure_nonempty_edges(&g).unwrap(), g);

        let mut single = Graph::new("s", "a");
        single.nodes = vec![Node::new(4, vec![Span::new(0, 1)])];
        let out = ensure_nonempty_edges(&single).unwrap();
        assert_eq!(out.nodes.len(), 2);
        assert_eq!(out.edges, vec![Edge::new(5, 4, DUMMY_LABEL)]);
        assert!(validate_graph(&out).is_valid());

        let empty = Graph::new("e", "");
        assert!(matches!(ensure_nonempty_edges(&empty), Err(Error::EmptyGraph { .. })));
    }

    #[test]
    fn framework_classes() {
        assert_eq!(classify_framework(&[chain()]), FrameworkClass::Dependency);

        let mut unanchored = chain();
        unanchored.nodes.push(Node::new(9, vec![]));
        unanchored.edges.push(Edge::new(9, 0, "q"));
        assert_eq!(classify_framework(&[chain(), unanchored]), FrameworkClass::Constituency);

        let mut multiword = chain();
        multiword.nodes[0].anchors = vec![Span::new(0, 3)];
        assert_eq!(classify_framework(&[multiword]), FrameworkClass::Constituency);

        let mut rooted = chain();
        rooted.nodes.push(Node::new(9, vec![]).with_label(ROOT_NODE_LABEL));
        rooted.edges.push(Edge::new(9, 0, "root"));
        assert_eq!(classify_framework(&[rooted]), FrameworkClass::Dependency);

        let mut single = Graph::new("s", "a");
        single.nodes = vec![Node::new(0, vec![Span::new(0, 1)])];
        let dummy = ensure_nonempty_edges(&single).unwrap();
        assert_eq!(classify_framework(&[dummy]), FrameworkClass::Dependency);
    }

    #[test]
    fn label_vocabulary_is_bijective_and_has_dummy() {
        let v = LabelVocabulary::from_graphs([&chain(), &chain()]);
        assert_eq!(v.labels(), [DUMMY_LABEL, "x", "y"]);
        for (i, l) in v.labels().iter().enumerate() {
            assert_eq!(v.index(l).unwrap(), i);
        }
        assert!(matches!(v.index("nope"), Err(Error::UnknownLabel(_))));
        assert_eq!(LabelVocabulary::from_json(&v.to_json()).unwrap(), v);
    }

    #[test]
    fn word_spans_split_on_whitespace() {
        assert_eq!(word_spans(" ab  c "), vec![Span::new(1, 3), Span::new(5, 6)]);
    }
}
