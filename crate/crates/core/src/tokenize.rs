//! Byte-level BPE tokenization and token-to-anchor alignment.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use fancy_regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph, NodeId, Span};

/// GPT-2 pre-tokenization pattern.
const PRETOKENIZE: &str = r"'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+";

/// The reversible byte → printable-char mapping used by byte-level BPE.
pub fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut extra = 0u32;
    for b in 0..=255u8 {
        let printable = (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || b >= 0xAE;
        table[b as usize] = if printable {
            char::from(b)
        } else {
            let c = char::from_u32(256 + extra).expect("valid scalar");
            extra += 1;
            c
        };
    }
    table
}

#[derive(Clone, Debug)]
pub struct TokenizerTables {
    vocab: HashMap<String, u32>,
    id_to_token: Vec<String>,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
    pattern: Regex,
}

impl TokenizerTables {
    pub fn new(vocab: HashMap<String, u32>, merges: Vec<(String, String)>) -> Result<Self> {
        let mut id_to_token = vec![None; vocab.len()];
        for (tok, &id) in &vocab {
            let slot = id_to_token
                .get_mut(id as usize)
                .ok_or_else(|| Error::Tokenizer(format!("id {id} of {tok:?} outside [0, {})", vocab.len())))?;
            if slot.is_some() {
                return Err(Error::Tokenizer(format!("id {id} assigned twice")));
            }
            *slot = Some(tok.clone());
        }
        let id_to_token = id_to_token.into_iter().map(|t| t.expect("dense")).collect();
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(r, p)| (p.clone(), r))
            .rev() // first occurrence wins
            .collect();
        let byte_encoder = bytes_to_unicode();
        let byte_decoder = byte_encoder.iter().enumerate().map(|(b, &c)| (c, b as u8)).collect();
        Ok(TokenizerTables {
            vocab,
            id_to_token,
            merges,
            ranks,
            byte_encoder,
            byte_decoder,
            pattern: Regex::new(PRETOKENIZE).expect("static pattern"),
        })
    }

    pub fn from_strings(vocab_json: &str, merges_txt: &str) -> Result<Self> {
        let vocab: HashMap<String, u32> = serde_json::from_str(vocab_json)?;
        let mut merges = Vec::new();
        for (i, line) in merges_txt.lines().enumerate() {
            if (i == 0 && line.starts_with('#')) || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    merges.push((a.to_string(), b.to_string()))
                }
                _ => {
                    return Err(Error::Tokenizer(format!(
                        "merges line {} is not a pair: {line:?}",
                        i + 1
                    )))
                }
            }
        }
        Self::new(vocab, merges)
    }

    pub fn load(vocab: impl AsRef<Path>, merges: impl AsRef<Path>) -> Result<Self> {
        Self::from_strings(&fs::read_to_string(vocab)?, &fs::read_to_string(merges)?)
    }

    /// Builds tables whose merges spell out each word left to right.
    ///
    /// The base alphabet is every byte symbol occurring in `words`; merges are
    /// added word by word (in the given order) until `max_vocab` entries exist.
    /// Words that do not fit the budget stay split into smaller pieces.
    pub fn from_word_chains(words: &[&str], max_vocab: Option<usize>) -> Result<Self> {
        let encoder = bytes_to_unicode();
        let encode = |w: &str| -> Vec<String> { w.bytes().map(|b| encoder[b as usize].to_string()).collect() };
        let mut alphabet: Vec<String> = words.iter().flat_map(|w| encode(w)).collect();
        alphabet.sort();
        alphabet.dedup();
        let mut vocab: HashMap<String, u32> = HashMap::new();
        for sym in alphabet {
            let id = vocab.len() as u32;
            vocab.insert(sym, id);
        }
        let budget = max_vocab.unwrap_or(usize::MAX);
        if vocab.len() > budget {
            return Err(Error::Tokenizer(format!(
                "alphabet of {} symbols exceeds the vocabulary budget {budget}",
                vocab.len()
            )));
        }
        let mut merges = Vec::new();
        'words: for w in words {
            let symbols = encode(w);
            let mut prefix = symbols[0].clone();
            for next in &symbols[1..] {
                let joined = format!("{prefix}{next}");
                if !vocab.contains_key(&joined) {
                    if vocab.len() >= budget {
                        break 'words;
                    }
                    let id = vocab.len() as u32;
                    vocab.insert(joined.clone(), id);
                    merges.push((prefix.clone(), next.clone()));
                }
                prefix = joined;
            }
        }
        Self::new(vocab, merges)
    }

    pub fn vocab_json(&self) -> String {
        let sorted: BTreeMap<&str, u32> = self.vocab.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        serde_json::to_string(&sorted).expect("map serializes")
    }

    pub fn merges_text(&self) -> String {
        let mut out = String::from("#version: 0.2\n");
        for (a, b) in &self.merges {
            out.push_str(a);
            out.push(' ');
            out.push_str(b);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, vocab: impl AsRef<Path>, merges: impl AsRef<Path>) -> Result<()> {
        fs::write(vocab, self.vocab_json())?;
        fs::write(merges, self.merges_text())?;
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn token_str(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Raw bytes a vocabulary entry stands for.
    pub fn token_bytes(&self, id: u32) -> Option<Vec<u8>> {
        let s = self.token_str(id)?;
        s.chars().map(|c| self.byte_decoder.get(&c).copied()).collect()
    }

    fn bpe(&self, piece: &str) -> Vec<String> {
        let mut symbols: Vec<String> = piece
            .bytes()
            .map(|b| self.byte_encoder[b as usize].to_string())
            .collect();
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: u32,
    pub bytes: Vec<u8>,
    pub span: Span,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    pub fn detokenize(&self) -> Vec<u8> {
        self.tokens.iter().flat_map(|t| t.bytes.iter().copied()).collect()
    }
}

/// Splits `text` into pre-tokens, then applies merges in rank order within each.
pub fn bbpe_tokenize(text: &str, tables: &TokenizerTables) -> Result<TokenSequence> {
    let mut tokens = Vec::new();
    let mut cursor = 0;
    let mut pieces = Vec::new();
    for m in tables.pattern.find_iter(text) {
        let m = m.map_err(|e| Error::Tokenizer(format!("pre-tokenizer failed: {e}")))?;
        if m.start() > cursor {
            pieces.push((cursor, &text[cursor..m.start()]));
        }
        pieces.push((m.start(), m.as_str()));
        cursor = m.end();
    }
    if cursor < text.len() {
        pieces.push((cursor, &text[cursor..]));
    }

    for (offset, piece) in pieces {
        let mut at = offset;
        for symbol in tables.bpe(piece) {
            let id = tables
                .token_id(&symbol)
                .ok_or_else(|| Error::Tokenizer(format!("symbol {symbol:?} in {piece:?} is not in the vocabulary")))?;
            let len = symbol.chars().count();
            tokens.push(Token {
                id,
                bytes: text.as_bytes()[at..at + len].to_vec(),
                span: Span::new(at, at + len),
            });
            at += len;
        }
    }
    Ok(TokenSequence { tokens })
}

// ---------------------------------------------------------------------------
// Alignment

/// Why a token does not get a slice of its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unanalyzable {
    /// Continues a multiword anchor across a word boundary.
    MultiwordContinuation,
    /// Non-initial subword piece of a single anchor.
    Subword,
    /// Overlaps no node anchor.
    Unanchored,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedToken {
    /// Nodes whose anchors overlap the token span.
    pub candidates: Vec<NodeId>,
    /// Selected node for analyzable tokens, the continued node for continuations.
    pub anchor: Option<NodeId>,
    pub unanalyzable: Option<Unanalyzable>,
    /// Distance from the most recent analyzable token.
    pub group_index: usize,
}

impl AlignedToken {
    pub fn is_analyzable(&self) -> bool {
        self.unanalyzable.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedSentence {
    pub graph_id: String,
    pub tokens: TokenSequence,
    pub aligned: Vec<AlignedToken>,
    /// Token positions overlapping each node's anchors (ascending).
    pub node_positions: BTreeMap<NodeId, Vec<usize>>,
}

impl AlignedSentence {
    pub fn len(&self) -> usize {
        self.aligned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aligned.is_empty()
    }

    pub fn positions_of(&self, node: NodeId) -> &[usize] {
        self.node_positions.get(&node).map_or(&[], Vec::as_slice)
    }
}

/// Picks the candidate with the most incident edges, then the highest id.
pub fn select_anchor_node(candidates: &[NodeId], adj: &Adjacency) -> Result<NodeId> {
    candidates
        .iter()
        .copied()
        .max_by_key(|&c| (adj.degree(c), c))
        .ok_or_else(|| Error::Input("anchor selection needs at least one candidate".into()))
}

pub fn align_tokens_to_anchors(tokens: &TokenSequence, g: &Graph) -> Result<AlignedSentence> {
    if tokens.detokenize() != g.text.as_bytes() {
        return Err(Error::Alignment(format!(
            "tokens of {} do not reproduce the graph text",
            g.id
        )));
    }
    let adj = g.adjacency();
    let mut node_positions: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    let mut aligned = Vec::with_capacity(tokens.len());
    let mut group_node: Option<NodeId> = None;
    let mut group_start = 0;

    for (i, tok) in tokens.tokens.iter().enumerate() {
        let candidates: Vec<NodeId> = g.nodes.iter().filter(|n| n.overlaps(&tok.span)).map(|n| n.id).collect();
        for &c in &candidates {
            node_positions.entry(c).or_default().push(i);
        }

        let continues = group_node.filter(|gn| candidates.contains(gn));
        let entry = if candidates.is_empty() {
            AlignedToken {
                candidates,
                anchor: None,
                unanalyzable: Some(Unanalyzable::Unanchored),
                group_index: i - group_start,
            }
        } else if let Some(node) = continues {
            let kind = if tok.bytes.first().is_some_and(|b| b.is_ascii_whitespace()) {
                Unanalyzable::MultiwordContinuation
            } else {
                Unanalyzable::Subword
            };
            AlignedToken {
                candidates,
                anchor: Some(node),
                unanalyzable: Some(kind),
                group_index: i - group_start,
            }
        } else {
            let node = select_anchor_node(&candidates, &adj)?;
            group_node = Some(node);
            group_start = i;
            AlignedToken {
                candidates,
                anchor: Some(node),
                unanalyzable: None,
                group_index: 0,
            }
        };
        aligned.push(entry);
    }

    Ok(AlignedSentence {
        graph_id: g.id.clone(),
        tokens: tokens.clone(),
        aligned,
        node_positions,
    })
}
