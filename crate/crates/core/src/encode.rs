//! Fixed-length slice vectors: per relative type, `γ` high-resolution slots
//! and one averaged low-resolution slot of width `|L| + E`, followed by one
//! context slot of width `E`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{self, RowIndex, RowRange};
use crate::error::{Error, Result};
use crate::graph::LabelVocabulary;
use crate::slice::{Relative, RelativeType, Slice};

pub const DEFAULT_CAPACITIES: [usize; 6] = [2, 2, 1, 2, 2, 1];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// High-resolution capacity per relative type, in [`RelativeType::ALL`] order.
    pub capacities: [usize; 6],
    pub labels: usize,
    pub emb_dim: usize,
}

impl EncoderConfig {
    pub fn new(labels: usize, emb_dim: usize) -> Self {
        EncoderConfig {
            capacities: DEFAULT_CAPACITIES,
            labels,
            emb_dim,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.capacities.iter().map(|g| g + 1).sum()
    }

    pub fn slot_width(&self) -> usize {
        self.labels + self.emb_dim
    }

    pub fn layout(&self) -> SlotLayout {
        let width = self.slot_width();
        let mut at = 0;
        let mut hi: [Vec<usize>; 6] = Default::default();
        let mut lo = [0; 6];
        for (t, &gamma) in self.capacities.iter().enumerate() {
            for _ in 0..gamma {
                hi[t].push(at);
                at += width;
            }
            lo[t] = at;
            at += width;
        }
        SlotLayout {
            hi,
            lo,
            context: at,
            width,
            dim: at + self.emb_dim,
        }
    }
}

/// Vector length: `Σ(γ + 1)·(|L| + E) + E`.
pub fn vector_dim(cfg: &EncoderConfig) -> usize {
    cfg.slot_count() * cfg.slot_width() + cfg.emb_dim
}

/// Start offsets of every slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotLayout {
    pub hi: [Vec<usize>; 6],
    pub lo: [usize; 6],
    pub context: usize,
    pub width: usize,
    pub dim: usize,
}

/// Frozen token embedding matrix, `rows × dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Config(format!(
                "embedding data has {} values, expected {rows}x{dim}",
                data.len()
            )));
        }
        Ok(EmbeddingTable { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, token: u32) -> Result<&[f32]> {
        let t = token as usize;
        if t >= self.rows {
            return Err(Error::Input(format!(
                "token id {token} outside the embedding table ({} rows)",
                self.rows
            )));
        }
        Ok(&self.data[t * self.dim..(t + 1) * self.dim])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ([rows, dim], data) = binio::read_f32_matrix(path, b"EMB1", "EMB1")?;
        Self::new(rows as usize, dim as usize, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binio::write_f32_matrix(
            path,
            b"EMB1",
            [self.rows as u32, self.dim as u32],
            self.data.iter().copied(),
        )
    }
}

/// First `γ` relatives keep their order; the rest are pooled.
pub fn partition_resolution<T>(relatives: &[T], gamma: usize) -> (&[T], &[T]) {
    relatives.split_at(gamma.min(relatives.len()))
}

/// Word slot contribution: `Σ weight · Emb[token]` written at `offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordSlot {
    pub offset: u32,
    pub tokens: Vec<(u32, f64)>,
}

/// Slice vector in factored form: explicit label coordinates plus word slots
/// that reference embedding rows. Densifying it against an embedding table
/// yields the slice vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseInput {
    pub entries: Vec<(u32, f64)>,
    pub words: Vec<WordSlot>,
}

impl SparseInput {
    /// Adds the contributions into `out` (which must have the full vector length).
    pub fn add_into(&self, emb: &EmbeddingTable, out: &mut [f64]) -> Result<()> {
        for &(i, v) in &self.entries {
            out[i as usize] += v;
        }
        for slot in &self.words {
            let o = slot.offset as usize;
            let target = &mut out[o..o + emb.dim()];
            for &(t, w) in &slot.tokens {
                for (x, &e) in target.iter_mut().zip(emb.row(t)?) {
                    *x += w * e as f64;
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self, emb: &EmbeddingTable, dim: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; dim];
        self.add_into(emb, &mut out)?;
        Ok(out)
    }
}

/// Accumulates one relative, scaled by `weight`, into the slot at `offset`.
fn add_relative(
    r: &Relative,
    weight: f64,
    offset: usize,
    cfg: &EncoderConfig,
    labels: &LabelVocabulary,
    out: &mut SparseInput,
) -> Result<()> {
    let l = labels.index(&r.label)?;
    out.entries.push(((offset + l) as u32, weight));
    if !r.tokens.is_empty() {
        let w = weight / r.tokens.len() as f64;
        out.words.push(WordSlot {
            offset: (offset + cfg.labels) as u32,
            tokens: r.tokens.iter().map(|&t| (t, w)).collect(),
        });
    }
    Ok(())
}

fn check_config(cfg: &EncoderConfig, labels: &LabelVocabulary) -> Result<()> {
    if labels.len() != cfg.labels {
        return Err(Error::Config(format!(
            "encoder expects {} labels, vocabulary has {}",
            cfg.labels,
            labels.len()
        )));
    }
    Ok(())
}

/// `onehot(label) ⊕ mean(Emb[accessible anchor tokens])`.
pub fn encode_relative(r: &Relative, emb: &EmbeddingTable, labels: &LabelVocabulary) -> Result<Vec<f64>> {
    let cfg = EncoderConfig::new(labels.len(), emb.dim());
    let mut sparse = SparseInput::default();
    add_relative(r, 1.0, 0, &cfg, labels, &mut sparse)?;
    sparse.to_dense(emb, cfg.slot_width())
}

pub fn encode_slice_sparse(s: &Slice, cfg: &EncoderConfig, labels: &LabelVocabulary) -> Result<SparseInput> {
    check_config(cfg, labels)?;
    let layout = cfg.layout();
    let mut out = SparseInput::default();
    for t in RelativeType::ALL {
        let (hi, lo) = partition_resolution(s.relatives.get(t), cfg.capacities[t.index()]);
        for (r, &offset) in hi.iter().zip(&layout.hi[t.index()]) {
            add_relative(r, 1.0, offset, cfg, labels, &mut out)?;
        }
        let w = 1.0 / lo.len().max(1) as f64;
        for r in lo {
            add_relative(r, w, layout.lo[t.index()], cfg, labels, &mut out)?;
        }
    }
    if !s.context_tokens.is_empty() {
        let w = 1.0 / s.context_tokens.len() as f64;
        out.words.push(WordSlot {
            offset: layout.context as u32,
            tokens: s.context_tokens.iter().map(|&t| (t, w)).collect(),
        });
    }
    Ok(out)
}

pub fn encode_slice(
    s: &Slice,
    cfg: &EncoderConfig,
    emb: &EmbeddingTable,
    labels: &LabelVocabulary,
) -> Result<Vec<f64>> {
    if emb.dim() != cfg.emb_dim {
        return Err(Error::Config(format!(
            "encoder expects embedding dim {}, table has {}",
            cfg.emb_dim,
            emb.dim()
        )));
    }
    encode_slice_sparse(s, cfg, labels)?.to_dense(emb, vector_dim(cfg))
}

/// Dense slice vectors with their targets, grouped by sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceVectors {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub targets: Vec<u32>,
    pub index: RowIndex,
}

#[derive(Serialize, Deserialize)]
struct SvcSidecar {
    targets: Vec<u32>,
    sentences: RowIndex,
}

impl SliceVectors {
    pub fn from_slices(
        sentences: &[Vec<Slice>],
        cfg: &EncoderConfig,
        emb: &EmbeddingTable,
        labels: &LabelVocabulary,
    ) -> Result<Self> {
        let mut out = SliceVectors {
            dim: vector_dim(cfg),
            vectors: vec![],
            targets: vec![],
            index: RowIndex::new(),
        };
        for slices in sentences {
            let Some(first) = slices.first() else { continue };
            out.index.insert(
                first.graph_id.clone(),
                RowRange {
                    offset: out.vectors.len(),
                    count: slices.len(),
                },
            );
            for s in slices {
                out.vectors.push(encode_slice(s, cfg, emb, labels)?);
                out.targets.push(s.target);
            }
        }
        Ok(out)
    }

    /// Writes the SVC1 matrix (float32) and a sidecar with targets and the
    /// sentence index.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        binio::write_f32_matrix(
            path,
            b"SVC1",
            [self.vectors.len() as u32, self.dim as u32],
            self.vectors.iter().flatten().map(|&v| v as f32),
        )?;
        let sidecar = SvcSidecar {
            targets: self.targets.clone(),
            sentences: self.index.clone(),
        };
        std::fs::write(binio::index_path(path), serde_json::to_string(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ([rows, dim], data) = binio::read_f32_matrix(path, b"SVC1", "SVC1")?;
        let sidecar: SvcSidecar = serde_json::from_str(&std::fs::read_to_string(binio::index_path(path))?)?;
        if sidecar.targets.len() != rows as usize {
            return Err(Error::format("SVC1", "target count differs from row count"));
        }
        binio::check_index(&sidecar.sentences, rows as usize, "SVC1")?;
        let dim = dim as usize;
        let vectors = if dim == 0 {
            vec![vec![]; rows as usize]
        } else {
            data.chunks_exact(dim)
                .map(|c| c.iter().map(|&v| v as f64).collect())
                .collect()
        };
        Ok(SliceVectors {
            dim,
            vectors,
            targets: sidecar.targets,
            index: sidecar.sentences,
        })
    }
}
