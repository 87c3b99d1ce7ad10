//! Token-emission MLP with a tied output projection, ensembled with base-LM
//! logits, trained with AdamW and dev-perplexity early stopping.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{self, RowIndex, RowRange};
use crate::encode::{EmbeddingTable, SparseInput};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sentences per batch.
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of training sentences (taken from the end) held out for dev.
    pub dev_fraction: f64,
    pub seed: u64,
    /// Hidden layer widths; the last one must equal the embedding dim.
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            dev_fraction: 0.1,
            seed: 0,
            hidden: vec![1024, 768],
            dropout: 0.2,
            train_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, emb_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return bad("lr and weight_decay must be non-negative, eps positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad(format!("dev_fraction {} outside (0, 1)", self.dev_fraction));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        match self.hidden.last() {
            Some(&h) if h == emb_dim && self.hidden.iter().all(|&d| d > 0) => Ok(()),
            _ => bad(format!(
                "hidden dims {:?} must be positive and end with the embedding dim {emb_dim}",
                self.hidden
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Parameters

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in × out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<Dense>,
    /// `V × E`; the output projection is its transpose.
    pub emb: Array2<f64>,
    pub dropout: f64,
}

fn emb_array(emb: &EmbeddingTable) -> Array2<f64> {
    Array2::from_shape_vec((emb.rows(), emb.dim()), emb.data().iter().map(|&v| v as f64).collect())
        .expect("table shape is consistent")
}

impl ModelParams {
    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases, values
    /// representable in float32.
    pub fn init(input_dim: usize, hidden: &[usize], emb: &EmbeddingTable, dropout: f64, seed: u64) -> Result<Self> {
        if hidden.last() != Some(&emb.dim()) {
            return Err(Error::Config(format!(
                "last hidden dim must equal the embedding dim {}",
                emb.dim()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &out in hidden {
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_in, out), |_| rng.gen_range(-bound..bound) as f32 as f64);
            layers.push(Dense {
                w,
                b: Array1::zeros(out),
            });
            fan_in = out;
        }
        Ok(ModelParams {
            layers,
            emb: emb_array(emb),
            dropout: dropout as f32 as f64,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.emb.nrows()
    }

    pub fn param_count(&self, with_emb: bool) -> usize {
        let mlp: usize = self.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        mlp + if with_emb { self.emb.len() } else { 0 }
    }

    pub fn round_to_f32(&mut self) {
        let round = |x: &mut f64| *x = *x as f32 as f64;
        for l in &mut self.layers {
            l.w.iter_mut().for_each(round);
            l.b.iter_mut().for_each(round);
        }
        self.emb.iter_mut().for_each(round);
    }

    /// Trainable tensors as flat slices: per layer weights then bias, then
    /// the embedding table when `with_emb`.
    pub fn tensors_mut(&mut self, with_emb: bool) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        if with_emb {
            out.push(self.emb.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
    pub emb: Option<Array2<f64>>,
}

impl Grads {
    /// Same order as [`ModelParams::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        if let Some(e) = &self.emb {
            out.push(e.as_slice().expect("standard layout"));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Forward pass and losses

pub fn ensemble_logits(slr: &[f64], lm: &[f64]) -> Result<Vec<f64>> {
    if slr.len() != lm.len() {
        return Err(Error::Input(format!(
            "cannot ensemble logits of lengths {} and {}",
            slr.len(),
            lm.len()
        )));
    }
    Ok(slr.iter().zip(lm).map(|(a, b)| a + b).collect())
}

fn check_finite(logits: &[f64]) -> Result<()> {
    match logits.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite logit at index {i}"))),
        None => Ok(()),
    }
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    Ok(exp.into_iter().map(|e| e / z).collect())
}

/// `−ln p(target)` in nats.
pub fn cross_entropy(dist: &[f64], target: u32) -> Result<f64> {
    let p = *dist
        .get(target as usize)
        .ok_or_else(|| Error::Input(format!("target {target} outside distribution")))?;
    if !p.is_finite() || p < 0.0 {
        return Err(Error::Numeric(format!("invalid probability {p}")));
    }
    Ok(-p.ln())
}

fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Dropout masks come from this generator; without one the pass is in eval mode.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

/// First-layer input rows as `(feature, value)` pairs. Indices may repeat;
/// repeated entries add up.
type SparseRows = Vec<Vec<(usize, f64)>>;

struct Cache {
    x: SparseRows,
    /// `acts[k]` is the output of hidden layer k.
    acts: Vec<Array2<f64>>,
    /// Per layer: derivative of the activation (ReLU gate times dropout scale).
    gates: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn forward(p: &ModelParams, x: SparseRows, mut mode: Mode<'_>) -> Result<Cache> {
    let dim = p.input_dim();
    if let Some(&(i, _)) = x.iter().flatten().find(|(i, _)| *i >= dim) {
        return Err(Error::Config(format!("feature {i} outside input dim {dim}")));
    }
    let keep = 1.0 - p.dropout;
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(p.layers.len());
    let mut gates = Vec::with_capacity(p.layers.len());
    for (k, layer) in p.layers.iter().enumerate() {
        let mut z = match k {
            0 => {
                let mut z = Array2::zeros((x.len(), layer.b.len()));
                for (mut row, entries) in z.outer_iter_mut().zip(&x) {
                    for &(i, v) in entries {
                        row.scaled_add(v, &layer.w.row(i));
                    }
                }
                z
            }
            _ => acts[k - 1].dot(&layer.w),
        };
        z += &layer.b;
        let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        if let Mode::Train(rng) = &mut mode {
            if p.dropout > 0.0 {
                gate.iter_mut().for_each(|g| {
                    *g = if rng.gen::<f64>() < keep { *g / keep } else { 0.0 };
                });
            }
        }
        z.zip_mut_with(&gate, |a, &g| *a = if g == 0.0 { 0.0 } else { *a * g });
        acts.push(z);
        gates.push(gate);
    }
    let logits = acts.last().expect("at least one layer").dot(&p.emb.t());
    Ok(Cache { x, acts, gates, logits })
}

/// SLR-head logits for one slice vector.
pub fn mlp_forward(x: &[f64], p: &ModelParams, mode: Mode<'_>) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::Config(format!(
            "input has {} features, model expects {}",
            x.len(),
            p.input_dim()
        )));
    }
    let row = x.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
    Ok(forward(p, vec![row], mode)?.logits.row(0).to_vec())
}

/// One batch of token examples.
pub struct Batch<'a> {
    pub inputs: Vec<&'a SparseInput>,
    pub targets: Vec<u32>,
    /// Base-LM logits, one row per example.
    pub base: Option<Array2<f64>>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Expands word slots into their embedding means.
fn expand(inputs: &[&SparseInput], emb: &Array2<f64>, dim: usize) -> Result<SparseRows> {
    let e = emb.ncols();
    inputs
        .iter()
        .map(|input| {
            let mut row: Vec<(usize, f64)> = input.entries.iter().map(|&(i, v)| (i as usize, v)).collect();
            for slot in &input.words {
                let o = slot.offset as usize;
                if o + e > dim {
                    return Err(Error::Config(format!("word slot at {o} outside input dim {dim}")));
                }
                let mut mean = Array1::<f64>::zeros(e);
                for &(t, w) in &slot.tokens {
                    if t as usize >= emb.nrows() {
                        return Err(Error::Input(format!("token id {t} outside vocabulary")));
                    }
                    mean.scaled_add(w, &emb.row(t as usize));
                }
                row.extend(mean.iter().enumerate().map(|(d, &v)| (o + d, v)));
            }
            Ok(row)
        })
        .collect()
}

fn total_logits(p: &ModelParams, cache_logits: Array2<f64>, base: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    match base {
        None => Ok(cache_logits),
        Some(b) if b.dim() == cache_logits.dim() => Ok(cache_logits + b),
        Some(b) => Err(Error::Alignment(format!(
            "base logits shaped {:?}, model produces {:?} over V={}",
            b.dim(),
            cache_logits.dim(),
            p.vocab_size()
        ))),
    }
}

/// Mean cross-entropy of the (ensembled) posterior over the batch, eval mode.
pub fn batch_loss(p: &ModelParams, batch: &Batch<'_>) -> Result<f64> {
    let x = expand(&batch.inputs, &p.emb, p.input_dim())?;
    let logits = total_logits(p, forward(p, x, Mode::Eval)?.logits, batch.base.as_ref())?;
    let mut total = 0.0;
    for (row, &t) in logits.outer_iter().zip(&batch.targets) {
        total += log_sum_exp(row) - row[t as usize];
    }
    Ok(total / batch.len() as f64)
}

/// Mean batch loss and its exact gradient. The embedding gradient (output
/// projection plus input lookups through word slots) is computed only when
/// `with_emb` is set.
pub fn backward(p: &ModelParams, batch: &Batch<'_>, mode: Mode<'_>, with_emb: bool) -> Result<(f64, Grads)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let x = expand(&batch.inputs, &p.emb, p.input_dim())?;
    let cache = forward(p, x, mode)?;
    let logits = total_logits(p, cache.logits, batch.base.as_ref())?;

    let mut loss = 0.0;
    let mut g = Array2::zeros(logits.dim());
    for ((row, mut grow), &t) in logits.outer_iter().zip(g.outer_iter_mut()).zip(&batch.targets) {
        let t = t as usize;
        if t >= row.len() {
            return Err(Error::Input(format!("target {t} outside vocabulary")));
        }
        let lse = log_sum_exp(row);
        loss += lse - row[t];
        Zip::from(&mut grow).and(&row).for_each(|gv, &z| *gv = (z - lse).exp());
        grow[t] -= 1.0;
    }
    g /= n as f64;

    let h = cache.acts.last().expect("at least one layer");
    let mut emb_grad = with_emb.then(|| g.t().dot(h));
    let mut da = g.dot(&p.emb);
    let mut layers = vec![None; p.layers.len()];
    let mut dz0 = None;
    for k in (0..p.layers.len()).rev() {
        let dz = da * &cache.gates[k];
        let db = dz.sum_axis(Axis(0));
        let dw = if k > 0 {
            let dw = cache.acts[k - 1].t().dot(&dz);
            da = dz.dot(&p.layers[k].w.t());
            dw
        } else {
            let mut dw = Array2::zeros(p.layers[0].w.dim());
            for (entries, dzr) in cache.x.iter().zip(dz.outer_iter()) {
                for &(i, v) in entries {
                    dw.row_mut(i).scaled_add(v, &dzr);
                }
            }
            da = Array2::zeros((0, 0));
            dz0 = Some(dz);
            dw
        };
        layers[k] = Some(Dense { w: dw, b: db });
    }
    if let (Some(eg), Some(dz)) = (emb_grad.as_mut(), dz0) {
        let e = p.emb.ncols();
        let w0 = &p.layers[0].w;
        for (input, dzr) in batch.inputs.iter().zip(dz.outer_iter()) {
            for slot in &input.words {
                let o = slot.offset as usize;
                let dx = Array1::from_shape_fn(e, |d| w0.row(o + d).dot(&dzr));
                for &(t, w) in &slot.tokens {
                    eg.row_mut(t as usize).scaled_add(w, &dx);
                }
            }
        }
    }
    Ok((
        loss / n as f64,
        Grads {
            layers: layers.into_iter().map(Option::unwrap).collect(),
            emb: emb_grad,
        },
    ))
}

// ---------------------------------------------------------------------------
// AdamW

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWHyper {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        AdamWHyper {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        }
    }
}

/// One AdamW update at step `t` (1-based): decoupled decay, then the
/// bias-corrected Adam step.
pub fn adamw_step(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], h: &AdamWHyper, t: u64) {
    let c1 = 1.0 - h.beta1.powi(t as i32);
    let c2 = 1.0 - h.beta2.powi(t as i32);
    let decay = 1.0 - h.lr * h.weight_decay;
    for i in 0..p.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] = p[i] * decay - h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

/// Optimizer state for a [`ModelParams`].
pub struct AdamW {
    pub hyper: AdamWHyper,
    pub step: u64,
    with_emb: bool,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(p: &mut ModelParams, hyper: AdamWHyper, with_emb: bool) -> Self {
        let shapes: Vec<usize> = p.tensors_mut(with_emb).iter().map(|t| t.len()).collect();
        AdamW {
            hyper,
            step: 0,
            with_emb,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, p: &mut ModelParams, grads: &Grads) {
        self.step += 1;
        let gs = grads.tensors();
        for (k, tensor) in p.tensors_mut(self.with_emb).into_iter().enumerate() {
            adamw_step(tensor, gs[k], &mut self.m[k], &mut self.v[k], &self.hyper, self.step);
        }
    }
}

// ---------------------------------------------------------------------------
// Encoded corpora and base logits

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedSentence {
    pub id: String,
    pub inputs: Vec<SparseInput>,
    pub targets: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedCorpus {
    pub dim: usize,
    pub sentences: Vec<EncodedSentence>,
}

impl EncodedCorpus {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.targets.len()).sum()
    }

    /// Wraps dense vectors; they carry no word-slot structure, so embedding
    /// training sees only the output-projection gradient for them.
    pub fn from_dense(v: &crate::encode::SliceVectors) -> Self {
        let mut ranges: Vec<(&String, &RowRange)> = v.index.iter().collect();
        ranges.sort_by_key(|(_, r)| r.offset);
        let sentences = ranges
            .into_iter()
            .map(|(id, r)| EncodedSentence {
                id: id.clone(),
                inputs: v.vectors[r.offset..r.offset + r.count]
                    .iter()
                    .map(|row| SparseInput {
                        entries: row
                            .iter()
                            .enumerate()
                            .filter(|(_, &x)| x != 0.0)
                            .map(|(i, &x)| (i as u32, x))
                            .collect(),
                        words: vec![],
                    })
                    .collect(),
                targets: v.targets[r.offset..r.offset + r.count].to_vec(),
            })
            .collect();
        EncodedCorpus { dim: v.dim, sentences }
    }
}

/// Per-token base-LM logits (`LGT1`), row `i` of a sentence predicting token `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseLogits {
    vocab: usize,
    data: Vec<f32>,
    index: RowIndex,
}

impl BaseLogits {
    pub fn new(vocab: usize, data: Vec<f32>, index: RowIndex) -> Result<Self> {
        if vocab == 0 || !data.len().is_multiple_of(vocab) {
            return Err(Error::format("LGT1", "data length is not a multiple of V"));
        }
        binio::check_index(&index, data.len() / vocab, "LGT1")?;
        Ok(BaseLogits { vocab, data, index })
    }

    /// Assembles logits sentence by sentence (`rows` are `count × V` each).
    pub fn from_sentences<'a>(vocab: usize, sentences: impl IntoIterator<Item = (&'a str, Vec<f32>)>) -> Result<Self> {
        let mut data = Vec::new();
        let mut index = RowIndex::new();
        for (id, rows) in sentences {
            if rows.len() % vocab != 0 {
                return Err(Error::format("LGT1", format!("rows of {id} are not a multiple of V")));
            }
            let range = RowRange {
                offset: data.len() / vocab,
                count: rows.len() / vocab,
            };
            if index.insert(id.to_string(), range).is_some() {
                return Err(Error::format("LGT1", format!("sentence {id} appears twice")));
            }
            data.extend(rows);
        }
        Self::new(vocab, data, index)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn rows_total(&self) -> usize {
        self.data.len() / self.vocab
    }

    pub fn index(&self) -> &RowIndex {
        &self.index
    }

    /// Logits of one sentence as `count × V`, checking the token count.
    pub fn sentence(&self, id: &str, count: usize) -> Result<Array2<f64>> {
        let r = self
            .index
            .get(id)
            .ok_or_else(|| Error::Alignment(format!("no base logits for sentence {id}")))?;
        if r.count != count {
            return Err(Error::Alignment(format!(
                "sentence {id} has {count} tokens but {} base-logit rows",
                r.count
            )));
        }
        let v = self.vocab;
        let rows = &self.data[r.offset * v..(r.offset + r.count) * v];
        Ok(Array2::from_shape_vec((count, v), rows.iter().map(|&x| x as f64).collect()).expect("shape checked"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let ([vocab, rows], data) = binio::read_f32_matrix(path, b"LGT1", "LGT1")?;
        let index = binio::read_index(path)?;
        if vocab == 0 && rows != 0 {
            return Err(Error::format("LGT1", "zero vocabulary"));
        }
        Self::new(vocab as usize, data, index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        binio::write_f32_matrix(
            path,
            b"LGT1",
            [self.vocab as u32, self.rows_total() as u32],
            self.data.iter().copied(),
        )?;
        binio::write_index(path, &self.index)
    }
}

// ---------------------------------------------------------------------------
// Prediction

/// Calls `f(sentence, position, distribution, gold)` for every token.
///
/// With `params` absent the posterior is the base LM alone; with `base` absent
/// it is the SLR head alone.
pub fn for_each_posterior(
    params: Option<&ModelParams>,
    corpus: &EncodedCorpus,
    base: Option<&BaseLogits>,
    mut f: impl FnMut(&str, usize, &[f64], u32) -> Result<()>,
) -> Result<()> {
    if params.is_none() && base.is_none() {
        return Err(Error::Config("need a model, base logits, or both".into()));
    }
    for sent in &corpus.sentences {
        let n = sent.targets.len();
        let base_rows = base.map(|b| b.sentence(&sent.id, n)).transpose()?;
        let logits = match params {
            Some(p) => {
                let inputs: Vec<&SparseInput> = sent.inputs.iter().collect();
                let x = expand(&inputs, &p.emb, p.input_dim())?;
                total_logits(p, forward(p, x, Mode::Eval)?.logits, base_rows.as_ref())?
            }
            None => base_rows.expect("checked above"),
        };
        for (i, (row, &gold)) in logits.outer_iter().zip(&sent.targets).enumerate() {
            let dist = softmax(row.as_slice().expect("standard layout"))?;
            f(&sent.id, i, &dist, gold)?;
        }
    }
    Ok(())
}

/// Perplexity and accuracy (lowest-id tie-break) over a corpus.
pub fn quick_eval(
    params: Option<&ModelParams>,
    corpus: &EncodedCorpus,
    base: Option<&BaseLogits>,
) -> Result<(f64, f64)> {
    let (mut nll, mut correct, mut n) = (0.0, 0usize, 0usize);
    for_each_posterior(params, corpus, base, |_, _, dist, gold| {
        nll += cross_entropy(dist, gold)?;
        let best = dist
            .iter()
            .enumerate()
            .fold(0, |b, (i, &p)| if p > dist[b] { i } else { b });
        correct += usize::from(best == gold as usize);
        n += 1;
        Ok(())
    })?;
    if n == 0 {
        return Err(Error::Input("no tokens to evaluate".into()));
    }
    Ok(((nll / n as f64).exp(), correct as f64 / n as f64))
}

// ---------------------------------------------------------------------------
// Training

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_ppl: f64,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_sentences: usize,
    pub dev_sentences: usize,
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose snapshot was kept.
    pub best_epoch: usize,
}

/// Number of dev sentences for a corpus of `n` sentences.
pub fn dev_split(n: usize, fraction: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::Input(format!(
            "need at least 2 sentences to hold out a dev split, got {n}"
        )));
    }
    Ok(((n as f64 * fraction).round() as usize).clamp(1, n - 1))
}

fn make_batch<'a>(sentences: &[&'a EncodedSentence], base: Option<&BaseLogits>) -> Result<Batch<'a>> {
    let mut batch = Batch {
        inputs: vec![],
        targets: vec![],
        base: None,
    };
    let mut base_rows = Vec::new();
    for s in sentences {
        batch.inputs.extend(s.inputs.iter());
        batch.targets.extend(&s.targets);
        if let Some(b) = base {
            base_rows.push(b.sentence(&s.id, s.targets.len())?);
        }
    }
    if base.is_some() {
        let views: Vec<_> = base_rows.iter().map(|a| a.view()).collect();
        batch.base = Some(ndarray::concatenate(Axis(0), &views).expect("equal widths"));
    }
    Ok(batch)
}

/// Trains the SLR head; the kept snapshot is the one with the best dev
/// perplexity, rounded to float32 so that it equals its checkpoint.
pub fn train(
    corpus: &EncodedCorpus,
    emb: &EmbeddingTable,
    base: Option<&BaseLogits>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate(emb.dim())?;
    if corpus.sentences.iter().all(|s| s.targets.is_empty()) {
        return Err(Error::Input("training corpus has no tokens".into()));
    }
    if let Some(b) = base {
        if b.vocab() != emb.rows() {
            return Err(Error::Alignment(format!(
                "base logits over {} types, embeddings over {}",
                b.vocab(),
                emb.rows()
            )));
        }
    }
    let n = corpus.sentences.len();
    let n_dev = dev_split(n, cfg.dev_fraction)?;
    let (train_part, dev_part) = corpus.sentences.split_at(n - n_dev);
    let dev = EncodedCorpus {
        dim: corpus.dim,
        sentences: dev_part.to_vec(),
    };

    let mut params = ModelParams::init(corpus.dim, &cfg.hidden, emb, cfg.dropout, cfg.seed)?;
    let mut opt = AdamW::new(&mut params, AdamWHyper::from_config(cfg), cfg.train_embeddings);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let mut log = TrainLog {
        train_sentences: train_part.len(),
        dev_sentences: n_dev,
        epochs: vec![],
        best_epoch: 0,
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut order: Vec<&EncodedSentence> = train_part.iter().collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = make_batch(chunk, base)?;
            if batch.is_empty() {
                continue;
            }
            let (loss, grads) = backward(&params, &batch, Mode::Train(&mut dropout_rng), cfg.train_embeddings)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged in epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            tokens += batch.len();
            opt.update(&mut params, &grads);
        }
        let mut snapshot = params.clone();
        snapshot.round_to_f32();
        let (dev_ppl, dev_accuracy) = quick_eval(Some(&snapshot), &dev, base)?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / tokens.max(1) as f64,
            dev_ppl,
            dev_accuracy,
        });
        if best.as_ref().is_none_or(|(b, _)| dev_ppl < *b) {
            best = Some((dev_ppl, snapshot));
            log.best_epoch = epoch;
        }
    }
    Ok((best.expect("at least one epoch").1, log))
}

// ---------------------------------------------------------------------------
// Checkpoints

const CKPT_VERSION: u32 = 1;

struct Tensor {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

/// Writes the MLP (and the embedding table when `with_emb`) as named float32
/// tensors.
pub fn save_checkpoint(p: &ModelParams, path: impl AsRef<Path>, with_emb: bool) -> Result<()> {
    let mut tensors = vec![Tensor {
        name: "meta.dropout".into(),
        dims: vec![1],
        data: vec![p.dropout as f32],
    }];
    for (k, l) in p.layers.iter().enumerate() {
        tensors.push(Tensor {
            name: format!("layer{k}.weight"),
            dims: l.w.shape().to_vec(),
            data: l.w.iter().map(|&v| v as f32).collect(),
        });
        tensors.push(Tensor {
            name: format!("layer{k}.bias"),
            dims: l.b.shape().to_vec(),
            data: l.b.iter().map(|&v| v as f32).collect(),
        });
    }
    if with_emb {
        tensors.push(Tensor {
            name: "emb".into(),
            dims: p.emb.shape().to_vec(),
            data: p.emb.iter().map(|&v| v as f32).collect(),
        });
    }
    let mut out = Vec::new();
    out.extend_from_slice(b"CKPT");
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_u32(c: &mut Cursor<&[u8]>) -> Result<u32> {
    let mut b = [0u8; 4];
    c.read_exact(&mut b)
        .map_err(|_| Error::format("CKPT", "truncated file"))?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a checkpoint; `emb` supplies the embedding table when the
/// checkpoint does not carry one.
pub fn load_checkpoint(path: impl AsRef<Path>, emb: Option<&EmbeddingTable>) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != b"CKPT" {
        return Err(Error::format("CKPT", "missing magic"));
    }
    let mut c = Cursor::new(&bytes[4..]);
    let version = read_u32(&mut c)?;
    if version != CKPT_VERSION {
        return Err(Error::format("CKPT", format!("unsupported version {version}")));
    }
    let count = read_u32(&mut c)?;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut c)? as usize;
        let mut name = vec![0u8; len];
        c.read_exact(&mut name)
            .map_err(|_| Error::format("CKPT", "truncated tensor name"))?;
        let ndim = read_u32(&mut c)?;
        let dims = (0..ndim)
            .map(|_| read_u32(&mut c).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let size: usize = dims.iter().product();
        let data = (0..size)
            .map(|_| read_u32(&mut c).map(f32::from_bits))
            .collect::<Result<Vec<_>>>()?;
        tensors.push(Tensor {
            name: String::from_utf8(name).map_err(|_| Error::format("CKPT", "non-UTF-8 name"))?,
            dims,
            data,
        });
    }
    let take = |name: &str| tensors.iter().find(|t| t.name == name);
    let to_f64 = |t: &Tensor| t.data.iter().map(|&v| v as f64).collect::<Vec<_>>();
    let dropout = take("meta.dropout").map_or(0.0, |t| t.data[0] as f64);
    let mut layers = Vec::new();
    while let (Some(w), Some(b)) = (
        take(&format!("layer{}.weight", layers.len())),
        take(&format!("layer{}.bias", layers.len())),
    ) {
        if w.dims.len() != 2 || b.dims != [w.dims[1]] {
            return Err(Error::format("CKPT", format!("bad shapes for layer {}", layers.len())));
        }
        if let Some(prev) = layers.last().map(|l: &Dense| l.w.ncols()) {
            if prev != w.dims[0] {
                return Err(Error::format("CKPT", "consecutive layers do not chain"));
            }
        }
        layers.push(Dense {
            w: Array2::from_shape_vec((w.dims[0], w.dims[1]), to_f64(w)).expect("dims checked"),
            b: Array1::from_vec(to_f64(b)),
        });
    }
    if layers.is_empty() {
        return Err(Error::format("CKPT", "no layers"));
    }
    let emb = match (take("emb"), emb) {
        (Some(t), _) if t.dims.len() == 2 => {
            Array2::from_shape_vec((t.dims[0], t.dims[1]), to_f64(t)).expect("dims checked")
        }
        (Some(_), _) => return Err(Error::format("CKPT", "embedding tensor is not a matrix")),
        (None, Some(e)) => emb_array(e),
        (None, None) => {
            return Err(Error::Config(
                "checkpoint has no embedding table and none was given".into(),
            ))
        }
    };
    if emb.ncols() != layers.last().unwrap().w.ncols() {
        return Err(Error::Config(format!(
            "embedding dim {} differs from the last hidden dim {}",
            emb.ncols(),
            layers.last().unwrap().w.ncols()
        )));
    }
    Ok(ModelParams { layers, emb, dropout })
}
