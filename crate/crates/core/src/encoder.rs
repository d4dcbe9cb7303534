//! Per-token hidden vectors.
//!
//! Two encoders are provided: a trainable context-window encoder,
//! `h_i = tanh(U·[e_{i−1}; e_i; e_{i+1}] + b)` with zero padding at the sentence
//! edges, and a frozen store of vectors computed elsewhere.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::corpus::Sentence;
use crate::math::{self, Matrix};
use crate::rng::Rng;
use crate::{Error, Result};

pub const UNK: &str = "<unk>";

/// `n × dim` hidden vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenSequence {
    dim: usize,
    data: Vec<f64>,
}

impl HiddenSequence {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Dimension {
                expected: dim,
                actual: data.len(),
                context: "hidden sequence length must be a multiple of the dimension",
            });
        }
        if !math::all_finite(&data) {
            return Err(Error::NonFinite("hidden sequence".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                actual: bad.len(),
                context: "hidden sequence row",
            });
        }
        Self::new(dim, rows.concat())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Anything that can turn a sentence into hidden vectors.
pub trait Encode {
    fn hidden_dim(&self) -> usize;
    fn encode(&self, sentence: &Sentence) -> Result<HiddenSequence>;
}

/// Token → embedding row. Row 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Tokens with at least `min_count` occurrences, in first-seen order.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for t in tokens {
            let c = counts.entry(t).or_insert(0);
            if *c == 0 {
                order.push(t);
            }
            *c += 1;
        }
        let kept = order
            .into_iter()
            .filter(|t| counts[t] >= min_count.max(1) && *t != UNK);
        Self::from_tokens(kept.map(String::from))
    }

    /// `tokens` must not contain [`UNK`]; it is prepended as row 0.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let mut list = vec![String::from(UNK)];
        let mut index = BTreeMap::new();
        index.insert(String::from(UNK), 0);
        for t in tokens {
            if !index.contains_key(&t) {
                index.insert(t.clone(), list.len());
                list.push(t);
            }
        }
        Self {
            tokens: list,
            index,
        }
    }

    #[inline]
    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// All entries including the unknown-token row at index 0.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowEncoder {
    pub vocab: Vocabulary,
    /// `|vocab| × d_e`
    pub embeddings: Matrix,
    /// `d_h × 3·d_e`
    pub mixing: Matrix,
    /// `d_h`
    pub bias: Vec<f64>,
}

/// Gradient buffers shaped like a [`WindowEncoder`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowGrads {
    pub embeddings: Matrix,
    pub mixing: Matrix,
    pub bias: Vec<f64>,
}

/// What the backward pass needs from an encoder forward pass.
#[derive(Debug, Clone)]
pub struct WindowCache {
    token_ids: Vec<usize>,
    hidden: HiddenSequence,
}

impl WindowCache {
    pub fn hidden(&self) -> &HiddenSequence {
        &self.hidden
    }
}

impl WindowEncoder {
    /// Uniform(−0.1, 0.1) initialization of every parameter.
    pub fn init(vocab: Vocabulary, embed_dim: usize, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut draw = |_, _| rng.random_range(-0.1..0.1);
        let embeddings = Matrix::from_fn(vocab.len(), embed_dim, &mut draw);
        let mixing = Matrix::from_fn(hidden_dim, 3 * embed_dim, &mut draw);
        let bias = (0..hidden_dim)
            .map(|_| rng.random_range(-0.1..0.1))
            .collect();
        Self {
            vocab,
            embeddings,
            mixing,
            bias,
        }
    }

    pub fn from_parts(
        vocab: Vocabulary,
        embeddings: Matrix,
        mixing: Matrix,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let d_e = embeddings.cols();
        if embeddings.rows() != vocab.len() {
            return Err(Error::Dimension {
                expected: vocab.len(),
                actual: embeddings.rows(),
                context: "embedding rows vs vocabulary",
            });
        }
        if mixing.cols() != 3 * d_e {
            return Err(Error::Dimension {
                expected: 3 * d_e,
                actual: mixing.cols(),
                context: "mixing matrix columns",
            });
        }
        if bias.len() != mixing.rows() {
            return Err(Error::Dimension {
                expected: mixing.rows(),
                actual: bias.len(),
                context: "bias length",
            });
        }
        Ok(Self {
            vocab,
            embeddings,
            mixing,
            bias,
        })
    }

    #[inline]
    pub fn embed_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn zero_grads(&self) -> WindowGrads {
        WindowGrads {
            embeddings: Matrix::zeros(self.embeddings.rows(), self.embeddings.cols()),
            mixing: Matrix::zeros(self.mixing.rows(), self.mixing.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn context(&self, token_ids: &[usize], pos: usize, out: &mut [f64]) {
        let d_e = self.embed_dim();
        out.iter_mut().for_each(|x| *x = 0.0);
        for (slot, offset) in [(0usize, -1isize), (1, 0), (2, 1)] {
            let k = pos as isize + offset;
            if k >= 0 && (k as usize) < token_ids.len() {
                out[slot * d_e..(slot + 1) * d_e]
                    .copy_from_slice(self.embeddings.row(token_ids[k as usize]));
            }
        }
    }

    pub fn forward(&self, sentence: &Sentence) -> WindowCache {
        let token_ids: Vec<usize> = sentence
            .tokens()
            .iter()
            .map(|t| self.vocab.lookup(t))
            .collect();
        let d_h = self.mixing.rows();
        let mut ctx = vec![0.0; 3 * self.embed_dim()];
        let mut data = Vec::with_capacity(token_ids.len() * d_h);
        for pos in 0..token_ids.len() {
            self.context(&token_ids, pos, &mut ctx);
            let pre = self.mixing.matvec(&ctx);
            data.extend(pre.iter().zip(&self.bias).map(|(p, b)| math::tanh(p + b)));
        }
        WindowCache {
            token_ids,
            hidden: HiddenSequence { dim: d_h, data },
        }
    }

    /// Accumulates into `grads` given `∂loss/∂h` for every position.
    pub fn backward(&self, cache: &WindowCache, d_hidden: &[f64], grads: &mut WindowGrads) {
        let d_h = self.mixing.rows();
        let d_e = self.embed_dim();
        let mut ctx = vec![0.0; 3 * d_e];
        let mut d_ctx = vec![0.0; 3 * d_e];
        let mut d_pre = vec![0.0; d_h];
        for pos in 0..cache.token_ids.len() {
            let h = cache.hidden.row(pos);
            let dh = &d_hidden[pos * d_h..(pos + 1) * d_h];
            if dh.iter().all(|&x| x == 0.0) {
                continue;
            }
            for k in 0..d_h {
                d_pre[k] = dh[k] * (1.0 - h[k] * h[k]);
            }
            self.context(&cache.token_ids, pos, &mut ctx);
            grads.mixing.add_outer(&d_pre, &ctx);
            for (g, d) in grads.bias.iter_mut().zip(&d_pre) {
                *g += d;
            }
            d_ctx.iter_mut().for_each(|x| *x = 0.0);
            self.mixing.matvec_t_acc(&d_pre, &mut d_ctx);
            for (slot, offset) in [(0usize, -1isize), (1, 0), (2, 1)] {
                let k = pos as isize + offset;
                if k >= 0 && (k as usize) < cache.token_ids.len() {
                    let row = grads.embeddings.row_mut(cache.token_ids[k as usize]);
                    for (g, d) in row.iter_mut().zip(&d_ctx[slot * d_e..(slot + 1) * d_e]) {
                        *g += d;
                    }
                }
            }
        }
    }
}

impl Encode for WindowEncoder {
    fn hidden_dim(&self) -> usize {
        self.mixing.rows()
    }

    fn encode(&self, sentence: &Sentence) -> Result<HiddenSequence> {
        Ok(self.forward(sentence).hidden)
    }
}

/// Frozen hidden vectors keyed by sentence id.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedFeatures {
    dim: usize,
    sequences: BTreeMap<u64, HiddenSequence>,
}

impl PrecomputedFeatures {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sequences: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, sentence_id: u64, sequence: HiddenSequence) -> Result<()> {
        if sequence.dim() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: sequence.dim(),
                context: "precomputed feature dimension",
            });
        }
        self.sequences.insert(sentence_id, sequence);
        Ok(())
    }

    pub fn get(&self, sentence_id: u64) -> Result<&HiddenSequence> {
        self.sequences
            .get(&sentence_id)
            .ok_or(Error::MissingSentence(sentence_id))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &HiddenSequence)> {
        self.sequences.iter().map(|(&k, v)| (k, v))
    }
}

impl Encode for PrecomputedFeatures {
    fn hidden_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &Sentence) -> Result<HiddenSequence> {
        let seq = self.get(sentence.id())?;
        if seq.len() != sentence.len() {
            return Err(Error::Dimension {
                expected: sentence.len(),
                actual: seq.len(),
                context: "stored sequence length vs sentence length",
            });
        }
        Ok(seq.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Window(WindowEncoder),
    Precomputed(PrecomputedFeatures),
}

impl Encode for Encoder {
    fn hidden_dim(&self) -> usize {
        match self {
            Encoder::Window(w) => w.hidden_dim(),
            Encoder::Precomputed(p) => p.hidden_dim(),
        }
    }

    fn encode(&self, sentence: &Sentence) -> Result<HiddenSequence> {
        match self {
            Encoder::Window(w) => w.encode(sentence),
            Encoder::Precomputed(p) => p.encode(sentence),
        }
    }
}
