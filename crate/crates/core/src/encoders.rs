//! Shared input embedding and the two encoder stacks.
//!
//! Both stacks use the same post-norm block: attention, residual add, layer
//! norm, position-wise feed-forward, residual add, layer norm. The Transformer
//! stack attends over all tokens; the Graph Transformer stack attends over
//! each token's neighbor set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{attend, head_width, AttentionParams, NeighborMask};
use crate::error::{Error, Result};
use crate::numerics::rng::{truncated_normal, DetRng};
use crate::numerics::{Tape, Tensor, Var};

/// Reserved id for out-of-vocabulary tokens.
pub const UNK_ID: usize = 0;
/// Reserved id of the classification token prepended to every instance.
pub const CLS_ID: usize = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub transformer_layers: usize,
    pub graph_layers: usize,
    pub dropout: f64,
    pub max_len: usize,
    pub vocab_size: usize,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            heads: 4,
            ffn_width: 128,
            transformer_layers: 2,
            graph_layers: 2,
            dropout: 0.1,
            max_len: 128,
            vocab_size: 2,
            layer_norm_eps: 1e-12,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        head_width(self.hidden, self.heads)?;
        let fail = |m: String| Err(Error::Config(m));
        if self.transformer_layers == 0 || self.graph_layers == 0 {
            return fail("both encoder stacks need at least one block".into());
        }
        if self.ffn_width == 0 {
            return fail("ffn_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".into());
        }
        if self.vocab_size <= CLS_ID {
            return fail("vocabulary must hold the reserved UNK and CLS ids".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return fail("layer_norm_eps must be positive".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return fail("init_std must be positive".into());
        }
        Ok(())
    }
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| truncated_normal(rng, std)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// Token and position embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<T = Tensor> {
    pub token: T,
    pub position: T,
}

impl EmbeddingTable<Tensor> {
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            token: random_matrix(rng, cfg.vocab_size, cfg.hidden, cfg.init_std),
            position: random_matrix(rng, cfg.max_len, cfg.hidden, cfg.init_std),
        }
    }
}

impl<T> EmbeddingTable<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EmbeddingTable<U> {
        EmbeddingTable {
            token: f(&self.token),
            position: f(&self.position),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        f(format!("{prefix}.token"), &self.token);
        f(format!("{prefix}.position"), &self.position);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        f(&mut self.token);
        f(&mut self.position);
    }
}

/// Position-wise two-layer feed-forward network.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedForward<T = Tensor> {
    pub w_in: T,
    pub b_in: T,
    pub w_out: T,
    pub b_out: T,
}

/// One encoder block: attention sub-layer and feed-forward sub-layer, each
/// followed by residual add and layer norm.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderBlock<T = Tensor> {
    pub attention: AttentionParams<T>,
    pub norm1_gain: T,
    pub norm1_bias: T,
    pub ffn: FeedForward<T>,
    pub norm2_gain: T,
    pub norm2_bias: T,
}

impl EncoderBlock<Tensor> {
    pub fn init<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        let (h, f) = (cfg.hidden, cfg.ffn_width);
        Ok(Self {
            attention: AttentionParams::init(h, cfg.heads, cfg.init_std, rng)?,
            norm1_gain: Tensor::filled(vec![h], 1.0),
            norm1_bias: Tensor::zeros(vec![h]),
            ffn: FeedForward {
                w_in: random_matrix(rng, h, f, cfg.init_std),
                b_in: Tensor::zeros(vec![f]),
                w_out: random_matrix(rng, f, h, cfg.init_std),
                b_out: Tensor::zeros(vec![h]),
            },
            norm2_gain: Tensor::filled(vec![h], 1.0),
            norm2_bias: Tensor::zeros(vec![h]),
        })
    }
}

impl<T> EncoderBlock<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EncoderBlock<U> {
        EncoderBlock {
            attention: self.attention.map(f),
            norm1_gain: f(&self.norm1_gain),
            norm1_bias: f(&self.norm1_bias),
            ffn: FeedForward {
                w_in: f(&self.ffn.w_in),
                b_in: f(&self.ffn.b_in),
                w_out: f(&self.ffn.w_out),
                b_out: f(&self.ffn.b_out),
            },
            norm2_gain: f(&self.norm2_gain),
            norm2_bias: f(&self.norm2_bias),
        }
    }

    pub fn visit<'a>(&'a self, prefix: &str, f: &mut impl FnMut(String, &'a T)) {
        self.attention.visit(&format!("{prefix}.attention"), f);
        f(format!("{prefix}.norm1.gain"), &self.norm1_gain);
        f(format!("{prefix}.norm1.bias"), &self.norm1_bias);
        f(format!("{prefix}.ffn.w_in"), &self.ffn.w_in);
        f(format!("{prefix}.ffn.b_in"), &self.ffn.b_in);
        f(format!("{prefix}.ffn.w_out"), &self.ffn.w_out);
        f(format!("{prefix}.ffn.b_out"), &self.ffn.b_out);
        f(format!("{prefix}.norm2.gain"), &self.norm2_gain);
        f(format!("{prefix}.norm2.bias"), &self.norm2_bias);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        self.attention.visit_mut(f);
        f(&mut self.norm1_gain);
        f(&mut self.norm1_bias);
        f(&mut self.ffn.w_in);
        f(&mut self.ffn.b_in);
        f(&mut self.ffn.w_out);
        f(&mut self.ffn.b_out);
        f(&mut self.norm2_gain);
        f(&mut self.norm2_bias);
    }
}

/// Dropout state for one forward pass. `off()` is evaluation mode.
#[derive(Debug)]
pub struct Dropout {
    rate: f64,
    rng: Option<DetRng>,
}

impl Dropout {
    pub fn off() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: DetRng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &mut self.rng {
            Some(rng) if self.rate > 0.0 => tape.dropout(x, self.rate, rng),
            _ => Ok(x),
        }
    }
}

/// Token plus position embedding for each position. Ids outside the
/// vocabulary map to [`UNK_ID`].
pub fn embed(tape: &mut Tape, table: &EmbeddingTable<Var>, ids: &[usize], cfg: &EncoderConfig) -> Result<Var> {
    if ids.len() > cfg.max_len {
        return Err(Error::Length {
            len: ids.len(),
            max_len: cfg.max_len,
        });
    }
    let vocab = tape.value(table.token).rows();
    let ids: Vec<usize> = ids.iter().map(|&i| if i < vocab { i } else { UNK_ID }).collect();
    let positions: Vec<usize> = (0..ids.len()).collect();
    let tok = tape.gather_rows(table.token, &ids)?;
    let pos = tape.gather_rows(table.position, &positions)?;
    tape.add(tok, pos)
}

pub fn encode_block(
    tape: &mut Tape,
    x: Var,
    block: &EncoderBlock<Var>,
    mask: Option<&NeighborMask>,
    eps: f64,
    dropout: &mut Dropout,
) -> Result<Var> {
    let attended = attend(tape, x, &block.attention, mask)?;
    let attended = dropout.apply(tape, attended)?;
    let res1 = tape.add(x, attended)?;
    let x1 = tape.layer_norm(res1, block.norm1_gain, block.norm1_bias, eps)?;

    let inner = tape.matmul(x1, block.ffn.w_in)?;
    let inner = tape.add_row(inner, block.ffn.b_in)?;
    let inner = tape.gelu(inner);
    let ff = tape.matmul(inner, block.ffn.w_out)?;
    let ff = tape.add_row(ff, block.ffn.b_out)?;
    let ff = dropout.apply(tape, ff)?;
    let res2 = tape.add(x1, ff)?;
    tape.layer_norm(res2, block.norm2_gain, block.norm2_bias, eps)
}

fn encode_stack(
    tape: &mut Tape,
    x: Var,
    blocks: &[EncoderBlock<Var>],
    mask: Option<&NeighborMask>,
    cfg: &EncoderConfig,
    dropout: &mut Dropout,
) -> Result<Var> {
    let width = tape.value(x).cols();
    if tape.shape(x).len() != 2 || width != cfg.hidden {
        return Err(Error::shape("encoder input", tape.shape(x), &[0, cfg.hidden]));
    }
    blocks.iter().try_fold(x, |h, block| {
        encode_block(tape, h, block, mask, cfg.layer_norm_eps, dropout)
    })
}

/// Standard Transformer stack (self-attention in every block).
pub fn transformer_encode(
    tape: &mut Tape,
    x: Var,
    blocks: &[EncoderBlock<Var>],
    cfg: &EncoderConfig,
    dropout: &mut Dropout,
) -> Result<Var> {
    encode_stack(tape, x, blocks, None, cfg, dropout)
}

/// Graph Transformer stack (neighbor attention in every block).
pub fn graph_encode(
    tape: &mut Tape,
    x: Var,
    mask: &NeighborMask,
    blocks: &[EncoderBlock<Var>],
    cfg: &EncoderConfig,
    dropout: &mut Dropout,
) -> Result<Var> {
    encode_stack(tape, x, blocks, Some(mask), cfg, dropout)
}

/// Eager evaluation-mode encoding; `mask = None` runs the Transformer stack.
pub fn encode_eval(
    x: &Tensor,
    blocks: &[EncoderBlock],
    mask: Option<&NeighborMask>,
    cfg: &EncoderConfig,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let bv: Vec<_> = blocks
        .iter()
        .map(|b| b.map(&mut |t| tape.constant(t.clone())))
        .collect();
    let out = encode_stack(&mut tape, xv, &bv, mask, cfg, &mut Dropout::off())?;
    Ok(tape.value(out).clone())
}

/// Eager embedding lookup.
pub fn embed_eval(table: &EmbeddingTable, ids: &[usize], cfg: &EncoderConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let tv = table.map(&mut |t| tape.constant(t.clone()));
    let out = embed(&mut tape, &tv, ids, cfg)?;
    Ok(tape.value(out).clone())
}
