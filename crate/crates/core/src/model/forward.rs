use super::config::{ModelConfig, SentenceMode};
use super::params::ModelParams;
use super::vocab::Vocab;
use crate::attention::NeighborMask;
use crate::encoders::{embed, graph_encode, transformer_encode, Dropout};
use crate::error::{Error, Result};
use crate::graph::{build_neighbors, NeighborGraph, RelationInstance};
use crate::numerics::rng::{derived, streams};
use crate::numerics::{grad_check_many, GradCheckReport, Tape, Tensor, Var};

/// An instance ready for the network: `[CLS]`-prefixed ids, the matching
/// neighbor mask, and per-slot pooling rows.
#[derive(Clone, Debug)]
pub struct Example {
    pub id: String,
    pub group: String,
    pub ids: Vec<usize>,
    pub mask: NeighborMask,
    /// Sorted, deduplicated rows (after the `[CLS]` shift) of every mention
    /// of each entity slot, in config order.
    pub entity_rows: Vec<Vec<usize>>,
    pub label: usize,
    /// All entity mentions fall in one sentence.
    pub single_sentence: bool,
}

pub fn prepare(inst: &RelationInstance, vocab: &Vocab, cfg: &ModelConfig) -> Result<Example> {
    inst.validate()?;
    let graph = build_neighbors(inst, cfg.max_neighbors)?;
    prepare_with_graph(inst, &graph, vocab, cfg)
}

/// Like [`prepare`] with a precomputed neighbor graph over the raw tokens.
pub fn prepare_with_graph(
    inst: &RelationInstance,
    graph: &NeighborGraph,
    vocab: &Vocab,
    cfg: &ModelConfig,
) -> Result<Example> {
    let bad = |message: String| Error::Instance {
        id: inst.id.clone(),
        message,
    };
    if graph.len() != inst.len() {
        return Err(bad(format!(
            "neighbor graph has {} tokens, instance has {}",
            graph.len(),
            inst.len()
        )));
    }
    if inst.len() + 1 > cfg.encoder.max_len {
        return Err(Error::Length {
            len: inst.len() + 1,
            max_len: cfg.encoder.max_len,
        });
    }
    if let Some(extra) = inst.entities.iter().find(|e| !cfg.entity_slots.contains(&e.eid)) {
        return Err(bad(format!("entity slot {} is not configured", extra.eid)));
    }
    let mut entity_rows = Vec::with_capacity(cfg.entity_slots.len());
    for slot in &cfg.entity_slots {
        let entity = inst
            .entity(slot)
            .ok_or_else(|| bad(format!("missing entity slot {slot}")))?;
        let mut rows: Vec<usize> = entity
            .mentions
            .iter()
            .flat_map(|&[s, e]| (s..e).map(|t| t + 1))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        if rows.is_empty() {
            return Err(bad(format!("entity slot {slot} has no mention to pool")));
        }
        entity_rows.push(rows);
    }
    let label = cfg.label_index(&inst.label)?;
    let single_sentence = inst.single_sentence()?;
    Ok(Example {
        id: inst.id.clone(),
        group: inst.group_id().to_string(),
        ids: vocab.encode(&inst.tokens),
        mask: graph.with_cls_prefix().to_mask()?,
        entity_rows,
        label,
        single_sentence,
    })
}

/// Head inputs: the Transformer's first-token row and the GT contribution
/// (pooled entity rows or GT's first-token row), each `1×_`. A disabled
/// branch yields zeros and is not computed.
pub fn encode(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    cfg: &ModelConfig,
    ex: &Example,
    dropout: &mut Dropout,
) -> Result<(Var, Var)> {
    let enc = &cfg.encoder;
    let h = enc.hidden;
    let x = embed(tape, &params.embeddings, &ex.ids, enc)?;
    let sentence = if cfg.branches.transformer() {
        let tx = transformer_encode(tape, x, &params.transformer, enc, dropout)?;
        tape.mean_rows(tx, &[0])?
    } else {
        tape.constant(Tensor::zeros(vec![1, h]))
    };
    let gt_width = cfg.head_input_width() - h;
    let graph_part = if cfg.branches.graph() {
        let gx = graph_encode(tape, x, &ex.mask, &params.graph, enc, dropout)?;
        match cfg.gt_sentence_mode {
            SentenceMode::EntityMean => {
                let pooled = ex
                    .entity_rows
                    .iter()
                    .map(|rows| tape.mean_rows(gx, rows))
                    .collect::<Result<Vec<_>>>()?;
                tape.concat_cols(&pooled)?
            }
            SentenceMode::Cls => tape.mean_rows(gx, &[0])?,
        }
    } else {
        tape.constant(Tensor::zeros(vec![1, gt_width]))
    };
    Ok((sentence, graph_part))
}

/// Concatenate, linear, GELU, dense: `1×|labels|` logits.
pub fn head(tape: &mut Tape, params: &ModelParams<Var>, sentence: Var, graph_part: Var) -> Result<Var> {
    let z = tape.concat_cols(&[sentence, graph_part])?;
    let hidden = tape.matmul(z, params.head.linear_w)?;
    let hidden = tape.add_row(hidden, params.head.linear_b)?;
    let hidden = tape.gelu(hidden);
    let logits = tape.matmul(hidden, params.head.dense_w)?;
    tape.add_row(logits, params.head.dense_b)
}

pub fn forward(
    tape: &mut Tape,
    params: &ModelParams<Var>,
    cfg: &ModelConfig,
    ex: &Example,
    dropout: &mut Dropout,
) -> Result<Var> {
    let (sentence, graph_part) = encode(tape, params, cfg, ex, dropout)?;
    head(tape, params, sentence, graph_part)
}

/// Evaluation-mode logits.
pub fn logits(params: &ModelParams, cfg: &ModelConfig, ex: &Example) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.map(&mut |t| tape.constant(t.clone()));
    let out = forward(&mut tape, &vars, cfg, ex, &mut Dropout::off())?;
    Ok(tape.value(out).clone())
}

/// Evaluation-mode head inputs `(sentence, graph_part)`.
pub fn representations(params: &ModelParams, cfg: &ModelConfig, ex: &Example) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let vars = params.map(&mut |t| tape.constant(t.clone()));
    let (s, g) = encode(&mut tape, &vars, cfg, ex, &mut Dropout::off())?;
    Ok((tape.value(s).clone(), tape.value(g).clone()))
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy over the batch and its gradient for every parameter.
///
/// Each example runs on its own tape; gradients are summed in batch order.
/// With `dropout_seed`, example `k` draws its dropout masks from a stream
/// derived from the seed and `k`.
pub fn loss_and_grads(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[&Example],
    dropout_seed: Option<u64>,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut acc: Vec<Tensor> = params.tensors().into_iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut total = 0.0;
    for (k, ex) in batch.iter().enumerate() {
        let mut tape = Tape::new();
        let vars = params.map(&mut |t| tape.leaf(t.clone()));
        let mut dropout = match dropout_seed {
            Some(seed) if cfg.encoder.dropout > 0.0 => {
                Dropout::train(cfg.encoder.dropout, derived(seed, &[streams::DROPOUT, k as u64]))
            }
            _ => Dropout::off(),
        };
        let out = forward(&mut tape, &vars, cfg, ex, &mut dropout)?;
        let loss = tape.cross_entropy(out, &[ex.label])?;
        total += tape.value(loss).data()[0];
        tape.backward_scaled(loss, scale)?;
        for (a, v) in acc.iter_mut().zip(vars.tensors()) {
            let g = tape.grad(*v);
            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                *x += y;
            }
        }
    }
    Ok((total * scale, params.rebuild(acc)))
}

/// Compares batch-loss gradients (dropout off) with central differences
/// over every parameter coordinate.
pub fn grad_check_batch(params: &ModelParams, cfg: &ModelConfig, batch: &[&Example], step: f64) -> Result<GradCheckReport> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let thetas: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
    grad_check_many(
        |tape, vars| {
            let p = params.rebuild(vars.iter().copied());
            let mut total = None;
            for ex in batch {
                let logits = forward(tape, &p, cfg, ex, &mut Dropout::off())?;
                let loss = tape.cross_entropy(logits, &[ex.label])?;
                total = Some(match total {
                    None => loss,
                    Some(t) => tape.add(t, loss)?,
                });
            }
            Ok(tape.scale(total.expect("nonempty batch"), 1.0 / batch.len() as f64))
        },
        &thetas,
        step,
    )
}
