use rand::Rng;

use super::config::ModelConfig;
use crate::encoders::{EmbeddingTable, EncoderBlock};
use crate::error::Result;
use crate::numerics::rng::{derived, streams, truncated_normal};
use crate::numerics::Tensor;

/// Linear map from the concatenated representations to width `h`, then a
/// dense map to one logit per label.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputHead<T = Tensor> {
    pub linear_w: T,
    pub linear_b: T,
    pub dense_w: T,
    pub dense_b: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub embeddings: EmbeddingTable<T>,
    pub transformer: Vec<EncoderBlock<T>>,
    pub graph: Vec<EncoderBlock<T>>,
    pub head: OutputHead<T>,
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| truncated_normal(rng, std)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

impl ModelParams<Tensor> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let enc = &cfg.encoder;
        let mut rng = derived(seed, &[streams::INIT]);
        let embeddings = EmbeddingTable::init(enc, &mut rng);
        let transformer = (0..enc.transformer_layers)
            .map(|_| EncoderBlock::init(enc, &mut rng))
            .collect::<Result<_>>()?;
        let graph = (0..enc.graph_layers)
            .map(|_| EncoderBlock::init(enc, &mut rng))
            .collect::<Result<_>>()?;
        let h = enc.hidden;
        let head = OutputHead {
            linear_w: random_matrix(&mut rng, cfg.head_input_width(), h, enc.init_std),
            linear_b: Tensor::zeros(vec![h]),
            dense_w: random_matrix(&mut rng, h, cfg.label_set.len(), enc.init_std),
            dense_b: Tensor::zeros(vec![cfg.label_set.len()]),
        };
        Ok(Self {
            embeddings,
            transformer,
            graph,
            head,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Zeros shaped like each parameter.
    pub fn zeros_like(&self) -> Self {
        self.map(&mut |t| Tensor::zeros(t.shape().to_vec()))
    }
}

impl<T> ModelParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ModelParams<U> {
        ModelParams {
            embeddings: self.embeddings.map(f),
            transformer: self.transformer.iter().map(|b| b.map(f)).collect(),
            graph: self.graph.iter().map(|b| b.map(f)).collect(),
            head: OutputHead {
                linear_w: f(&self.head.linear_w),
                linear_b: f(&self.head.linear_b),
                dense_w: f(&self.head.dense_w),
                dense_b: f(&self.head.dense_b),
            },
        }
    }

    /// Visits every parameter with a stable dotted name, in the same order
    /// as [`map`](Self::map) and [`visit_mut`](Self::visit_mut).
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(String, &'a T)) {
        self.embeddings.visit("embeddings", f);
        for (i, b) in self.transformer.iter().enumerate() {
            b.visit(&format!("transformer.{i}"), f);
        }
        for (i, b) in self.graph.iter().enumerate() {
            b.visit(&format!("graph.{i}"), f);
        }
        f("head.linear_w".into(), &self.head.linear_w);
        f("head.linear_b".into(), &self.head.linear_b);
        f("head.dense_w".into(), &self.head.dense_w);
        f("head.dense_b".into(), &self.head.dense_b);
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        self.embeddings.visit_mut(f);
        for b in &mut self.transformer {
            b.visit_mut(f);
        }
        for b in &mut self.graph {
            b.visit_mut(f);
        }
        f(&mut self.head.linear_w);
        f(&mut self.head.linear_b);
        f(&mut self.head.dense_w);
        f(&mut self.head.dense_b);
    }

    pub fn tensors(&self) -> Vec<&T> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t));
        out
    }

    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.visit(&mut |n, t| out.push((n, t)));
        out
    }

    /// Same structure with the leaves replaced, in visit order.
    ///
    /// # Panics
    /// If `items` has fewer entries than there are parameters.
    pub fn rebuild<U>(&self, items: impl IntoIterator<Item = U>) -> ModelParams<U> {
        let mut it = items.into_iter();
        self.map(&mut |_| it.next().expect("one item per parameter"))
    }
}
