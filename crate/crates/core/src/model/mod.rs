//! The dual-encoder relation classifier.
//!
//! A shared embedding feeds a Transformer stack and a Graph Transformer
//! stack. The head concatenates the Transformer's first-token row with the
//! GT contribution (mean-pooled mention rows per entity slot, or GT's
//! first-token row), then applies linear, GELU, dense.

pub mod checkpoint;
mod config;
mod forward;
mod params;
mod vocab;

use std::path::Path;

pub use config::{Branches, ModelConfig, SentenceMode};
pub use forward::{
    argmax, encode, forward, grad_check_batch, head, logits, loss_and_grads, prepare, prepare_with_graph, representations,
    Example,
};
pub use params::{ModelParams, OutputHead};
pub use vocab::{Vocab, CLS_TOKEN, UNK_TOKEN};

use crate::error::Result;
use crate::graph::{NeighborGraph, RelationInstance};
use crate::numerics::{ops, Tensor};

/// Config, vocabulary and parameters: everything a checkpoint stores.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
}

impl Model {
    /// Fresh parameters; `config.encoder.vocab_size` is set from `vocab`.
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.encoder.vocab_size = vocab.len();
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, vocab, params })
    }

    pub fn prepare(&self, inst: &RelationInstance) -> Result<Example> {
        prepare(inst, &self.vocab, &self.config)
    }

    pub fn logits(&self, ex: &Example) -> Result<Tensor> {
        logits(&self.params, &self.config, ex)
    }

    /// Evaluation-mode logits for an instance with a given neighbor graph.
    pub fn forward_instance(&self, inst: &RelationInstance, graph: &NeighborGraph) -> Result<Tensor> {
        inst.validate()?;
        let ex = prepare_with_graph(inst, graph, &self.vocab, &self.config)?;
        self.logits(&ex)
    }

    pub fn probabilities(&self, ex: &Example) -> Result<Vec<f64>> {
        Ok(ops::softmax_rows(&self.logits(ex)?)?.into_vec())
    }

    /// Index into `config.label_set`.
    pub fn predict(&self, ex: &Example) -> Result<usize> {
        Ok(argmax(self.logits(ex)?.data()))
    }

    pub fn predict_label(&self, inst: &RelationInstance) -> Result<&str> {
        let ex = self.prepare(inst)?;
        Ok(&self.config.label_set[self.predict(&ex)?])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        checkpoint::load(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::graph::{build_neighbors, DepArc, Entity, Task};

    fn inst() -> RelationInstance {
        RelationInstance {
            id: "m".into(),
            tokens: ["aspirin", "blocks", "COX1", "."].map(String::from).to_vec(),
            dep_head: [1, 1, 1, 1].iter().map(|&h| DepArc { head: h, label: "d".into() }).collect(),
            entities: vec![
                Entity { eid: "CHEMICAL".into(), kb_ids: vec![], mentions: vec![[0, 1]], mention_kb_ids: None },
                Entity { eid: "DISEASE".into(), kb_ids: vec![], mentions: vec![[2, 3]], mention_kb_ids: None },
            ],
            label: "yes".into(),
            task: Task::BinaryAbs,
            group: None,
        }
    }

    fn model() -> Model {
        let mut cfg = ModelConfig::for_task(Task::BinaryAbs, &["CHEMICAL", "DISEASE"]);
        cfg.encoder.hidden = 8;
        cfg.encoder.heads = 2;
        cfg.encoder.ffn_width = 8;
        cfg.encoder.transformer_layers = 1;
        cfg.encoder.graph_layers = 1;
        cfg.encoder.max_len = 16;
        Model::new(cfg, Vocab::build([&inst()]), 3).unwrap()
    }

    #[test]
    fn predict_is_argmax_of_logits() {
        let m = model();
        let i = inst();
        let ex = m.prepare(&i).unwrap();
        let l = m.logits(&ex).unwrap();
        let p = m.probabilities(&ex).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(m.predict(&ex).unwrap(), argmax(l.data()));
        assert_eq!(m.predict_label(&i).unwrap(), m.config.label_set[argmax(&p)]);
        let graph = build_neighbors(&i, None).unwrap();
        assert_eq!(m.forward_instance(&i, &graph).unwrap(), l);
    }

    #[test]
    fn checkpoint_round_trip_is_exact_and_deterministic() {
        let m = model();
        let bytes = checkpoint::to_bytes(&m).unwrap();
        assert_eq!(&bytes[..8], checkpoint::MAGIC);
        assert_eq!(checkpoint::to_bytes(&m).unwrap(), bytes);
        let back = checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let bytes = checkpoint::to_bytes(&model()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(checkpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(checkpoint::from_bytes(&bytes[..30]).is_err());
        let mut longer = bytes.clone();
        longer.extend_from_slice(&0f64.to_le_bytes());
        assert!(checkpoint::from_bytes(&longer).is_err());
    }
}
