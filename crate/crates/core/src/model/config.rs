use serde::{Deserialize, Serialize};

use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::Task;

/// What the Graph Transformer contributes to the output head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceMode {
    /// Mean-pooled mention rows per entity slot, concatenated.
    #[default]
    EntityMean,
    /// Row 0 (the classification token) of the GT output.
    Cls,
}

/// Which encoder branches feed the head. Disabled branches contribute zeros.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branches {
    #[default]
    Both,
    TransformerOnly,
    GraphOnly,
}

impl Branches {
    pub fn transformer(self) -> bool {
        self != Branches::GraphOnly
    }

    pub fn graph(self) -> bool {
        self != Branches::TransformerOnly
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub label_set: Vec<String>,
    pub entity_slots: Vec<String>,
    #[serde(default)]
    pub gt_sentence_mode: SentenceMode,
    #[serde(default)]
    pub branches: Branches,
    #[serde(default)]
    pub max_neighbors: Option<usize>,
}

impl ModelConfig {
    /// Default encoder with the task's label set.
    pub fn for_task(task: Task, entity_slots: &[&str]) -> Self {
        Self {
            encoder: EncoderConfig::default(),
            label_set: task.labels().iter().map(|s| s.to_string()).collect(),
            entity_slots: entity_slots.iter().map(|s| s.to_string()).collect(),
            gt_sentence_mode: SentenceMode::default(),
            branches: Branches::default(),
            max_neighbors: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.label_set.len() < 2 {
            return Err(Error::Config("label_set needs at least two labels".into()));
        }
        if self.entity_slots.is_empty() {
            return Err(Error::Config("entity_slots must not be empty".into()));
        }
        for (name, list) in [("label_set", &self.label_set), ("entity_slots", &self.entity_slots)] {
            for (i, item) in list.iter().enumerate() {
                if list[..i].contains(item) {
                    return Err(Error::Config(format!("duplicate {item:?} in {name}")));
                }
            }
        }
        if self.max_neighbors == Some(0) {
            return Err(Error::Config("max_neighbors must be positive".into()));
        }
        Ok(())
    }

    /// Width of the head input.
    pub fn head_input_width(&self) -> usize {
        let h = self.encoder.hidden;
        match self.gt_sentence_mode {
            SentenceMode::EntityMean => h + self.entity_slots.len() * h,
            SentenceMode::Cls => 2 * h,
        }
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.label_set
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Label(label.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let cfg = ModelConfig::for_task(Task::Nary5, &["DRUG", "GENE", "MUTATION"]);
        cfg.validate().unwrap();
        assert_eq!(cfg.head_input_width(), 64 * 4);

        let mut bad = cfg.clone();
        bad.label_set.truncate(1);
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.entity_slots.clear();
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.entity_slots.push("DRUG".into());
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.encoder.heads = 5;
        assert!(bad.validate().is_err());

        let mut cls = cfg;
        cls.gt_sentence_mode = SentenceMode::Cls;
        assert_eq!(cls.head_input_width(), 128);
    }

    #[test]
    fn sparse_json_uses_defaults() {
        let cfg = ModelConfig::for_task(Task::Nary2, &["A", "B"]);
        let mut v = serde_json::to_value(&cfg).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("gt_sentence_mode");
        obj.remove("branches");
        obj.remove("max_neighbors");
        let back: ModelConfig = serde_json::from_value(v).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(
            serde_json::to_value(Branches::TransformerOnly).unwrap(),
            serde_json::json!("transformer_only")
        );
    }
}
