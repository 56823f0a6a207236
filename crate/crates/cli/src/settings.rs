use std::fs;
use std::path::Path;

use bertgt_core::graph::{RelationInstance, Task};
use bertgt_core::harness::TrainSpec;
use bertgt_core::model::{Branches, ModelConfig, SentenceMode};
use bertgt_core::{Error, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Overlays explicitly given flags on the JSON config file. Keys are the
/// snake_case field names; a key the subcommand does not know is an error.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Value::Object(flag_map) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged = match config {
        None => Map::new(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            match serde_json::from_str(&text)? {
                Value::Object(m) => m,
                _ => return Err(Error::Config(format!("{}: config file must be a JSON object", path.display()))),
            }
        }
    };
    if let Some(unknown) = merged.keys().find(|k| !flag_map.contains_key(*k)) {
        return Err(Error::Config(format!("unknown config key {unknown:?}")));
    }
    for (k, v) in flag_map {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(format!("config: {e}")))
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

fn parse_enum<T: DeserializeOwned>(value: &str, what: &str) -> Result<T> {
    serde_json::from_value(Value::String(value.to_string()))
        .map_err(|_| Error::Config(format!("unknown {what} {value:?}")))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelKnobs {
    /// nary5, nary2 or binary_abs (default: task of the first instance)
    #[arg(long)]
    pub task: Option<String>,
    /// Entity slots in head order (default: slots of the first instance)
    #[arg(long, value_delimiter = ',')]
    pub slots: Option<Vec<String>>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_width: Option<usize>,
    #[arg(long)]
    pub transformer_layers: Option<usize>,
    #[arg(long)]
    pub graph_layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub init_std: Option<f64>,
    #[arg(long)]
    pub max_neighbors: Option<usize>,
    /// both, transformer_only or graph_only
    #[arg(long)]
    pub branches: Option<String>,
    /// entity_mean or cls
    #[arg(long)]
    pub sentence_mode: Option<String>,
}

impl ModelKnobs {
    pub fn resolve(&self, data: &[RelationInstance]) -> Result<ModelConfig> {
        let first = data.first();
        let task = match (&self.task, first) {
            (Some(t), _) => Task::parse(t)?,
            (None, Some(inst)) => inst.task,
            (None, None) => return Err(Error::Config("cannot infer the task from an empty dataset".into())),
        };
        let slots: Vec<String> = match (&self.slots, first) {
            (Some(s), _) => s.clone(),
            (None, Some(inst)) => inst.entities.iter().map(|e| e.eid.clone()).collect(),
            (None, None) => Vec::new(),
        };
        let slot_refs: Vec<&str> = slots.iter().map(String::as_str).collect();
        let mut cfg = ModelConfig::for_task(task, &slot_refs);
        let enc = &mut cfg.encoder;
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { enc.$field = v; } )* };
        }
        set!(hidden, heads, ffn_width, transformer_layers, graph_layers, dropout, max_len, init_std);
        cfg.max_neighbors = self.max_neighbors;
        if let Some(b) = &self.branches {
            cfg.branches = parse_enum::<Branches>(b, "branches")?;
        }
        if let Some(m) = &self.sentence_mode {
            cfg.gt_sentence_mode = parse_enum::<SentenceMode>(m, "sentence mode")?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainKnobs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    /// Global gradient-norm clip; 0 disables clipping
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    #[arg(long)]
    pub validation_size: Option<usize>,
    /// Stop once an epoch reaches this training accuracy
    #[arg(long)]
    pub target_train_accuracy: Option<f64>,
}

impl TrainKnobs {
    pub fn resolve(&self) -> Result<TrainSpec> {
        let mut spec = TrainSpec::default();
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { spec.$field = v; } )* };
        }
        set!(seed, epochs, batch_size, learning_rate, beta1, beta2, epsilon, warmup_fraction);
        if let Some(m) = self.max_grad_norm {
            spec.max_grad_norm = (m > 0.0).then_some(m);
        }
        spec.validation_size = self.validation_size;
        spec.target_train_accuracy = self.target_train_accuracy;
        spec.validate()?;
        Ok(spec)
    }
}
