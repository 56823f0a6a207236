use std::collections::BTreeMap;

use serde::Serialize;

use super::metrics::evaluate;
use super::train::{train, TrainSpec};
use crate::error::{Error, Result};
use crate::graph::RelationInstance;
use crate::model::ModelConfig;

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    /// `None` is the uncapped baseline.
    pub cap: Option<usize>,
    pub final_train_accuracy: f64,
    pub summary: BTreeMap<String, f64>,
}

/// Retrains once per neighbor cap with the same seed and scores on `test`.
pub fn sweep_neighbor_cap(
    train_set: &[RelationInstance],
    test_set: &[RelationInstance],
    caps: &[Option<usize>],
    spec: &TrainSpec,
    config: &ModelConfig,
) -> Result<Vec<SweepPoint>> {
    if caps.is_empty() {
        return Err(Error::Config("no caps to sweep".into()));
    }
    if caps.contains(&Some(0)) {
        return Err(Error::Config("neighbor caps must be positive".into()));
    }
    caps.iter()
        .map(|&cap| {
            let cfg = ModelConfig { max_neighbors: cap, ..config.clone() };
            let outcome = train(train_set, spec, &cfg)?;
            let summary = evaluate(&outcome.model, test_set)?.summary();
            Ok(SweepPoint {
                cap,
                final_train_accuracy: outcome.curve.last().map_or(0.0, |r| r.train_accuracy),
                summary,
            })
        })
        .collect()
}

/// Plot-ready CSV; an uncapped point prints an empty cap.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let keys: Vec<&String> = points.first().map(|p| p.summary.keys().collect()).unwrap_or_default();
    let mut out = String::from("cap,final_train_accuracy");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for p in points {
        out.push_str(&p.cap.map(|c| c.to_string()).unwrap_or_default());
        out.push_str(&format!(",{}", p.final_train_accuracy));
        for k in &keys {
            out.push_str(&format!(",{}", p.summary[*k]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_neighbors, Task};
    use crate::harness::synthetic::{generate_synthetic, SyntheticSpec};

    fn tiny() -> ModelConfig {
        let mut cfg = ModelConfig::for_task(Task::Nary2, &["DRUG", "MUTATION"]);
        cfg.encoder.hidden = 8;
        cfg.encoder.heads = 2;
        cfg.encoder.ffn_width = 8;
        cfg.encoder.transformer_layers = 1;
        cfg.encoder.graph_layers = 1;
        cfg
    }

    #[test]
    fn inactive_cap_matches_uncapped() {
        let data = generate_synthetic(16, 2, &SyntheticSpec::default()).unwrap();
        let (train_set, test_set) = data.split_at(12);
        let widest = data
            .iter()
            .map(|i| build_neighbors(i, None).unwrap().max_set_size())
            .max()
            .unwrap();
        let spec = TrainSpec { epochs: 2, batch_size: 4, ..TrainSpec::default() };
        let points = sweep_neighbor_cap(train_set, test_set, &[None, Some(widest + 1), Some(1)], &spec, &tiny()).unwrap();
        assert_eq!(points[0].summary, points[1].summary);
        assert_eq!(points[0].final_train_accuracy, points[1].final_train_accuracy);
        let csv = sweep_csv(&points);
        assert!(csv.starts_with("cap,final_train_accuracy,accuracy,f1,precision,recall,single_accuracy\n,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn zero_cap_rejected() {
        let spec = TrainSpec::default();
        assert!(sweep_neighbor_cap(&[], &[], &[Some(0)], &spec, &tiny()).is_err());
        assert!(sweep_neighbor_cap(&[], &[], &[], &spec, &tiny()).is_err());
    }
}
