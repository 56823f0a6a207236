use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{expand_entities, RelationInstance};
use crate::model::{argmax, Model};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassStats {
    pub label: String,
    pub support: usize,
    pub correct: usize,
    pub predicted: usize,
    /// Correct over support; 0 when the class has no gold instances.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinaryStats {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub total: usize,
    pub correct: usize,
    /// Correct over total; 0 for an empty set.
    pub accuracy: f64,
    pub per_class: Vec<ClassStats>,
    pub binary: Option<BinaryStats>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class counts and, with a positive class, P/R/F1.
pub fn compute_metrics(gold: &[usize], pred: &[usize], labels: &[String], positive: Option<usize>) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::Evaluation(format!(
            "{} gold labels vs {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if let Some(&bad) = gold.iter().chain(pred).find(|&&l| l >= labels.len()) {
        return Err(Error::Index {
            what: "label index",
            index: bad,
            len: labels.len(),
        });
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let support = gold.iter().filter(|&&g| g == c).count();
            let correct = gold.iter().zip(pred).filter(|(&g, &p)| g == c && p == c).count();
            ClassStats {
                label: label.clone(),
                support,
                correct,
                predicted: pred.iter().filter(|&&p| p == c).count(),
                accuracy: ratio(correct, support),
            }
        })
        .collect();
    let binary = positive.map(|pos| {
        let count = |gp: bool, pp: bool| {
            gold.iter()
                .zip(pred)
                .filter(|(&g, &p)| (g == pos) == gp && (p == pos) == pp)
                .count()
        };
        let (tp, fp, fn_, tn) = (count(true, true), count(false, true), count(true, false), count(false, false));
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        BinaryStats {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
        }
    });
    Ok(Metrics {
        total: gold.len(),
        correct,
        accuracy: ratio(correct, gold.len()),
        per_class,
        binary,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub gold: String,
    pub predicted: String,
    pub probabilities: Vec<f64>,
    pub single_sentence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub all: Metrics,
    /// Instances whose entity mentions all lie in one sentence.
    pub single: Metrics,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    /// Flat metric map: accuracy, single_accuracy and, for binary label
    /// sets, precision/recall/f1.
    pub fn summary(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert("accuracy".into(), self.all.accuracy);
        out.insert("single_accuracy".into(), self.single.accuracy);
        if let Some(b) = &self.all.binary {
            out.insert("precision".into(), b.precision);
            out.insert("recall".into(), b.recall);
            out.insert("f1".into(), b.f1);
        }
        out
    }
}

/// Positive class of a two-label set: "yes" if present, else none.
pub fn positive_index(labels: &[String]) -> Option<usize> {
    (labels.len() == 2).then(|| labels.iter().position(|l| l == "yes")).flatten()
}

/// Predicts every instance and scores against gold labels.
///
/// Instances are expanded over entity IDs; expansions of one original are
/// merged by taking the per-label maximum probability before the argmax.
pub fn evaluate(model: &Model, dataset: &[RelationInstance]) -> Result<EvalReport> {
    let labels = &model.config.label_set;
    for inst in dataset {
        if inst.task.labels() != labels.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            return Err(Error::Config(format!(
                "instance {} uses {} labels, the model was trained on {:?}",
                inst.id,
                inst.task.name(),
                labels
            )));
        }
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    for inst in dataset {
        let mut merged: Option<Vec<f64>> = None;
        for expanded in expand_entities(inst) {
            let p = model.probabilities(&model.prepare(&expanded)?)?;
            merged = Some(match merged {
                None => p,
                Some(m) => m.iter().zip(&p).map(|(a, b)| a.max(*b)).collect(),
            });
        }
        let probabilities = merged.expect("expansion yields at least one instance");
        predictions.push(Prediction {
            id: inst.id.clone(),
            gold: inst.label.clone(),
            predicted: labels[argmax(&probabilities)].clone(),
            probabilities,
            single_sentence: inst.single_sentence()?,
        });
    }
    report_from_predictions(labels, predictions)
}

pub fn report_from_predictions(labels: &[String], predictions: Vec<Prediction>) -> Result<EvalReport> {
    let index = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Label(l.to_string()))
    };
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    let mut sgold = Vec::new();
    let mut spred = Vec::new();
    for p in &predictions {
        let (g, q) = (index(&p.gold)?, index(&p.predicted)?);
        gold.push(g);
        pred.push(q);
        if p.single_sentence {
            sgold.push(g);
            spred.push(q);
        }
    }
    let positive = positive_index(labels);
    Ok(EvalReport {
        all: compute_metrics(&gold, &pred, labels, positive)?,
        single: compute_metrics(&sgold, &spred, labels, positive)?,
        predictions,
    })
}
