use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::metrics::{evaluate, EvalReport};
use super::train::{train, TrainSpec};
use crate::error::{Error, Result};
use crate::graph::RelationInstance;
use crate::model::ModelConfig;
use crate::numerics::rng::{derive_seed, derived, streams};

/// Shuffles `0..n` and cuts it into `k` contiguous folds whose sizes differ
/// by at most one (earlier folds take the remainder).
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Config(format!("{n} instances cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived(seed, &[streams::FOLD]));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        let mut fold = order[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub test_size: usize,
    pub summary: BTreeMap<String, f64>,
    #[serde(skip)]
    pub report: EvalReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct KFoldReport {
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

impl KFoldReport {
    fn from_folds(k: usize, folds: Vec<FoldResult>) -> Self {
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        if let Some(first) = folds.first() {
            for key in first.summary.keys() {
                let values: Vec<f64> = folds.iter().map(|f| f.summary[key]).collect();
                let (m, s) = mean_std(&values);
                mean.insert(key.clone(), m);
                std.insert(key.clone(), s);
            }
        }
        Self { k, folds, mean, std }
    }

    /// One CSV row per fold followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.mean.keys().collect();
        let mut out = format!("fold,seed,test_size,{}\n", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
        for f in &self.folds {
            let vals: Vec<String> = keys.iter().map(|k| f.summary[*k].to_string()).collect();
            out.push_str(&format!("{},{},{},{}\n", f.fold, f.seed, f.test_size, vals.join(",")));
        }
        for (name, map) in [("mean", &self.mean), ("std", &self.std)] {
            let vals: Vec<String> = keys.iter().map(|k| map[*k].to_string()).collect();
            out.push_str(&format!("{name},,,{}\n", vals.join(",")));
        }
        out
    }
}

/// k-fold cross-validation. Fold `i` trains with seed
/// `derive_seed(spec.seed, [FOLD, i])`, which also redraws its validation
/// subset from the non-test folds.
pub fn kfold(dataset: &[RelationInstance], k: usize, spec: &TrainSpec, config: &ModelConfig) -> Result<KFoldReport> {
    spec.validate()?;
    let folds = kfold_partition(dataset.len(), k, spec.seed)?;
    let smallest_pool = dataset.len() - folds[0].len();
    if spec.resolved_validation_size(smallest_pool).is_err() {
        return Err(Error::Config(format!(
            "training pool of {smallest_pool} instances is too small for the validation size"
        )));
    }
    let mut results = Vec::with_capacity(k);
    for (i, test_idx) in folds.iter().enumerate() {
        let mut in_test = vec![false; dataset.len()];
        test_idx.iter().for_each(|&j| in_test[j] = true);
        let train_set: Vec<RelationInstance> = (0..dataset.len())
            .filter(|&j| !in_test[j])
            .map(|j| dataset[j].clone())
            .collect();
        let test_set: Vec<RelationInstance> = test_idx.iter().map(|&j| dataset[j].clone()).collect();
        let seed = derive_seed(spec.seed, &[streams::FOLD, i as u64]);
        let outcome = train(&train_set, &TrainSpec { seed, ..spec.clone() }, config)?;
        let report = evaluate(&outcome.model, &test_set)?;
        results.push(FoldResult {
            fold: i,
            seed,
            test_size: test_set.len(),
            summary: report.summary(),
            report,
        });
    }
    Ok(KFoldReport::from_folds(k, results))
}
