use rand::seq::SliceRandom;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::kfold::mean_std;
use super::metrics::evaluate;
use super::train::{train, TrainSpec};
use crate::error::{Error, Result};
use crate::graph::RelationInstance;
use crate::model::ModelConfig;
use crate::numerics::rng::{derive_seed, derived, streams};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TTest {
    pub n: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p_value: f64,
    /// Set when the differences have zero variance.
    pub degenerate: bool,
}

/// Paired two-sided t-test on `a[i] − b[i]`.
///
/// Zero-variance differences are flagged degenerate: all-zero gives t = 0,
/// p = 1; a nonzero constant gives t = ±∞, p = 0.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Config(format!("{} vs {} paired scores", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Config("a paired t-test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len();
    let (mean_diff, sd_diff) = mean_std(&diffs);
    let df = n - 1;
    if sd_diff == 0.0 {
        let (t, p_value) = if mean_diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean_diff), 0.0)
        };
        return Ok(TTest { n, mean_diff, sd_diff, t, df, p_value, degenerate: true });
    }
    let t = mean_diff / (sd_diff / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::Evaluation(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest { n, mean_diff, sd_diff, t, df, p_value, degenerate: false })
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionScore {
    pub partition: usize,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignificanceReport {
    /// "f1" for binary label sets, otherwise "accuracy".
    pub metric: String,
    pub partitions: Vec<PartitionScore>,
    pub mean_a: f64,
    pub std_a: f64,
    pub mean_b: f64,
    pub std_b: f64,
    pub test: TTest,
}

impl SignificanceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("partition,seed,a,b\n");
        for p in &self.partitions {
            out.push_str(&format!("{},{},{},{}\n", p.partition, p.seed, p.a, p.b));
        }
        out
    }
}

/// Trains and scores both configs on the same random train/test partitions.
/// Partition `j` is drawn from `derived(seed, [PARTITION, j])` and both
/// models train with `derive_seed(seed, [PARTITION, j])`.
pub fn significance_test(
    dataset: &[RelationInstance],
    config_a: &ModelConfig,
    config_b: &ModelConfig,
    partitions: usize,
    train_size: usize,
    test_size: usize,
    spec: &TrainSpec,
) -> Result<SignificanceReport> {
    if partitions < 2 {
        return Err(Error::Config(format!("need at least 2 partitions, got {partitions}")));
    }
    if train_size == 0 || test_size == 0 || train_size + test_size > dataset.len() {
        return Err(Error::Config(format!(
            "train_size {train_size} + test_size {test_size} must be positive and fit in {} instances",
            dataset.len()
        )));
    }
    if config_a.label_set != config_b.label_set {
        return Err(Error::Config("the two configs use different label sets".into()));
    }
    let metric = if config_a.label_set.len() == 2 { "f1" } else { "accuracy" };
    let mut scores = Vec::with_capacity(partitions);
    for j in 0..partitions {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut derived(spec.seed, &[streams::PARTITION, j as u64]));
        let pick = |idx: &[usize]| {
            let mut idx = idx.to_vec();
            idx.sort_unstable();
            idx.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>()
        };
        let train_set = pick(&order[..train_size]);
        let test_set = pick(&order[train_size..train_size + test_size]);
        let seed = derive_seed(spec.seed, &[streams::PARTITION, j as u64]);
        let run_spec = TrainSpec { seed, ..spec.clone() };
        let score = |cfg: &ModelConfig| -> Result<f64> {
            let model = train(&train_set, &run_spec, cfg)?.model;
            let summary = evaluate(&model, &test_set)?.summary();
            Ok(summary.get(metric).copied().unwrap_or(summary["accuracy"]))
        };
        let (a, b) = (score(config_a)?, score(config_b)?);
        scores.push(PartitionScore { partition: j, seed, a, b });
    }
    let a: Vec<f64> = scores.iter().map(|s| s.a).collect();
    let b: Vec<f64> = scores.iter().map(|s| s.b).collect();
    let (mean_a, std_a) = mean_std(&a);
    let (mean_b, std_b) = mean_std(&b);
    Ok(SignificanceReport {
        metric: metric.into(),
        partitions: scores,
        mean_a,
        std_a,
        mean_b,
        std_b,
        test: paired_t_test(&a, &b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_differences_are_degenerate() {
        let a = [0.6; 10];
        let b = [0.5; 10];
        let t = paired_t_test(&a, &b).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.p_value, 0.0);
        assert!(t.t.is_infinite() && t.t > 0.0);
        let same = paired_t_test(&a, &a).unwrap();
        assert!(same.degenerate);
        assert_eq!((same.t, same.p_value), (0.0, 1.0));
    }

    #[test]
    fn textbook_statistic() {
        // d = [1, 2, 3, 4]: mean 2.5, sd sqrt(5/3), t = 2.5 / (sd / 2)
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t_test(&a, &b).unwrap();
        let t = 2.5 / ((5.0f64 / 3.0).sqrt() / 2.0);
        assert!((r.t - t).abs() < 1e-12);
        assert_eq!(r.df, 3);
        // t ≈ 3.873 with 3 df: two-sided p ≈ 0.0305
        assert!((r.p_value - 0.030_466).abs() < 1e-4, "{}", r.p_value);
        let flipped = paired_t_test(&b, &a).unwrap();
        assert_eq!(flipped.t, -r.t);
        assert_eq!(flipped.p_value, r.p_value);
    }

    #[test]
    fn df_one_matches_cauchy_closed_form() {
        // With 1 df the t distribution is Cauchy: p = 1 − 2·atan(|t|)/π.
        let r = paired_t_test(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        let p = 1.0 - 2.0 * r.t.abs().atan() / std::f64::consts::PI;
        assert!((r.p_value - p).abs() < 1e-9);
    }

    #[test]
    fn argument_errors() {
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_err());
    }
}
