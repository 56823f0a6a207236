use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bertgt_core::graph::{
    build_neighbors, expand_entities, load_dataset, save_dataset, save_processed, ProcessedRecord, RelationInstance,
    Task,
};
use bertgt_core::harness::{
    curve_csv, evaluate, generate_synthetic, kfold, significance_test, sweep_csv, sweep_neighbor_cap, train,
    SyntheticSpec,
};
use bertgt_core::model::{grad_check_batch, Branches, Model, ModelConfig, ModelParams, SentenceMode, Vocab};
use bertgt_core::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::settings::{required, ModelKnobs, TrainKnobs};

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn relabel_all(data: Vec<RelationInstance>, target: &Option<String>) -> Result<Vec<RelationInstance>> {
    match target {
        None => Ok(data),
        Some(t) => {
            let task = Task::parse(t)?;
            data.iter().map(|i| i.relabel(task)).collect()
        }
    }
}

fn load(path: &Option<PathBuf>, flag: &str, relabel: &Option<String>) -> Result<Vec<RelationInstance>> {
    relabel_all(load_dataset(required(path, flag)?)?, relabel)
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepArgs {
    /// Input dataset (JSONL)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Processed output (JSONL with neighbor sets)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Convert labels to this task first (only nary5 to nary2)
    #[arg(long)]
    pub relabel: Option<String>,
    #[arg(long)]
    pub max_neighbors: Option<usize>,
}

pub fn prep(args: &PrepArgs) -> Result<serde_json::Value> {
    let data = load(&args.data, "data", &args.relabel)?;
    let mut records = Vec::new();
    for inst in &data {
        for expanded in expand_entities(inst) {
            let neighbors = build_neighbors(&expanded, args.max_neighbors)?.sets().to_vec();
            records.push(ProcessedRecord { instance: expanded, neighbors });
        }
    }
    save_processed(required(&args.output, "output")?, &records)?;
    Ok(json!({"instances": data.len(), "records": records.len()}))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthArgs {
    /// Number of instances
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub min_tokens: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

pub fn synth(args: &SynthArgs) -> Result<serde_json::Value> {
    let mut spec = SyntheticSpec::default();
    if let Some(v) = args.min_tokens {
        spec.min_tokens = v;
    }
    if let Some(v) = args.max_tokens {
        spec.max_tokens = v;
    }
    let n = *required(&args.n, "n")?;
    let data = generate_synthetic(n, args.seed.unwrap_or(0), &spec)?;
    save_dataset(required(&args.output, "output")?, &data)?;
    let positives = data.iter().filter(|i| i.label == "yes").count();
    Ok(json!({"instances": n, "positive": positives, "negative": n - positives}))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    /// Training dataset (JSONL)
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint path
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Loss curve CSV
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub relabel: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: TrainKnobs,
}

pub fn train_cmd(args: &TrainArgs) -> Result<serde_json::Value> {
    let data = load(&args.data, "data", &args.relabel)?;
    let output = required(&args.output, "output")?;
    let cfg = args.model.resolve(&data)?;
    let spec = args.spec.resolve()?;
    let outcome = match train(&data, &spec, &cfg) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, loss, last_good }) => {
            last_good.save(output)?;
            return Err(Error::Diverged { epoch, loss, last_good });
        }
        Err(e) => return Err(e),
    };
    outcome.model.save(output)?;
    if let Some(curve) = &args.curve {
        write_text(curve, &curve_csv(&outcome.curve))?;
    }
    Ok(json!({
        "epochs": outcome.curve.len(),
        "reached_target": outcome.reached_target,
        "final": outcome.curve.last(),
        "parameters": outcome.model.params.num_scalars(),
    }))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// Checkpoint path
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub relabel: Option<String>,
    /// Per-instance predictions (JSONL)
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Metric table (CSV)
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

pub fn eval(args: &EvalArgs) -> Result<serde_json::Value> {
    let model = Model::load(required(&args.model, "model")?)?;
    let data = load(&args.data, "data", &args.relabel)?;
    let report = evaluate(&model, &data)?;
    if let Some(p) = &args.predictions {
        write_jsonl(p, &report.predictions)?;
    }
    if let Some(p) = &args.metrics {
        let mut csv = String::from("subset,label,support,correct,predicted,accuracy\n");
        for (subset, m) in [("all", &report.all), ("single", &report.single)] {
            csv.push_str(&format!("{subset},*,{},{},{},{}\n", m.total, m.correct, m.total, m.accuracy));
            for c in &m.per_class {
                csv.push_str(&format!(
                    "{subset},{},{},{},{},{}\n",
                    c.label, c.support, c.correct, c.predicted, c.accuracy
                ));
            }
        }
        write_text(p, &csv)?;
    }
    Ok(json!({"summary": report.summary(), "all": report.all, "single": report.single}))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct KfoldArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of folds (default 5)
    #[arg(long)]
    pub k: Option<usize>,
    /// Per-fold metrics with mean and std rows (CSV)
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub relabel: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: TrainKnobs,
}

pub fn kfold_cmd(args: &KfoldArgs) -> Result<serde_json::Value> {
    let data = load(&args.data, "data", &args.relabel)?;
    let cfg = args.model.resolve(&data)?;
    let report = kfold(&data, args.k.unwrap_or(5), &args.spec.resolve()?, &cfg)?;
    if let Some(p) = &args.output {
        write_text(p, &report.to_csv())?;
    }
    Ok(json!({"k": report.k, "mean": report.mean, "std": report.std}))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SigtestArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of random train/test partitions (default 10)
    #[arg(long)]
    pub partitions: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Per-partition scores (CSV)
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub relabel: Option<String>,
    /// Model B branches (model B otherwise equals model A)
    #[arg(long)]
    pub b_branches: Option<String>,
    #[arg(long)]
    pub b_max_neighbors: Option<usize>,
    #[arg(long)]
    pub b_sentence_mode: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: TrainKnobs,
}

pub fn sigtest(args: &SigtestArgs) -> Result<serde_json::Value> {
    let data = load(&args.data, "data", &args.relabel)?;
    let a = args.model.resolve(&data)?;
    let b = ModelKnobs {
        branches: args.b_branches.clone().or(args.model.branches.clone()),
        max_neighbors: args.b_max_neighbors.or(args.model.max_neighbors),
        sentence_mode: args.b_sentence_mode.clone().or(args.model.sentence_mode.clone()),
        ..args.model.clone()
    }
    .resolve(&data)?;
    let report = significance_test(
        &data,
        &a,
        &b,
        args.partitions.unwrap_or(10),
        *required(&args.train_size, "train-size")?,
        *required(&args.test_size, "test-size")?,
        &args.spec.resolve()?,
    )?;
    if let Some(p) = &args.output {
        write_text(p, &report.to_csv())?;
    }
    Ok(json!({
        "metric": report.metric,
        "mean_a": report.mean_a,
        "std_a": report.std_a,
        "mean_b": report.mean_b,
        "std_b": report.std_b,
        "t_test": report.test,
    }))
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Neighbor caps; "none" runs uncapped
    #[arg(long, value_delimiter = ',')]
    pub caps: Option<Vec<String>>,
    /// cap → metrics (CSV)
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub relabel: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelKnobs,
    #[command(flatten)]
    #[serde(flatten)]
    pub spec: TrainKnobs,
}

pub fn sweep(args: &SweepArgs) -> Result<serde_json::Value> {
    let train_set = load(&args.train, "train", &args.relabel)?;
    let test_set = load(&args.test, "test", &args.relabel)?;
    let caps = required(&args.caps, "caps")?
        .iter()
        .map(|c| match c.trim() {
            "none" => Ok(None),
            s => s
                .parse::<usize>()
                .map(Some)
                .map_err(|_| Error::Config(format!("bad cap {s:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = args.model.resolve(&train_set)?;
    let points = sweep_neighbor_cap(&train_set, &test_set, &caps, &args.spec.resolve()?, &cfg)?;
    let csv = sweep_csv(&points);
    if let Some(p) = &args.output {
        write_text(p, &csv)?;
    }
    Ok(serde_json::to_value(&points)?)
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Init std for the checked parameters (default 0.5)
    #[arg(long)]
    pub init_std: Option<f64>,
    /// Finite-difference step (default 1e-5)
    #[arg(long)]
    pub step: Option<f64>,
    /// Maximum allowed relative error (default 1e-4)
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Tiny-model check on two synthetic instances: h 8, 2 heads, one layer per
/// stack.
pub fn gradcheck(args: &GradcheckArgs) -> Result<serde_json::Value> {
    let seed = args.seed.unwrap_or(0);
    let tolerance = args.tolerance.unwrap_or(1e-4);
    let spec = SyntheticSpec { min_tokens: 8, max_tokens: 10, ..SyntheticSpec::default() };
    let data = generate_synthetic(2, seed, &spec)?;
    let vocab = Vocab::build(&data);
    let mut cfg = ModelConfig::for_task(Task::Nary2, &["DRUG", "MUTATION"]);
    cfg.encoder.hidden = 8;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn_width = 16;
    cfg.encoder.transformer_layers = 1;
    cfg.encoder.graph_layers = 1;
    cfg.encoder.dropout = 0.0;
    cfg.encoder.max_len = 16;
    cfg.encoder.init_std = args.init_std.unwrap_or(0.5);
    cfg.encoder.vocab_size = vocab.len();
    cfg.branches = Branches::Both;
    cfg.gt_sentence_mode = SentenceMode::EntityMean;
    let params = ModelParams::init(&cfg, seed)?;
    let examples = data
        .iter()
        .map(|i| bertgt_core::model::prepare(i, &vocab, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let batch: Vec<_> = examples.iter().collect();
    let report = grad_check_batch(&params, &cfg, &batch, args.step.unwrap_or(1e-5))?;
    if report.max_relative_error >= tolerance {
        return Err(Error::Evaluation(format!(
            "gradient check failed: max relative error {} at tensor {} coordinate {} (tolerance {tolerance})",
            report.max_relative_error, report.worst.0, report.worst.1
        )));
    }
    Ok(json!({
        "max_relative_error": report.max_relative_error,
        "coordinates": report.coordinates,
        "tolerance": tolerance,
    }))
}
