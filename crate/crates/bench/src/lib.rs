//! Benchmark fixtures.

use bertgt_core::attention::{AttentionParams, NeighborMask};
use bertgt_core::graph::{build_neighbors, RelationInstance, Task};
use bertgt_core::harness::{generate_synthetic, SyntheticSpec};
use bertgt_core::model::{Example, Model, ModelConfig, Vocab};
use bertgt_core::numerics::rng::seeded;
use bertgt_core::Tensor;

/// Deterministic `rows × cols` input in [-1, 1].
pub fn input(rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data")
}

pub fn attention(hidden: usize, heads: usize) -> AttentionParams {
    AttentionParams::init(hidden, heads, 0.02, &mut seeded(0)).expect("hidden divisible by heads")
}

/// Neighbor mask of one synthetic instance padded or cut to `len` tokens:
/// the instance's own sets, tiled.
pub fn mask(len: usize) -> NeighborMask {
    let inst = &dataset(1)[0];
    let graph = build_neighbors(inst, None).expect("valid instance");
    let n = graph.len();
    let sets: Vec<Vec<usize>> = (0..len)
        .map(|i| {
            let base = i / n * n;
            graph.neighbors(i % n).iter().map(|&j| base + j).filter(|&j| j < len).collect()
        })
        .collect();
    NeighborMask::from_sets(&sets).expect("in-range sets")
}

pub fn dataset(n: usize) -> Vec<RelationInstance> {
    generate_synthetic(n.max(2), 7, &SyntheticSpec::default()).expect("default spec is valid")
}

/// Default-size model over the synthetic vocabulary with prepared examples.
pub fn model_and_examples(n: usize) -> (Model, Vec<Example>) {
    let data = dataset(n);
    let cfg = ModelConfig::for_task(Task::Nary2, &["DRUG", "MUTATION"]);
    let model = Model::new(cfg, Vocab::build(&data), 0).expect("valid config");
    let examples = data.iter().map(|i| model.prepare(i).expect("fits")).collect();
    (model, examples)
}
