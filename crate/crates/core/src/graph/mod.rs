//! Relation instances, dependency graphs and neighbor-set construction.

mod dataset;
mod depgraph;
mod expand;
mod instance;
pub mod nary_import;
mod neighbors;

pub use dataset::{
    load_dataset, load_dataset_versioned, parse_dataset, save_dataset, save_processed, write_dataset,
    ProcessedRecord, SCHEMA_VERSION,
};
pub use depgraph::{shortest_path, DepGraph};
pub use expand::expand_entities;
pub use instance::{
    collapse_to_binary, DepArc, Entity, RelationInstance, Span, Task, BINARY_LABELS, NARY_LABELS,
};
pub use neighbors::{build_neighbors, NeighborGraph};

#[cfg(test)]
pub(crate) mod fixtures {
    use rand::Rng;

    use super::*;

    fn arcs(heads: &[usize]) -> Vec<DepArc> {
        heads
            .iter()
            .enumerate()
            .map(|(i, &h)| DepArc {
                head: h,
                label: if h == i { "root".into() } else { "dep".into() },
            })
            .collect()
    }

    fn entity(eid: &str, mentions: Vec<Span>) -> Entity {
        Entity {
            eid: eid.into(),
            kb_ids: vec![],
            mentions,
            mention_kb_ids: None,
        }
    }

    /// Tokens a b c d with heads a→b, b→c, d→c; entities at a and d.
    pub fn chain_instance() -> RelationInstance {
        RelationInstance {
            id: "x".into(),
            tokens: ["a", "b", "c", "d"].map(String::from).to_vec(),
            dep_head: arcs(&[1, 2, 2, 2]),
            entities: vec![entity("DRUG", vec![[0, 1]]), entity("GENE", vec![[3, 4]])],
            label: "sensitivity".into(),
            task: Task::Nary5,
            group: None,
        }
    }

    pub fn random_tree(rng: &mut impl Rng, n: usize, offset: usize) -> Vec<usize> {
        let root = rng.random_range(0..n);
        let mut heads = vec![root + offset; n];
        let mut placed = vec![root];
        let mut rest: Vec<usize> = (0..n).filter(|&i| i != root).collect();
        for i in (1..rest.len()).rev() {
            rest.swap(i, rng.random_range(0..=i));
        }
        for t in rest {
            heads[t] = placed[rng.random_range(0..placed.len())] + offset;
            placed.push(t);
        }
        heads
    }

    /// 1–3 sentences, 2–3 entities with 1–2 mentions of 1–2 tokens each.
    pub fn random_instance(rng: &mut impl Rng) -> RelationInstance {
        let mut heads = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let n = rng.random_range(2..=8);
            let offset = heads.len();
            heads.extend(random_tree(rng, n, offset));
        }
        let n = heads.len();
        let mut free = vec![true; n];
        let mut entities = Vec::new();
        for (k, eid) in ["DRUG", "GENE", "MUTATION"].iter().enumerate() {
            if k == 2 && rng.random_bool(0.5) {
                break;
            }
            let mut mentions: Vec<Span> = Vec::new();
            for _ in 0..rng.random_range(1..=2) {
                for _ in 0..20 {
                    let len = rng.random_range(1..=2);
                    let start = rng.random_range(0..n);
                    let end = (start + len).min(n);
                    if free[start..end].iter().all(|&f| f) {
                        free[start..end].iter_mut().for_each(|f| *f = false);
                        mentions.push([start, end]);
                        break;
                    }
                }
            }
            if mentions.is_empty() {
                continue;
            }
            mentions.sort_unstable();
            entities.push(entity(eid, mentions));
        }
        let id = format!("r{}", rng.random::<u32>());
        let label = NARY_LABELS[rng.random_range(0..NARY_LABELS.len())].to_string();
        let inst = RelationInstance {
            id,
            tokens: (0..n).map(|i| format!("w{i}")).collect(),
            dep_head: arcs(&heads),
            entities,
            label,
            task: Task::Nary5,
            group: None,
        };
        inst.validate().expect("fixture is valid");
        inst
    }
}
