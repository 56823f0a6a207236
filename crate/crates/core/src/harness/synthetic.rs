use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DepArc, DepGraph, Entity, RelationInstance, Task};
use crate::numerics::rng::{derived, streams, DetRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_sentences: usize,
    pub max_sentences: usize,
    pub min_sentence_len: usize,
    pub filler_words: usize,
    pub entity_words: usize,
    pub trigger: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            min_tokens: 10,
            max_tokens: 30,
            min_sentences: 2,
            max_sentences: 3,
            min_sentence_len: 3,
            filler_words: 40,
            entity_words: 5,
            trigger: "inhibits".into(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return fail("sentence count range is empty");
        }
        if self.min_sentence_len < 2 {
            return fail("sentences need at least 2 tokens");
        }
        if self.min_tokens > self.max_tokens || self.max_tokens < self.max_sentences * self.min_sentence_len {
            return fail("token range cannot fit the sentence layout");
        }
        if self.min_tokens < 7 {
            return fail("at least 7 tokens are needed to separate the trigger from both entities");
        }
        if self.filler_words == 0 || self.entity_words == 0 {
            return fail("word pools must be nonempty");
        }
        Ok(())
    }
}

/// Uniform labeled tree on `n` nodes from a random Prüfer sequence, rooted
/// at a random node; returns heads with the root pointing at itself.
fn random_tree(rng: &mut DetRng, n: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    if n >= 2 {
        let code: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
        let mut degree = vec![1usize; n];
        for &c in &code {
            degree[c] += 1;
        }
        for &c in &code {
            let leaf = (0..n).find(|&v| degree[v] == 1).expect("Prüfer decoding has a leaf");
            adj[leaf].push(c);
            adj[c].push(leaf);
            degree[leaf] -= 1;
            degree[c] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        adj[rest[0]].push(rest[1]);
        adj[rest[1]].push(rest[0]);
    }
    let root = rng.random_range(0..n);
    let mut heads = vec![usize::MAX; n];
    heads[root] = root;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if heads[v] == usize::MAX {
                heads[v] = u;
                queue.push_back(v);
            }
        }
    }
    heads
}

fn split_lengths(rng: &mut DetRng, total: usize, parts: usize, min: usize) -> Vec<usize> {
    let mut lens = vec![min; parts];
    for _ in 0..total - parts * min {
        lens[rng.random_range(0..parts)] += 1;
    }
    lens
}

struct Skeleton {
    heads: Vec<usize>,
    drug: usize,
    mutation: usize,
}

/// Positions where the trigger may go for each label.
fn trigger_slots(sk: &Skeleton) -> Result<(Vec<usize>, Vec<usize>)> {
    let path = DepGraph::from_heads(&sk.heads)?.shortest_path(sk.drug, sk.mutation)?;
    let interior = &path[1..path.len() - 1];
    let near = |t: usize| {
        [sk.drug, sk.mutation]
            .iter()
            .any(|&e| t == e || t.abs_diff(e) == 1)
    };
    let positive = interior.iter().copied().filter(|&t| !near(t)).collect();
    let negative = (0..sk.heads.len())
        .filter(|&t| !near(t) && !path.contains(&t) && t != sk.heads[sk.drug] && t != sk.heads[sk.mutation])
        .collect();
    Ok((positive, negative))
}

fn skeleton(rng: &mut DetRng, spec: &SyntheticSpec) -> Skeleton {
    let sentences = rng.random_range(spec.min_sentences..=spec.max_sentences);
    let low = spec.min_tokens.max(sentences * spec.min_sentence_len);
    let total = rng.random_range(low..=spec.max_tokens);
    let mut heads = Vec::with_capacity(total);
    for len in split_lengths(rng, total, sentences, spec.min_sentence_len) {
        let offset = heads.len();
        heads.extend(random_tree(rng, len).into_iter().map(|h| h + offset));
    }
    let drug = rng.random_range(0..total);
    let mut mutation = rng.random_range(0..total - 1);
    if mutation >= drug {
        mutation += 1;
    }
    Skeleton { heads, drug, mutation }
}

/// Whether the trigger lies strictly inside the dependency shortest path
/// between the two entity tokens.
pub fn synthetic_label(inst: &RelationInstance, trigger: &str) -> Result<bool> {
    let token = |eid: &str| -> Result<usize> {
        let e = inst
            .entity(eid)
            .ok_or_else(|| Error::Instance { id: inst.id.clone(), message: format!("missing entity {eid}") })?;
        Ok(e.mentions[0][0])
    };
    let path = DepGraph::from_heads(&inst.heads())?.shortest_path(token("DRUG")?, token("MUTATION")?)?;
    Ok(path[1..path.len() - 1].iter().any(|&t| inst.tokens[t] == trigger))
}

/// Balanced two-class dataset whose label depends only on dependency
/// structure: "yes" (even indices) iff the single trigger token is an
/// interior node of the DRUG–MUTATION path. The trigger is never
/// sequence-adjacent to an entity, and in negatives it is not an entity's
/// head, so neither surface position nor a single head edge gives it away.
pub fn generate_synthetic(n: usize, seed: u64, spec: &SyntheticSpec) -> Result<Vec<RelationInstance>> {
    if n < 2 {
        return Err(Error::Config("synthetic dataset needs at least 2 instances".into()));
    }
    spec.validate()?;
    let mut rng = derived(seed, &[streams::SYNTH]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let (sk, trigger) = loop {
            let sk = skeleton(&mut rng, spec);
            let (pos, neg) = trigger_slots(&sk)?;
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let t = *if positive { &pos } else { &neg }.choose(&mut rng).expect("nonempty");
            break (sk, t);
        };
        let drug_word = format!("drug{}", rng.random_range(0..spec.entity_words));
        let mutation_word = format!("mut{}", rng.random_range(0..spec.entity_words));
        let tokens: Vec<String> = (0..sk.heads.len())
            .map(|t| match t {
                t if t == sk.drug => drug_word.clone(),
                t if t == sk.mutation => mutation_word.clone(),
                t if t == trigger => spec.trigger.clone(),
                _ => format!("w{:02}", rng.random_range(0..spec.filler_words)),
            })
            .collect();
        let dep_head = sk
            .heads
            .iter()
            .enumerate()
            .map(|(t, &h)| DepArc { head: h, label: if h == t { "root" } else { "dep" }.into() })
            .collect();
        let entity = |eid: &str, at: usize, word: &str| Entity {
            eid: eid.into(),
            kb_ids: vec![format!("{eid}:{word}")],
            mentions: vec![[at, at + 1]],
            mention_kb_ids: None,
        };
        let inst = RelationInstance {
            id: format!("syn{i:05}"),
            tokens,
            dep_head,
            entities: vec![
                entity("DRUG", sk.drug, &drug_word),
                entity("MUTATION", sk.mutation, &mutation_word),
            ],
            label: if positive { "yes" } else { "no" }.into(),
            task: Task::Nary2,
            group: None,
        };
        debug_assert!(inst.validate().is_ok());
        out.push(inst);
    }
    Ok(out)
}
