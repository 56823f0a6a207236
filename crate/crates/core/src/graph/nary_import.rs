//! Adapter for the graph-JSON layout used by the public drug–gene–mutation
//! release: a list of instances, each with per-sentence `nodes` carrying
//! typed `arcs`, an `entities` list of token indices, and a `relationLabel`.
//!
//! Only `deparc:*` arcs are used. Arc direction conventions vary across
//! releases, so each sentence's arcs are treated as undirected and oriented
//! by a BFS from the first node of each component; extra edges are dropped.

use std::collections::VecDeque;

use serde::Deserialize;

use super::instance::{DepArc, Entity, RelationInstance, Task};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct RawInstance {
    #[serde(default)]
    article: Option<String>,
    #[serde(rename = "relationLabel")]
    relation_label: String,
    sentences: Vec<RawSentence>,
    entities: Vec<RawEntity>,
}

#[derive(Debug, Deserialize)]
struct RawSentence {
    nodes: Vec<RawNode>,
}

#[derive(Debug, Deserialize)]
struct RawNode {
    index: usize,
    label: String,
    #[serde(default)]
    arcs: Vec<RawArc>,
}

#[derive(Debug, Deserialize)]
struct RawArc {
    #[serde(rename = "toIndex")]
    to_index: usize,
    label: String,
}

#[derive(Debug, Deserialize)]
struct RawEntity {
    #[serde(rename = "type")]
    kind: String,
    indices: Vec<usize>,
}

/// Parses a JSON array in the graph layout into instances.
pub fn import_nary_json(text: &str, id_prefix: &str) -> Result<Vec<RelationInstance>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: Vec<RawInstance> = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        line: 0,
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(k, r)| convert(r, &format!("{id_prefix}{k}")))
        .collect()
}

fn convert(raw: RawInstance, id: &str) -> Result<RelationInstance> {
    let bad = |message: String| Error::Instance {
        id: id.to_string(),
        message,
    };
    let mut tokens = Vec::new();
    let mut dep_head = Vec::new();
    for sentence in &raw.sentences {
        let offset = tokens.len();
        let n = sentence.nodes.len();
        let mut adjacency: Vec<Vec<(usize, String)>> = vec![Vec::new(); n];
        for (local, node) in sentence.nodes.iter().enumerate() {
            if node.index != offset + local {
                return Err(bad(format!("node index {} out of sequence", node.index)));
            }
            tokens.push(node.label.clone());
            for arc in &node.arcs {
                let Some(rel) = arc.label.strip_prefix("deparc:") else {
                    continue;
                };
                let Some(to) = arc.to_index.checked_sub(offset).filter(|&t| t < n) else {
                    continue;
                };
                adjacency[local].push((to, rel.to_string()));
                adjacency[to].push((local, rel.to_string()));
            }
        }
        let mut heads: Vec<Option<(usize, String)>> = vec![None; n];
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            // each component is rooted at its first node
            seen[start] = true;
            heads[start] = Some((start, "root".to_string()));
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for (v, rel) in &adjacency[u] {
                    if !seen[*v] {
                        seen[*v] = true;
                        heads[*v] = Some((u, rel.clone()));
                        queue.push_back(*v);
                    }
                }
            }
        }
        for (h, label) in heads.into_iter().flatten() {
            dep_head.push(DepArc {
                head: h + offset,
                label,
            });
        }
    }

    let mut entities = Vec::new();
    for e in &raw.entities {
        let mut idx = e.indices.clone();
        idx.sort_unstable();
        idx.dedup();
        let mut mentions: Vec<[usize; 2]> = Vec::new();
        for i in idx {
            match mentions.last_mut() {
                Some(last) if last[1] == i => last[1] = i + 1,
                _ => mentions.push([i, i + 1]),
            }
        }
        entities.push(Entity {
            eid: e.kind.to_uppercase(),
            kb_ids: Vec::new(),
            mentions,
            mention_kb_ids: None,
        });
    }
    let inst = RelationInstance {
        id: raw.article.map_or_else(|| id.to_string(), |a| format!("{id}:{a}")),
        tokens,
        dep_head,
        entities,
        label: raw.relation_label,
        task: Task::Nary5,
        group: None,
    };
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_neighbors;

    const SAMPLE: &str = r#"[{
        "article": "PMC1",
        "relationLabel": "resistance",
        "sentences": [
            {"nodes": [
                {"index": 0, "label": "EGFR", "arcs": [{"toIndex": 1, "label": "deparc:nsubj"}, {"toIndex": 1, "label": "adjtok:next"}]},
                {"index": 1, "label": "confers", "arcs": []},
                {"index": 2, "label": "resistance", "arcs": [{"toIndex": 1, "label": "deparc:dobj"}]}
            ]},
            {"nodes": [
                {"index": 3, "label": "gefitinib", "arcs": []},
                {"index": 4, "label": "fails", "arcs": [{"toIndex": 3, "label": "deparc:nsubj"}]}
            ]}
        ],
        "entities": [
            {"type": "gene", "indices": [0]},
            {"type": "drug", "indices": [3]}
        ]
    }]"#;

    #[test]
    fn imports_sample() {
        let out = import_nary_json(SAMPLE, "n").unwrap();
        assert_eq!(out.len(), 1);
        let inst = &out[0];
        assert_eq!(inst.tokens.len(), 5);
        assert_eq!(inst.heads(), vec![0, 0, 1, 3, 3]);
        assert_eq!(inst.entities[1].eid, "DRUG");
        assert_eq!(inst.entities[1].mentions, vec![[3, 4]]);
        build_neighbors(inst, None).unwrap();
    }

    #[test]
    fn malformed_input_names_the_field() {
        let err = import_nary_json(r#"[{"sentences": [], "entities": []}]"#, "n").unwrap_err();
        assert!(err.to_string().contains("relationLabel"), "{err}");
    }
}
