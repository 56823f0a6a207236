use std::collections::BTreeMap;

use super::depgraph::DepGraph;
use super::instance::{RelationInstance, Span};
use crate::attention::NeighborMask;
use crate::error::{Error, Result};

/// Per-token neighbor index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborGraph {
    sets: Vec<Vec<usize>>,
    cap: Option<usize>,
}

/// Priority class of a candidate neighbor; lower keeps first under a cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Rank {
    SelfLoop,
    Head,
    Previous,
    Next,
    Path { distance: usize },
}

impl NeighborGraph {
    pub fn from_sets(sets: Vec<Vec<usize>>, cap: Option<usize>) -> Result<Self> {
        let n = sets.len();
        let mut sets = sets;
        for (i, set) in sets.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.binary_search(&i).is_err() {
                return Err(Error::Graph(format!("token {i} is missing from its own neighbor set")));
            }
            if let Some(&bad) = set.iter().find(|&&j| j >= n) {
                return Err(Error::Index {
                    what: "neighbor index",
                    index: bad,
                    len: n,
                });
            }
            if cap.is_some_and(|c| set.len() > c) {
                return Err(Error::Graph(format!("token {i} exceeds the neighbor cap")));
            }
        }
        Ok(Self { sets, cap })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn max_set_size(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Prepends a `[CLS]` position at index 0. It sees itself and the first
    /// token; no token gains `[CLS]` as a neighbor.
    pub fn with_cls_prefix(&self) -> NeighborGraph {
        let mut sets = Vec::with_capacity(self.len() + 1);
        let cls: Vec<usize> = if self.is_empty() { vec![0] } else { vec![0, 1] };
        sets.push(match self.cap {
            Some(c) => cls.into_iter().take(c).collect(),
            None => cls,
        });
        sets.extend(self.sets.iter().map(|s| s.iter().map(|j| j + 1).collect()));
        NeighborGraph { sets, cap: self.cap }
    }

    pub fn to_mask(&self) -> Result<NeighborMask> {
        NeighborMask::from_sets(&self.sets)
    }
}

/// Token spans of a mention as an index range.
fn tokens_of(span: &Span) -> std::ops::Range<usize> {
    span[0]..span[1]
}

/// Shortest path between two mentions: minimum over token pairs, ties broken
/// by the lexicographically smallest sequence.
fn mention_path(graph: &DepGraph, a: &Span, b: &Span) -> Result<Vec<usize>> {
    let mut best: Option<Vec<usize>> = None;
    for s in tokens_of(a) {
        for t in tokens_of(b) {
            let p = graph.shortest_path(s, t)?;
            let better = match &best {
                None => true,
                Some(q) => (p.len(), &p) < (q.len(), q),
            };
            if better {
                best = Some(p);
            }
        }
    }
    Ok(best.unwrap_or_default())
}

/// Builds neighbor sets: self, head, adjacent tokens, and for entity-mention
/// tokens every token on the shortest path to each mention of every other
/// entity. Sets larger than `max_neighbors` keep the highest-priority members.
pub fn build_neighbors(inst: &RelationInstance, max_neighbors: Option<usize>) -> Result<NeighborGraph> {
    if max_neighbors == Some(0) {
        return Err(Error::Config("max_neighbors must be positive".into()));
    }
    let heads = inst.heads();
    let graph = DepGraph::from_heads(&heads)?;
    let n = graph.len();

    let mut candidates: Vec<BTreeMap<usize, Rank>> = vec![BTreeMap::new(); n];
    let mut offer = |i: usize, j: usize, rank: Rank| {
        candidates[i]
            .entry(j)
            .and_modify(|r| *r = (*r).min(rank))
            .or_insert(rank);
    };
    for i in 0..n {
        offer(i, i, Rank::SelfLoop);
        offer(i, graph.head(i), Rank::Head);
        if i > 0 {
            offer(i, i - 1, Rank::Previous);
        }
        if i + 1 < n {
            offer(i, i + 1, Rank::Next);
        }
    }

    for (e, entity) in inst.entities.iter().enumerate() {
        for m in &entity.mentions {
            let mut path_tokens = Vec::new();
            for (f, other) in inst.entities.iter().enumerate() {
                if e == f {
                    continue;
                }
                for o in &other.mentions {
                    path_tokens.extend(mention_path(&graph, m, o)?);
                }
            }
            path_tokens.sort_unstable();
            path_tokens.dedup();
            for t in tokens_of(m) {
                let dist = graph.distances_from(t);
                for &p in &path_tokens {
                    let distance = dist[p].expect("linked graph is connected");
                    offer(t, p, Rank::Path { distance });
                }
            }
        }
    }

    let sets = candidates
        .into_iter()
        .map(|cands| {
            let mut ranked: Vec<(Rank, usize)> = cands.into_iter().map(|(j, r)| (r, j)).collect();
            ranked.sort_unstable();
            if let Some(c) = max_neighbors {
                ranked.truncate(c);
            }
            let mut set: Vec<usize> = ranked.into_iter().map(|(_, j)| j).collect();
            set.sort_unstable();
            set
        })
        .collect();
    Ok(NeighborGraph {
        sets,
        cap: max_neighbors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{chain_instance, random_instance};
    use crate::numerics::rng::seeded;
    use rand::Rng;

    #[test]
    fn single_token_sees_only_itself() {
        let mut inst = chain_instance();
        inst.tokens.truncate(1);
        inst.dep_head = vec![super::super::DepArc { head: 0, label: "root".into() }];
        inst.entities.clear();
        let g = build_neighbors(&inst, None).unwrap();
        assert_eq!(g.sets(), &[vec![0]]);
    }

    #[test]
    fn hand_worked_chain() {
        // a→b, b→c, c root, d→c; entities at a and d
        let inst = chain_instance();
        let g = build_neighbors(&inst, None).unwrap();
        assert_eq!(g.neighbors(1), &[0, 1, 2]);
        assert_eq!(g.neighbors(2), &[1, 2, 3]);
        // a: self, head b, next b, path b, c, d
        assert_eq!(g.neighbors(0), &[0, 1, 2, 3]);
        assert_eq!(g.neighbors(3), &[0, 1, 2, 3]);

        let mut plain = inst.clone();
        plain.entities.truncate(1);
        let g = build_neighbors(&plain, None).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(3), &[2, 3]);
    }

    #[test]
    fn cap_keeps_self_and_head_first() {
        let inst = chain_instance();
        let g = build_neighbors(&inst, Some(2)).unwrap();
        // token 3: self, head 2
        assert_eq!(g.neighbors(3), &[2, 3]);
        // token 0: self, head 1
        assert_eq!(g.neighbors(0), &[0, 1]);
        let g = build_neighbors(&inst, Some(3)).unwrap();
        // token 0 next: i+1 = 1 (already head), then path by distance: 2 then 3
        assert_eq!(g.neighbors(0), &[0, 1, 2]);
        assert!(build_neighbors(&inst, Some(0)).is_err());
    }

    #[test]
    fn cyclic_heads_are_a_graph_error() {
        let mut inst = chain_instance();
        inst.dep_head[2].head = 0;
        assert!(matches!(build_neighbors(&inst, None), Err(Error::Graph(_))));
    }

    #[test]
    fn cls_prefix_shifts_sets() {
        let g = build_neighbors(&chain_instance(), None).unwrap().with_cls_prefix();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(2), &[1, 2, 3]);
        assert_eq!(g.len(), 5);
        assert!(g.to_mask().unwrap().allows(0, 1));
        assert!(!g.to_mask().unwrap().allows(1, 0));
    }

    /// Direct restatement of the rule with brute-force path search.
    fn oracle(inst: &RelationInstance) -> Vec<Vec<usize>> {
        let heads = inst.heads();
        let n = heads.len();
        let g = DepGraph::from_heads(&heads).unwrap();
        let mut sets: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut s = vec![i, heads[i]];
                if i > 0 {
                    s.push(i - 1);
                }
                if i + 1 < n {
                    s.push(i + 1);
                }
                s
            })
            .collect();
        for e in &inst.entities {
            for f in &inst.entities {
                if e.eid == f.eid {
                    continue;
                }
                for m in &e.mentions {
                    for o in &f.mentions {
                        let mut all = Vec::new();
                        for s in m[0]..m[1] {
                            for t in o[0]..o[1] {
                                all.push(g.shortest_path(s, t).unwrap());
                            }
                        }
                        let best = all.iter().min_by(|a, b| (a.len(), *a).cmp(&(b.len(), *b))).unwrap();
                        for t in m[0]..m[1] {
                            sets[t].extend(best.iter().copied());
                        }
                    }
                }
            }
        }
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        sets
    }

    #[test]
    fn uncapped_sets_match_oracle() {
        let mut rng = seeded(41);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            let g = build_neighbors(&inst, None).unwrap();
            assert_eq!(g.sets(), oracle(&inst).as_slice(), "{}", inst.id);
        }
    }

    #[test]
    fn order_independent_and_cap_respects_priority() {
        let mut rng = seeded(43);
        for _ in 0..100 {
            let inst = random_instance(&mut rng);
            let mut reversed = inst.clone();
            reversed.entities.reverse();
            let cap = rng.random_range(1..6);
            assert_eq!(
                build_neighbors(&inst, Some(cap)).unwrap(),
                build_neighbors(&reversed, Some(cap)).unwrap()
            );
            let full = build_neighbors(&inst, None).unwrap();
            let capped = build_neighbors(&inst, Some(cap)).unwrap();
            for i in 0..inst.len() {
                let set = capped.neighbors(i);
                assert!(set.len() <= cap);
                assert!(set.contains(&i));
                if cap >= 2 {
                    assert!(set.contains(&inst.dep_head[i].head));
                }
                assert!(set.iter().all(|j| full.neighbors(i).contains(j)));
                assert_eq!(set.len(), full.neighbors(i).len().min(cap));
            }
        }
    }
}
