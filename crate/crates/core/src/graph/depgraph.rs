use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Undirected view of a dependency forest.
///
/// Each root (`head == self`) starts a sentence; sentences are numbered by
/// root position. With `link_roots`, consecutive roots are joined so the
/// whole instance becomes one tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepGraph {
    heads: Vec<usize>,
    roots: Vec<usize>,
    sentence_of: Vec<usize>,
    adjacency: Vec<Vec<usize>>,
}

impl DepGraph {
    pub fn from_heads(heads: &[usize]) -> Result<Self> {
        Self::build(heads, true)
    }

    pub fn from_heads_unlinked(heads: &[usize]) -> Result<Self> {
        Self::build(heads, false)
    }

    fn build(heads: &[usize], link_roots: bool) -> Result<Self> {
        let n = heads.len();
        for &h in heads {
            if h >= n {
                return Err(Error::Index {
                    what: "dependency head",
                    index: h,
                    len: n,
                });
            }
        }
        let roots: Vec<usize> = (0..n).filter(|&i| heads[i] == i).collect();
        if n > 0 && roots.is_empty() {
            return Err(Error::Graph("cyclic dependency heads with no root".into()));
        }
        let mut root_of = vec![usize::MAX; n];
        for start in 0..n {
            let mut trail = Vec::new();
            let mut cur = start;
            while root_of[cur] == usize::MAX && heads[cur] != cur {
                trail.push(cur);
                if trail.len() > n {
                    return Err(Error::Graph(format!("dependency cycle through token {start}")));
                }
                cur = heads[cur];
            }
            let root = if heads[cur] == cur { cur } else { root_of[cur] };
            root_of[cur] = root;
            for t in trail {
                root_of[t] = root;
            }
        }
        let sentence_of = root_of
            .iter()
            .map(|r| roots.binary_search(r).expect("root is listed"))
            .collect();

        let mut adjacency = vec![Vec::new(); n];
        let mut connect = |a: usize, b: usize| {
            adjacency[a].push(b);
            adjacency[b].push(a);
        };
        for (i, &h) in heads.iter().enumerate() {
            if h != i {
                connect(i, h);
            }
        }
        if link_roots {
            for w in roots.windows(2) {
                connect(w[0], w[1]);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            heads: heads.to_vec(),
            roots,
            sentence_of,
            adjacency,
        })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, i: usize) -> usize {
        self.heads[i]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn num_sentences(&self) -> usize {
        self.roots.len()
    }

    pub fn sentence_of(&self, i: usize) -> usize {
        self.sentence_of[i]
    }

    /// Sorted undirected neighbors of `i`.
    pub fn adjacency(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// BFS hop counts from `src`; `None` for unreachable tokens.
    pub fn distances_from(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            let mut comp: Vec<usize> = self
                .distances_from(s)
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.map(|_| i))
                .collect();
            comp.sort_unstable();
            for &i in &comp {
                seen[i] = true;
            }
            out.push(comp);
        }
        out
    }

    /// Shortest undirected path, endpoints included. Among equal-length
    /// paths the lexicographically smallest index sequence wins.
    pub fn shortest_path(&self, src: usize, dst: usize) -> Result<Vec<usize>> {
        for (what, i) in [("path source", src), ("path target", dst)] {
            if i >= self.len() {
                return Err(Error::Index {
                    what,
                    index: i,
                    len: self.len(),
                });
            }
        }
        let dist = self.distances_from(dst);
        let Some(mut remaining) = dist[src] else {
            return Err(Error::Path {
                src,
                dst,
                components: self.components(),
            });
        };
        let mut path = vec![src];
        let mut cur = src;
        while remaining > 0 {
            remaining -= 1;
            cur = *self.adjacency[cur]
                .iter()
                .find(|&&v| dist[v] == Some(remaining))
                .expect("a BFS predecessor exists");
            path.push(cur);
        }
        Ok(path)
    }
}

/// Convenience wrapper over [`DepGraph::shortest_path`] with linked roots.
pub fn shortest_path(heads: &[usize], src: usize, dst: usize) -> Result<Vec<usize>> {
    DepGraph::from_heads(heads)?.shortest_path(src, dst)
}
