//! Undirected, connected, unweighted graphs used both as agent communication
//! topologies and as the structure of an agent's local dataset.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on Erdős–Rényi rejection attempts for `random_connected`.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Path,
    Ring,
    Complete,
    RandomConnected { edge_prob: f64 },
}

impl Graph {
    /// Builds a graph on `n` nodes from an edge list. Duplicate edges (in either
    /// orientation) collapse; self-loops and disconnected inputs are rejected.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges)?;
        let components = g.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(g)
    }

    fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("graph needs at least one node".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!("edge ({u}, {v}) out of range for {n} nodes")));
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn total_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.total_degree() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
            .collect()
    }

    /// Number of connected components, by union-find.
    pub fn component_count(&self) -> usize {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = n;
        for (u, v) in self.edges() {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru] = rv;
                components -= 1;
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Two-colourability; a connected graph's simple random walk is periodic iff bipartite.
    pub fn is_bipartite(&self) -> bool {
        let n = self.num_nodes();
        let mut color = vec![u8::MAX; n];
        let mut stack = Vec::new();
        for s in 0..n {
            if color[s] != u8::MAX {
                continue;
            }
            color[s] = 0;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        stack.push(v);
                    } else if color[v] == color[u] {
                        return false;
                    }
                }
            }
        }
        true
    }

    pub fn generate(kind: GraphKind, n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("graph generator needs n >= 2, got {n}")));
        }
        match kind {
            GraphKind::Path => Self::path(n),
            GraphKind::Ring => Self::ring(n),
            GraphKind::Complete => Self::complete(n),
            GraphKind::RandomConnected { edge_prob } => Self::random_connected(n, edge_prob, seed),
        }
    }

    pub fn path(n: usize) -> Result<Self> {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn ring(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).filter(|(u, v)| u != v).collect();
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::from_edges(n, &edges)
    }

    /// Erdős–Rényi `G(n, p)` conditioned on connectivity by rejection.
    pub fn random_connected(n: usize, edge_prob: f64, seed: u64) -> Result<Self> {
        if !(edge_prob > 0.0 && edge_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!("edge_prob must lie in (0, 1], got {edge_prob}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_GENERATION_ATTEMPTS {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < edge_prob {
                        edges.push((u, v));
                    }
                }
            }
            let g = Self::from_edges_unchecked(n, &edges)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::GenerationFailed(MAX_GENERATION_ATTEMPTS))
    }
}

/// Parses whitespace-separated `u v` pairs, one per line. Blank lines and lines
/// starting with `#` are skipped.
pub fn load_edge_list(text: &str) -> Result<Graph> {
    load_edge_list_with_mapping(text).map(|(g, _)| g)
}

/// Like [`load_edge_list`], also returning the original id of each dense node index.
/// Ids that leave gaps are compacted in increasing order.
pub fn load_edge_list_with_mapping(text: &str) -> Result<(Graph, Vec<usize>)> {
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
        let mut it = line.split_whitespace();
        let mut next_id = || -> Result<usize> {
            let tok = it.next().ok_or_else(|| parse_err("expected two node ids".into()))?;
            tok.parse::<usize>().map_err(|e| parse_err(format!("bad node id {tok:?}: {e}")))
        };
        let u = next_id()?;
        let v = next_id()?;
        if it.next().is_some() {
            return Err(parse_err("trailing tokens after edge".into()));
        }
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        raw.push((u, v));
    }
    if raw.is_empty() {
        return Err(Error::Parse { line: 0, message: "edge list is empty".into() });
    }
    let mut ids = BTreeMap::new();
    for &(u, v) in &raw {
        ids.insert(u, 0);
        ids.insert(v, 0);
    }
    let original: Vec<usize> = ids.keys().copied().collect();
    for (dense, orig) in original.iter().enumerate() {
        ids.insert(*orig, dense);
    }
    let edges: Vec<_> = raw.iter().map(|(u, v)| (ids[u], ids[v])).collect();
    let g = Graph::from_edges(original.len(), &edges)?;
    Ok((g, original))
}
