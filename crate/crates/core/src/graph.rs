//! Directed citation graph over corpus ordinals.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::store::{self, Reader, Writer, KIND_GRAPH};

/// Forward (`out_adj`) and reverse (`in_adj`) adjacency, both sorted and
/// duplicate-free, without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CitationGraph {
    out_adj: Vec<Vec<u32>>,
    in_adj: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLoadStats {
    pub rows: usize,
    pub malformed: usize,
    pub dangling: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    pub edges: usize,
}

impl CitationGraph {
    /// Builds a graph from `(citing, cited)` pairs, silently dropping
    /// self-loops and duplicates. Panics on out-of-range ordinals.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        Self::from_edges_counted(n, edges).0
    }

    fn from_edges_counted(
        n: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> (Self, usize, usize) {
        let mut out_adj = vec![Vec::new(); n];
        let mut self_loops = 0;
        for (u, v) in edges {
            assert!((u as usize) < n && (v as usize) < n, "edge ({u},{v}) out of range");
            if u == v {
                self_loops += 1;
                continue;
            }
            out_adj[u as usize].push(v);
        }
        let mut duplicates = 0;
        for adj in &mut out_adj {
            adj.sort_unstable();
            let before = adj.len();
            adj.dedup();
            duplicates += before - adj.len();
        }
        let mut in_adj = vec![Vec::new(); n];
        for (u, adj) in out_adj.iter().enumerate() {
            for &v in adj {
                in_adj[v as usize].push(u as u32);
            }
        }
        // u ascends in the loop above, so in_adj is already sorted.
        (CitationGraph { out_adj, in_adj }, self_loops, duplicates)
    }

    pub fn num_nodes(&self) -> usize {
        self.out_adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out_adj.iter().map(Vec::len).sum()
    }

    pub fn out_adj(&self, u: u32) -> &[u32] {
        &self.out_adj[u as usize]
    }

    pub fn in_adj(&self, v: u32) -> &[u32] {
        &self.in_adj[v as usize]
    }

    pub fn cites(&self, u: u32, v: u32) -> bool {
        self.out_adj[u as usize].binary_search(&v).is_ok()
    }

    pub fn degree(&self, u: u32) -> usize {
        self.out_adj[u as usize].len() + self.in_adj[u as usize].len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.out_adj
            .iter()
            .enumerate()
            .flat_map(|(u, adj)| adj.iter().map(move |&v| (u as u32, v)))
    }

    /// Graph with every edge reversed.
    pub fn transposed(&self) -> Self {
        CitationGraph {
            out_adj: self.in_adj.clone(),
            in_adj: self.out_adj.clone(),
        }
    }

    /// Undirected neighbours (citing or cited), sorted and deduplicated.
    pub fn neighbors(&self, u: u32) -> Vec<u32> {
        let mut v: Vec<u32> = self.out_adj[u as usize]
            .iter()
            .chain(&self.in_adj[u as usize])
            .copied()
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND_GRAPH);
        w.u64(self.num_nodes() as u64);
        w.u64(self.num_edges() as u64);
        for (u, v) in self.edges() {
            w.u32(u);
            w.u32(v);
        }
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = store::read_file(path)?;
        let mut r = Reader::open(&bytes, KIND_GRAPH)?;
        let n = r.u64()? as usize;
        let m = r.u64()? as usize;
        let mut edges = Vec::with_capacity(m.min(1 << 24));
        for _ in 0..m {
            let u = r.u32()?;
            let v = r.u32()?;
            if u as usize >= n || v as usize >= n {
                return Err(Error::Corrupt(format!("edge ({u},{v}) outside {n} nodes")));
            }
            edges.push((u, v));
        }
        r.finish()?;
        Ok(Self::from_edges(n, edges))
    }
}

/// Reads a two-column (citing id, cited id) edge file, tab- or
/// whitespace-separated, and resolves ids against `corpus`.
pub fn build_graph(corpus: &Corpus, edges_path: &Path) -> Result<(CitationGraph, EdgeLoadStats)> {
    let file = File::open(edges_path).map_err(|e| Error::io(edges_path, e))?;
    build_graph_from_reader(corpus, BufReader::new(file))
        .map_err(|e| match e {
            Error::Io { source, .. } => Error::io(edges_path, source),
            other => other,
        })
}

pub fn build_graph_from_reader<R: BufRead>(
    corpus: &Corpus,
    reader: R,
) -> Result<(CitationGraph, EdgeLoadStats)> {
    let mut stats = EdgeLoadStats::default();
    let mut edges = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<edges>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        stats.rows += 1;
        let cols: Vec<&str> = if trimmed.contains('\t') {
            trimmed.split('\t').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        if cols.len() != 2 || cols[0].is_empty() || cols[1].is_empty() {
            stats.malformed += 1;
            continue;
        }
        match (corpus.ordinal(cols[0]), corpus.ordinal(cols[1])) {
            (Some(u), Some(v)) => edges.push((u, v)),
            _ => stats.dangling += 1,
        }
    }
    let (graph, self_loops, duplicates) = CitationGraph::from_edges_counted(corpus.len(), edges);
    stats.self_loops = self_loops;
    stats.duplicates = duplicates;
    stats.edges = graph.num_edges();
    Ok((graph, stats))
}
