//! Graph ingestion, random-walk corpora and walk co-occurrence counts.

mod cooc;
mod metadata;
mod walks;

pub use cooc::{build_cooccurrence, CooccurrenceStore};
pub use metadata::{load_metadata, MetadataMatrix};
pub use walks::{filter_walks, generate_walks, WalkCorpus};

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeType {
    User,
    Item,
}

/// Undirected simple graph over contiguous node ids `0..n`.
///
/// Edges are stored once as `(lo, hi)` with `lo < hi`; adjacency lists are
/// sorted so that walks are reproducible independent of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(u32, u32)>,
    adjacency: Vec<Vec<u32>>,
    node_type: Option<Vec<NodeType>>,
}

impl Graph {
    /// Builds a graph, dropping self-loops and collapsing duplicate or
    /// mirrored edges.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut canon: Vec<(u32, u32)> = Vec::new();
        for (s, t) in edges {
            if s as usize >= node_count || t as usize >= node_count {
                return Err(Error::Dimension(format!(
                    "edge ({s}, {t}) out of range for {node_count} nodes"
                )));
            }
            if s != t {
                canon.push((s.min(t), s.max(t)));
            }
        }
        canon.sort_unstable();
        canon.dedup();

        let mut adjacency = vec![Vec::new(); node_count];
        for &(s, t) in &canon {
            adjacency[s as usize].push(t);
            adjacency[t as usize].push(s);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            node_count,
            edges: canon,
            adjacency,
            node_type: None,
        })
    }

    pub fn with_node_types(mut self, types: Vec<NodeType>) -> Result<Self> {
        if types.len() != self.node_count {
            return Err(Error::Dimension(format!(
                "{} node types for {} nodes",
                types.len(),
                self.node_count
            )));
        }
        self.node_type = Some(types);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }

    pub fn has_edge(&self, s: u32, t: u32) -> bool {
        self.adjacency
            .get(s as usize)
            .is_some_and(|adj| adj.binary_search(&t).is_ok())
    }

    pub fn node_type(&self, node: u32) -> Option<NodeType> {
        self.node_type.as_ref().map(|t| t[node as usize])
    }

    pub fn node_types(&self) -> Option<&[NodeType]> {
        self.node_type.as_deref()
    }

    /// Returns a copy of this graph with `extra` edges added. Node types are
    /// kept.
    pub fn with_added_edges(&self, extra: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let g = Graph::new(self.node_count, self.edges.iter().copied().chain(extra))?;
        match &self.node_type {
            Some(t) => g.with_node_types(t.clone()),
            None => Ok(g),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeListOptions {
    /// Treat the first column as users and the second as items, each in its
    /// own id space. Users take node ids `0..n_users`, items follow.
    pub bipartite: bool,
    /// Collapse repeated edges silently. When false a repeated edge is an
    /// error.
    pub dedupe: bool,
}

impl Default for EdgeListOptions {
    fn default() -> Self {
        EdgeListOptions {
            bipartite: false,
            dedupe: true,
        }
    }
}

/// Reads a whitespace-separated edge list (`src dst [ignored...]`).
pub fn load_edge_list(path: &Path, options: EdgeListOptions) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next_id = |what: &str| -> Result<u32> {
            let field = fields
                .next()
                .ok_or_else(|| Error::parse(path, lineno + 1, format!("missing {what} id")))?;
            field
                .parse::<u32>()
                .map_err(|_| Error::parse(path, lineno + 1, format!("invalid {what} id {field:?}")))
        };
        let s = next_id("source")?;
        let t = next_id("target")?;
        pairs.push((s, t));
    }
    if pairs.is_empty() {
        return Err(Error::Empty(format!("no edges in {}", path.display())));
    }

    if !options.dedupe {
        let mut seen = HashMap::with_capacity(pairs.len());
        for (idx, &(s, t)) in pairs.iter().enumerate() {
            let key = if options.bipartite {
                (s, t)
            } else {
                (s.min(t), s.max(t))
            };
            if let Some(first) = seen.insert(key, idx) {
                return Err(Error::Config(format!(
                    "duplicate edge ({s}, {t}) (entries {} and {}) with dedupe disabled",
                    first + 1,
                    idx + 1
                )));
            }
        }
    }

    let graph = if options.bipartite {
        let n_users = pairs.iter().map(|p| p.0).max().unwrap_or(0) as usize + 1;
        let n_items = pairs.iter().map(|p| p.1).max().unwrap_or(0) as usize + 1;
        let offset = n_users as u32;
        let mut types = vec![NodeType::User; n_users];
        types.resize(n_users + n_items, NodeType::Item);
        Graph::new(
            n_users + n_items,
            pairs.into_iter().map(|(u, i)| (u, offset + i)),
        )?
        .with_node_types(types)?
    } else {
        let n = pairs.iter().map(|p| p.0.max(p.1)).max().unwrap_or(0) as usize + 1;
        Graph::new(n, pairs)?
    };
    log::info!(
        "loaded {}: {} nodes, {} edges",
        path.display(),
        graph.node_count(),
        graph.edge_count()
    );
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn self_loop_is_dropped() {
        let f = write_tmp("0\t0\n");
        let g = load_edge_list(f.path(), EdgeListOptions::default()).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 1);
    }

    #[test]
    fn mirrored_edges_collapse() {
        let f = write_tmp("0 1\n1 0\n");
        let g = load_edge_list(f.path(), EdgeListOptions::default()).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
    }

    #[test]
    fn third_column_ignored() {
        let f = write_tmp("0\t1\t5\n1\t2\t3\n");
        let g = load_edge_list(f.path(), EdgeListOptions::default()).unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("0 1\n\n1 x\n");
        match load_edge_list(f.path(), EdgeListOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_error() {
        let f = write_tmp("\n\n");
        assert!(matches!(
            load_edge_list(f.path(), EdgeListOptions::default()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn strict_mode_rejects_duplicates() {
        let f = write_tmp("0 1\n1 0\n");
        let opts = EdgeListOptions {
            dedupe: false,
            ..Default::default()
        };
        assert!(matches!(
            load_edge_list(f.path(), opts),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bipartite_offsets_items() {
        let f = write_tmp("0 0\n0 2\n1 2\n");
        let opts = EdgeListOptions {
            bipartite: true,
            ..Default::default()
        };
        let g = load_edge_list(f.path(), opts).unwrap();
        assert_eq!(g.node_count(), 5);
        // user 0 to item 0 is not a self-loop in a bipartite file
        assert!(g.has_edge(0, 2));
        assert!(g.has_edge(1, 4));
        assert_eq!(g.node_type(0), Some(NodeType::User));
        assert_eq!(g.node_type(2), Some(NodeType::Item));
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(Graph::new(2, [(0, 2)]).is_err());
    }
}
