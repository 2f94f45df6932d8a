//! Knowledge graph store.
//!
//! The graph is loaded from two TSV files, validated, and frozen. Nodes are
//! kept sorted by id so that a node's dense index orders the same way as its
//! id; every downstream module relies on that to get deterministic output
//! without sorting strings over and over.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const NODES_HEADER: &str = "id\tlabel\taliases";
pub const EDGES_HEADER: &str = "src\tdst";

/// Opaque entity identifier, unique within a graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        EntityId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityNode {
    pub id: EntityId,
    pub label: String,
    pub aliases: Vec<String>,
}

/// Lowercase, NFC-normalize and collapse whitespace.
pub fn normalize_surface(s: &str) -> String {
    let composed: String = s.nfc().collect::<String>().to_lowercase();
    // lowercasing can in rare cases produce decomposed sequences
    let composed: String = composed.nfc().collect();
    composed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Counters for records the loader dropped instead of rejecting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicate_edges: usize,
    pub redundant_aliases: usize,
}

impl LoadReport {
    pub fn warnings(&self) -> usize {
        self.self_loops + self.duplicate_edges + self.redundant_aliases
    }
}

/// Undirected, unweighted entity graph. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    nodes: Vec<EntityNode>,
    index: HashMap<EntityId, usize>,
    adjacency: Vec<Vec<u32>>,
    edge_count: usize,
}

impl KnowledgeGraph {
    /// Builds a graph from in-memory records with the same validation as
    /// the TSV loader. Edge "line numbers" in errors are 1-based positions
    /// in `edges`.
    pub fn from_records(
        nodes: Vec<EntityNode>,
        edges: impl IntoIterator<Item = (EntityId, EntityId)>,
    ) -> Result<(Self, LoadReport)> {
        let mut report = LoadReport::default();
        let (nodes, index) = finish_nodes(nodes, &mut report)?;
        let mut builder = EdgeBuilder::new(nodes.len());
        for (line, (a, b)) in edges.into_iter().enumerate() {
            let ia = *index.get(&a).ok_or_else(|| Error::UnknownEndpoint {
                line: line + 1,
                id: a.0.clone(),
            })?;
            let ib = *index.get(&b).ok_or_else(|| Error::UnknownEndpoint {
                line: line + 1,
                id: b.0.clone(),
            })?;
            builder.add(ia, ib, &mut report);
        }
        Ok((builder.finish(nodes, index, &mut report), report))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> &[EntityNode] {
        &self.nodes
    }

    pub fn node(&self, id: &EntityId) -> Option<&EntityNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn index_of(&self, id: &EntityId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_at(&self, idx: usize) -> &EntityNode {
        &self.nodes[idx]
    }

    /// Neighbor indices of the node at `idx`, ascending.
    pub fn neighbor_indices(&self, idx: usize) -> &[u32] {
        &self.adjacency[idx]
    }

    pub fn has_edge_idx(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&(b as u32)).is_ok()
    }

    /// Neighbors of `id`, sorted by id.
    pub fn neighbors(&self, id: &EntityId) -> Result<Vec<&EntityId>> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownEntity(id.0.clone()))?;
        Ok(self.adjacency[idx]
            .iter()
            .map(|&j| &self.nodes[j as usize].id)
            .collect())
    }

    /// Edges as `(a, b)` index pairs with `a < b`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, adj)| {
            adj.iter()
                .map(|&b| b as usize)
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    /// Writes the graph in the same TSV layout [`load_kg`] reads.
    pub fn write_tsv(
        &self,
        nodes_out: &mut impl Write,
        edges_out: &mut impl Write,
    ) -> std::io::Result<()> {
        writeln!(nodes_out, "{NODES_HEADER}")?;
        for n in &self.nodes {
            writeln!(nodes_out, "{}\t{}\t{}", n.id, n.label, n.aliases.join("|"))?;
        }
        writeln!(edges_out, "{EDGES_HEADER}")?;
        for (a, b) in self.edges() {
            writeln!(edges_out, "{}\t{}", self.nodes[a].id, self.nodes[b].id)?;
        }
        Ok(())
    }

    /// SHA-256 over the canonical TSV serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        self.write_tsv(&mut nodes, &mut edges)
            .expect("writing to a Vec cannot fail");
        let mut h = Sha256::new();
        h.update(&nodes);
        h.update(b"\0");
        h.update(&edges);
        hex::encode(h.finalize())
    }
}

fn finish_nodes(
    mut nodes: Vec<EntityNode>,
    report: &mut LoadReport,
) -> Result<(Vec<EntityNode>, HashMap<EntityId, usize>)> {
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for w in nodes.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateEntity(w[0].id.0.clone()));
        }
    }
    for n in &mut nodes {
        let mut seen = BTreeSet::new();
        seen.insert(normalize_surface(&n.label));
        let before = n.aliases.len();
        n.aliases.retain(|a| {
            let norm = normalize_surface(a);
            !norm.is_empty() && seen.insert(norm)
        });
        report.redundant_aliases += before - n.aliases.len();
    }
    let index = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect();
    Ok((nodes, index))
}

struct EdgeBuilder {
    adjacency: Vec<Vec<u32>>,
}

impl EdgeBuilder {
    fn new(n: usize) -> Self {
        EdgeBuilder {
            adjacency: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, a: usize, b: usize, report: &mut LoadReport) {
        if a == b {
            report.self_loops += 1;
            return;
        }
        self.adjacency[a].push(b as u32);
        self.adjacency[b].push(a as u32);
    }

    fn finish(
        mut self,
        nodes: Vec<EntityNode>,
        index: HashMap<EntityId, usize>,
        report: &mut LoadReport,
    ) -> KnowledgeGraph {
        let mut before = 0;
        let mut twice = 0;
        for adj in &mut self.adjacency {
            before += adj.len();
            adj.sort_unstable();
            adj.dedup();
            twice += adj.len();
        }
        report.duplicate_edges += (before - twice) / 2;
        KnowledgeGraph {
            nodes,
            index,
            adjacency: self.adjacency,
            edge_count: twice / 2,
        }
    }
}

fn read_lines(
    reader: impl BufRead,
    source_name: &str,
    header: &str,
) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line).to_owned();
        if !saw_header {
            if line != header {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected header `{}`", header.replace('\t', "<TAB>")),
                ));
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        out.push((line_no, line));
    }
    if !saw_header {
        return Err(Error::parse(source_name, 1, "empty file, missing header"));
    }
    Ok(out)
}

/// Reads and validates a graph from node and edge TSV streams.
///
/// Self-loops, duplicate edges and aliases that repeat the label are
/// dropped and counted in the returned [`LoadReport`]. An edge naming an
/// unknown id is an error.
pub fn load_kg(
    nodes_src: impl BufRead,
    nodes_name: &str,
    edges_src: impl BufRead,
    edges_name: &str,
) -> Result<(KnowledgeGraph, LoadReport)> {
    let mut nodes = Vec::new();
    for (line_no, line) in read_lines(nodes_src, nodes_name, NODES_HEADER)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                nodes_name,
                line_no,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        let label = fields[1].trim();
        if id.is_empty() {
            return Err(Error::parse(nodes_name, line_no, "empty id"));
        }
        if label.is_empty() {
            return Err(Error::parse(nodes_name, line_no, "empty label"));
        }
        let aliases = fields[2]
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        nodes.push(EntityNode {
            id: EntityId::new(id),
            label: label.to_owned(),
            aliases,
        });
    }

    let mut report = LoadReport::default();
    let (nodes, index) = finish_nodes(nodes, &mut report)?;
    let mut builder = EdgeBuilder::new(nodes.len());
    for (line_no, line) in read_lines(edges_src, edges_name, EDGES_HEADER)? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                edges_name,
                line_no,
                format!("expected 2 tab-separated fields, found {}", fields.len()),
            ));
        }
        let lookup = |s: &str| {
            let s = s.trim();
            index.get(s).copied().ok_or_else(|| Error::UnknownEndpoint {
                line: line_no,
                id: s.to_owned(),
            })
        };
        let a = lookup(fields[0])?;
        let b = lookup(fields[1])?;
        builder.add(a, b, &mut report);
    }
    let kg = builder.finish(nodes, index, &mut report);
    if report.warnings() > 0 {
        log::warn!(
            "dropped {} self-loop(s), {} duplicate edge(s), {} redundant alias(es)",
            report.self_loops,
            report.duplicate_edges,
            report.redundant_aliases
        );
    }
    Ok((kg, report))
}

/// Opens and loads a graph from a pair of TSV files.
pub fn load_kg_files(nodes: &Path, edges: &Path) -> Result<(KnowledgeGraph, LoadReport)> {
    let open = |p: &Path| {
        std::fs::File::open(p)
            .map(std::io::BufReader::new)
            .map_err(|e| Error::io(p, e))
    };
    load_kg(
        open(nodes)?,
        &nodes.display().to_string(),
        open(edges)?,
        &edges.display().to_string(),
    )
}
