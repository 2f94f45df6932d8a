//! Per-document context graph: the candidates of every mention, the KG nodes
//! joining them within a hop budget, and the weights the solver needs.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSet;
use crate::embeddings::{cosine, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kg::{normalize_surface, EntityId, KnowledgeGraph};
use crate::similarity::jaro_winkler;

pub const DEFAULT_MAX_HOPS: usize = 3;

/// Candidates of one mention; a tree covers the mention by containing any one of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalGroup {
    pub mention_id: String,
    /// Sorted, non-empty.
    pub terminals: Vec<EntityId>,
    pub singleton_exact: bool,
}

impl TerminalGroup {
    pub fn new(
        mention_id: impl Into<String>,
        terminals: impl IntoIterator<Item = EntityId>,
    ) -> Self {
        let terminals: BTreeSet<EntityId> = terminals.into_iter().collect();
        TerminalGroup {
            mention_id: mention_id.into(),
            terminals: terminals.into_iter().collect(),
            singleton_exact: false,
        }
    }

    pub fn contains(&self, e: &EntityId) -> bool {
        self.terminals.binary_search(e).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextEdge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

/// Weighted graph handed to the solver. Node indices follow id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGraph {
    nodes: Vec<EntityId>,
    edges: Vec<ContextEdge>,
    node_weight: Vec<f64>,
    groups: Vec<TerminalGroup>,
}

impl ContextGraph {
    /// Assembles a graph from explicit parts. Node weights default to 0
    /// when absent from `node_weight`.
    pub fn new(
        nodes: impl IntoIterator<Item = EntityId>,
        edges: impl IntoIterator<Item = (EntityId, EntityId, f64)>,
        node_weight: &HashMap<EntityId, f64>,
        groups: Vec<TerminalGroup>,
    ) -> Result<Self> {
        let nodes: Vec<EntityId> = nodes
            .into_iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let find = |id: &EntityId| {
            nodes
                .binary_search(id)
                .map_err(|_| Error::UnknownEntity(id.to_string()))
        };
        let mut seen = BTreeSet::new();
        let mut out_edges = Vec::new();
        for (x, y, cost) in edges {
            let (a, b) = (find(&x)?, find(&y)?);
            if a == b {
                return Err(Error::Solver(format!("self-loop on `{x}`")));
            }
            let (a, b) = (a.min(b), a.max(b));
            if seen.insert((a, b)) {
                out_edges.push(ContextEdge { a, b, cost });
            }
        }
        out_edges.sort_by_key(|e| (e.a, e.b));
        for g in &groups {
            for t in &g.terminals {
                find(t)?;
            }
        }
        let node_weight = nodes
            .iter()
            .map(|id| node_weight.get(id).copied().unwrap_or(0.0))
            .collect();
        Ok(ContextGraph {
            nodes,
            edges: out_edges,
            node_weight,
            groups,
        })
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    pub fn edges(&self) -> &[ContextEdge] {
        &self.edges
    }

    pub fn groups(&self) -> &[TerminalGroup] {
        &self.groups
    }

    pub fn index_of(&self, id: &EntityId) -> Option<usize> {
        self.nodes.binary_search(id).ok()
    }

    pub fn node_weight(&self, id: &EntityId) -> f64 {
        self.index_of(id).map_or(0.0, |i| self.node_weight[i])
    }

    pub fn node_weight_at(&self, idx: usize) -> f64 {
        self.node_weight[idx]
    }

    pub fn edge_cost(&self, a: &EntityId, b: &EntityId) -> Option<f64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by_key(&key, |e| (e.a, e.b))
            .ok()
            .map(|p| self.edges[p].cost)
    }

    /// Plain-text dump: one `node`, `edge` or `group` record per line.
    pub fn write_debug(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (id, w) in self.nodes.iter().zip(&self.node_weight) {
            writeln!(out, "node\t{id}\t{w:.6}")?;
        }
        for e in &self.edges {
            writeln!(
                out,
                "edge\t{}\t{}\t{:.6}",
                self.nodes[e.a], self.nodes[e.b], e.cost
            )?;
        }
        for (i, g) in self.groups.iter().enumerate() {
            let terms: Vec<&str> = g.terminals.iter().map(EntityId::as_str).collect();
            writeln!(
                out,
                "group\t{i}\t{}\t{}\t{}",
                g.mention_id,
                if g.singleton_exact { "exact" } else { "fuzzy" },
                terms.join(",")
            )?;
        }
        Ok(())
    }
}

/// Unweighted result of subgraph induction.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// KG indices of included nodes, ascending.
    pub nodes: Vec<usize>,
    /// Pairs of KG indices, `a < b`, ascending.
    pub edges: Vec<(usize, usize)>,
    pub groups: Vec<TerminalGroup>,
}

impl Skeleton {
    pub fn node_ids<'a>(
        &'a self,
        kg: &'a KnowledgeGraph,
    ) -> impl Iterator<Item = &'a EntityId> + 'a {
        self.nodes.iter().map(move |&i| &kg.node_at(i).id)
    }
}

fn bfs(kg: &KnowledgeGraph, source: usize, max_hops: usize) -> HashMap<usize, usize> {
    let mut dist = HashMap::new();
    dist.insert(source, 0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == max_hops {
            continue;
        }
        for &u in kg.neighbor_indices(v) {
            dist.entry(u as usize).or_insert_with(|| {
                queue.push_back(u as usize);
                d + 1
            });
        }
    }
    dist
}

/// Whether terminals `a` and `b` may anchor a connecting walk: they must be
/// distinct entities with a pair of distinct groups between them.
fn cross_group(groups_of: &[Vec<usize>], a: usize, b: usize) -> bool {
    if a == b {
        return false;
    }
    let (ga, gb) = (&groups_of[a], &groups_of[b]);
    !(ga.len() == 1 && gb.len() == 1 && ga[0] == gb[0])
}

/// Collects every candidate entity plus every KG node `u` with
/// `d(a, u) + d(u, b) <= max_hops` for terminals `a`, `b` of different
/// groups, and the KG edges that such walks traverse.
pub fn induce_subgraph(
    kg: &KnowledgeGraph,
    candidate_sets: &[CandidateSet],
    max_hops: usize,
) -> Result<Skeleton> {
    let mut groups = Vec::new();
    let mut terminal_nodes: BTreeSet<usize> = BTreeSet::new();
    let mut membership: HashMap<usize, Vec<usize>> = HashMap::new();
    for set in candidate_sets.iter().filter(|s| !s.candidates.is_empty()) {
        let gi = groups.len();
        let mut group = TerminalGroup::new(
            set.mention.mention_id.clone(),
            set.candidates.iter().map(|c| c.entity.clone()),
        );
        group.singleton_exact = set.exact_match.is_some();
        for t in &group.terminals {
            let idx = kg
                .index_of(t)
                .ok_or_else(|| Error::UnknownEntity(t.to_string()))?;
            terminal_nodes.insert(idx);
            membership.entry(idx).or_default().push(gi);
        }
        groups.push(group);
    }
    if groups.is_empty() {
        return Err(Error::Config(
            "subgraph induction needs at least one candidate".into(),
        ));
    }

    let terminals: Vec<usize> = terminal_nodes.iter().copied().collect();
    let groups_of: Vec<Vec<usize>> = terminals.iter().map(|t| membership[t].clone()).collect();
    // reach[u] = (distance, terminal position) pairs, sorted by distance
    let mut reach: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    for (ti, &t) in terminals.iter().enumerate() {
        for (u, d) in bfs(kg, t, max_hops) {
            reach.entry(u).or_default().push((d, ti));
        }
    }
    for list in reach.values_mut() {
        list.sort_unstable();
    }

    let joins = |from: &[(usize, usize)], to: &[(usize, usize)], budget: usize| -> bool {
        for &(da, a) in from {
            if da > budget {
                break;
            }
            for &(db, b) in to {
                if da + db > budget {
                    break;
                }
                if cross_group(&groups_of, a, b) {
                    return true;
                }
            }
        }
        false
    };

    let mut included: BTreeSet<usize> = terminal_nodes.clone();
    for (&u, list) in &reach {
        if !included.contains(&u) && joins(list, list, max_hops) {
            included.insert(u);
        }
    }

    let mut edges = Vec::new();
    for &x in &included {
        for &y in kg.neighbor_indices(x) {
            let y = y as usize;
            if y <= x || !included.contains(&y) {
                continue;
            }
            let (Some(rx), Some(ry)) = (reach.get(&x), reach.get(&y)) else {
                continue;
            };
            if max_hops >= 1 && (joins(rx, ry, max_hops - 1) || joins(ry, rx, max_hops - 1)) {
                edges.push((x, y));
            }
        }
    }

    Ok(Skeleton {
        nodes: included.into_iter().collect(),
        edges,
        groups,
    })
}

/// Which surface string of a candidate is compared with the mention for its node weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightLabel {
    #[default]
    Canonical,
    MatchedString,
}

/// Attaches costs and weights: `cost = 1 - max(0, cosine)` per edge and
/// `weight = max Jaro-Winkler(label, surface)` over the mentions a node is
/// a candidate for. Connector nodes weigh 0.
pub fn weight_graph(
    skeleton: &Skeleton,
    kg: &KnowledgeGraph,
    emb: &EmbeddingTable,
    candidate_sets: &[CandidateSet],
    label: WeightLabel,
) -> Result<ContextGraph> {
    let vector = |idx: usize| {
        let id = &kg.node_at(idx).id;
        emb.vector(id)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    };
    for &v in &skeleton.nodes {
        vector(v)?;
    }

    let mut weights: HashMap<EntityId, f64> = HashMap::new();
    for set in candidate_sets {
        let surface = normalize_surface(&set.mention.surface);
        for c in &set.candidates {
            let text = match label {
                WeightLabel::Canonical => kg
                    .node(&c.entity)
                    .map(|n| n.label.as_str())
                    .ok_or_else(|| Error::UnknownEntity(c.entity.to_string()))?,
                WeightLabel::MatchedString => c.matched_string.as_str(),
            };
            let w = jaro_winkler(&normalize_surface(text), &surface);
            let slot = weights.entry(c.entity.clone()).or_insert(0.0);
            *slot = slot.max(w);
        }
    }

    let mut edges = Vec::with_capacity(skeleton.edges.len());
    for &(a, b) in &skeleton.edges {
        let sim = cosine(vector(a)?, vector(b)?)?;
        let cost = (1.0 - sim.clamp(0.0, 1.0)).clamp(0.0, 1.0);
        edges.push((kg.node_at(a).id.clone(), kg.node_at(b).id.clone(), cost));
    }
    ContextGraph::new(
        skeleton.node_ids(kg).cloned(),
        edges,
        &weights,
        skeleton.groups.clone(),
    )
}
