//! Top-k group Steiner trees by best-first dynamic programming.
//!
//! A DP state is a root node plus the set of groups covered by a tree
//! containing it. Trees enter the frontier either as a lone terminal, by
//! growing an edge off the root, or by merging two trees that share only
//! their root. The frontier is popped in ascending cost, each state keeps at
//! most k distinct node sets, and a full-cover node set is reported the
//! first time it is popped. Because every construction step adds a
//! non-negative cost, the first time a node set is popped it carries its
//! minimum spanning cost.
//!
//! An answer is a node set whose minimum spanning tree is reduced: every
//! leaf is the only member of some group in the tree, so no leaf can be cut
//! without losing coverage. Answers are identified by node set. Partial
//! trees only ever grow at their root, so a partial tree with a redundant
//! non-root leaf is dropped as soon as it is popped.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use serde::Serialize;

use crate::context::ContextGraph;
use crate::error::{Error, Result};
use crate::kg::EntityId;

pub const DEFAULT_K: usize = 10;
/// Widest group set a single solve accepts.
pub const MAX_SOLVER_GROUPS: usize = 20;
/// Node-count guard for [`brute_force_gst`].
pub const BRUTE_FORCE_MAX_NODES: usize = 16;

/// Default for [`SolverOptions::exact_budget`].
pub const DEFAULT_EXACT_BUDGET: usize = 1_000_000;

const TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteinerTree {
    pub nodes: Vec<EntityId>,
    pub edges: Vec<(EntityId, EntityId)>,
    pub cost: f64,
    /// Group index to the smallest terminal of that group in the tree.
    pub chosen: BTreeMap<usize, EntityId>,
}

impl SteinerTree {
    pub fn contains(&self, e: &EntityId) -> bool {
        self.nodes.binary_search(e).is_ok()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolveStats {
    pub states_expanded: usize,
    pub frontier_peak: usize,
    pub components_solved: usize,
    /// False when the exact search ran out of budget and the capped search
    /// produced the trees.
    pub exact: bool,
}

/// Search limits for [`solve_topk_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolverOptions {
    /// Partial trees the exact search may enqueue before it gives up.
    /// `None` never gives up.
    pub exact_budget: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            exact_budget: Some(DEFAULT_EXACT_BUDGET),
        }
    }
}

/// Per-run knobs handed to the DP.
struct SearchOptions {
    /// Distinct node sets kept per (root, covered) state.
    state_cap: Option<usize>,
    /// Frontier pushes allowed before giving up.
    max_pushes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GstSolution {
    /// Ascending by `(cost, node ids)`.
    pub trees: Vec<SteinerTree>,
    pub groups_solved: Vec<usize>,
    /// Groups with no connectable peer; the ranker falls back for them.
    pub unsolvable_by_gst: Vec<usize>,
    pub stats: SolveStats,
}

impl GstSolution {
    pub fn covers(&self, group: usize) -> bool {
        self.groups_solved.binary_search(&group).is_ok()
    }
}

/// A tree over dense node indices, used between the DP and the public types.
#[derive(Debug, Clone, PartialEq)]
struct RawTree {
    nodes: Vec<u32>,
    edges: Vec<(u32, u32)>,
    cost: f64,
}

fn cmp_raw(a: &RawTree, b: &RawTree) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then_with(|| a.nodes.cmp(&b.nodes))
}

struct Problem {
    adj: Vec<Vec<(u32, f64)>>,
    edge_cost: HashMap<(u32, u32), f64>,
    /// Per node, bitmask of groups it is a terminal of.
    term_mask: Vec<u32>,
    n_groups: usize,
}

impl Problem {
    fn build(g: &ContextGraph) -> Result<Self> {
        let n = g.nodes().len();
        let l = g.groups().len();
        if l > MAX_SOLVER_GROUPS {
            return Err(Error::Solver(format!(
                "{l} groups exceed the solver limit of {MAX_SOLVER_GROUPS}; split the document"
            )));
        }
        let mut adj = vec![Vec::new(); n];
        let mut edge_cost = HashMap::new();
        for e in g.edges() {
            if !(e.cost >= 0.0 && e.cost.is_finite()) {
                return Err(Error::Solver(format!(
                    "edge {}-{} has invalid cost {}",
                    g.nodes()[e.a],
                    g.nodes()[e.b],
                    e.cost
                )));
            }
            adj[e.a].push((e.b as u32, e.cost));
            adj[e.b].push((e.a as u32, e.cost));
            edge_cost.insert((e.a as u32, e.b as u32), e.cost);
        }
        for list in &mut adj {
            list.sort_by_key(|&(u, _)| u);
        }
        let mut term_mask = vec![0u32; n];
        for (gi, group) in g.groups().iter().enumerate() {
            if group.terminals.is_empty() {
                return Err(Error::Solver(format!(
                    "group {gi} (`{}`) is empty",
                    group.mention_id
                )));
            }
            for t in &group.terminals {
                let i = g
                    .index_of(t)
                    .ok_or_else(|| Error::UnknownEntity(t.to_string()))?;
                term_mask[i] |= 1 << gi;
            }
        }
        Ok(Problem {
            adj,
            edge_cost,
            term_mask,
            n_groups: l,
        })
    }

    fn cost(&self, a: u32, b: u32) -> f64 {
        self.edge_cost[&(a.min(b), a.max(b))]
    }

    /// Sums edge costs in sorted edge order so equal trees get equal costs.
    fn tree_cost(&self, edges: &[(u32, u32)]) -> f64 {
        edges.iter().fold(0.0, |acc, &(a, b)| acc + self.cost(a, b))
    }

    /// Minimum spanning tree of the subgraph induced by sorted `members`,
    /// edges sorted, or `None` when that subgraph is disconnected.
    fn spanning_tree(&self, members: &[u32]) -> Option<Vec<(u32, u32)>> {
        let mut candidates: Vec<(f64, u32, u32)> = Vec::new();
        for &a in members {
            for &(b, c) in &self.adj[a as usize] {
                if a < b && members.binary_search(&b).is_ok() {
                    candidates.push((c, a, b));
                }
            }
        }
        candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        let pos = |v: u32| members.binary_search(&v).unwrap();
        let mut parent: Vec<usize> = (0..members.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut tree = Vec::with_capacity(members.len().saturating_sub(1));
        for (_, a, b) in candidates {
            let (ra, rb) = (find(&mut parent, pos(a)), find(&mut parent, pos(b)));
            if ra != rb {
                parent[ra] = rb;
                tree.push((a, b));
            }
        }
        if tree.len() + 1 != members.len() {
            return None;
        }
        tree.sort_unstable();
        Some(tree)
    }

    fn components(&self) -> Vec<usize> {
        let n = self.adj.len();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &(u, _) in &self.adj[v] {
                    if comp[u as usize] == usize::MAX {
                        comp[u as usize] = next;
                        stack.push(u as usize);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

#[derive(Debug, Clone, Copy)]
enum Back {
    Seed,
    Grow(usize),
    Merge(usize, usize),
}

struct Entry {
    root: u32,
    mask: u32,
    cost: f64,
    nodes: Vec<u32>,
    edges: Vec<(u32, u32)>,
}

struct Frontier {
    cost: f64,
    nodes: Vec<u32>,
    root: u32,
    mask: u32,
    back: Back,
}

impl Frontier {
    fn key(&self) -> (f64, &[u32], u32, u32) {
        (self.cost, &self.nodes, self.root, self.mask)
    }
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // reversed so BinaryHeap pops the cheapest
    fn cmp(&self, other: &Self) -> Ordering {
        let (c1, n1, r1, m1) = self.key();
        let (c2, n2, r2, m2) = other.key();
        c2.total_cmp(&c1)
            .then_with(|| n2.cmp(n1))
            .then_with(|| r2.cmp(&r1))
            .then_with(|| m2.cmp(&m1))
    }
}

/// True when sorted `a` and `b` intersect exactly in `{root}`.
fn meet_only_at(a: &[u32], b: &[u32], root: u32) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                if a[i] != root {
                    return false;
                }
                i += 1;
                j += 1;
            }
        }
    }
    true
}

fn union_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Leaves of a tree given by its node and edge lists, ascending. A lone
/// node counts as a leaf.
fn leaves(nodes: &[u32], edges: &[(u32, u32)]) -> Vec<u32> {
    if nodes.len() == 1 {
        return nodes.to_vec();
    }
    let mut degree: HashMap<u32, u32> = HashMap::with_capacity(nodes.len());
    for &(a, b) in edges {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    nodes
        .iter()
        .copied()
        .filter(|v| degree.get(v) == Some(&1))
        .collect()
}

/// Whether `leaf` is the sole node of `nodes` for at least one of its groups.
fn is_essential(masks: &[u32], nodes: &[u32], leaf: u32) -> bool {
    let others = nodes
        .iter()
        .filter(|&&v| v != leaf)
        .fold(0u32, |acc, &v| acc | masks[v as usize]);
    masks[leaf as usize] & !others != 0
}

fn reduced(masks: &[u32], nodes: &[u32], edges: &[(u32, u32)], skip: Option<u32>) -> bool {
    leaves(nodes, edges)
        .into_iter()
        .filter(|&v| Some(v) != skip)
        .all(|v| is_essential(masks, nodes, v))
}

/// The k cheapest node sets covering every group in `masks`' range, over
/// the nodes for which `seed` is true. `None` once `opts.max_pushes` is hit.
fn dp_full_cover(
    p: &Problem,
    masks: &[u32],
    full: u32,
    seeds: &[bool],
    k: usize,
    opts: &SearchOptions,
    stats: &mut SolveStats,
) -> Option<Vec<RawTree>> {
    let n = p.adj.len();
    let mut entries: Vec<Entry> = Vec::new();
    let mut states: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut heap = BinaryHeap::new();
    let mut found: Vec<usize> = Vec::new();
    let mut found_sets: HashSet<Vec<u32>> = HashSet::new();
    let mut stop_at: Option<f64> = None;
    let cap = opts.state_cap.unwrap_or(usize::MAX);
    let mut pushes = 0usize;

    let state_full = |states: &HashMap<(u32, u32), Vec<usize>>, key: (u32, u32)| {
        states.get(&key).is_some_and(|v| v.len() >= cap)
    };

    for v in 0..n {
        if seeds[v] && masks[v] != 0 {
            heap.push(Frontier {
                cost: 0.0,
                nodes: vec![v as u32],
                root: v as u32,
                mask: masks[v],
                back: Back::Seed,
            });
        }
    }

    while let Some(item) = heap.pop() {
        if let Some(limit) = stop_at {
            if item.cost > limit {
                break;
            }
        }
        let key = (item.root, item.mask);
        let slot = states.entry(key).or_default();
        if slot.len() >= cap || slot.iter().any(|&e| entries[e].nodes == item.nodes) {
            continue;
        }
        let edges = match item.back {
            Back::Seed => Vec::new(),
            Back::Grow(child) => {
                let c = &entries[child];
                let mut e = c.edges.clone();
                let (a, b) = (item.root, c.root);
                let pos = e.binary_search(&(a.min(b), a.max(b))).unwrap_or_else(|p| p);
                e.insert(pos, (a.min(b), a.max(b)));
                e
            }
            Back::Merge(x, y) => {
                let mut e = entries[x].edges.clone();
                e.extend_from_slice(&entries[y].edges);
                e.sort_unstable();
                e
            }
        };
        // non-root leaves never change again, so they must already be essential
        if !reduced(masks, &item.nodes, &edges, Some(item.root)) {
            continue;
        }
        let id = entries.len();
        slot.push(id);
        by_root[item.root as usize].push(id);
        stats.states_expanded += 1;
        let (root, mask, cost) = (item.root, item.mask, item.cost);
        entries.push(Entry {
            root,
            mask,
            cost,
            nodes: item.nodes,
            edges,
        });

        if mask == full && found_sets.insert(entries[id].nodes.clone()) {
            // the popped tree must be the node set's minimum spanning tree
            // and that tree must have no redundant leaf
            let e = &entries[id];
            let mst_cost = p
                .spanning_tree(&e.nodes)
                .map_or(f64::INFINITY, |t| p.tree_cost(&t));
            if p.tree_cost(&e.edges) <= mst_cost + TIE_EPS
                && reduced(masks, &e.nodes, &e.edges, None)
            {
                found.push(id);
                if found.len() == k && stop_at.is_none() {
                    stop_at = Some(cost + TIE_EPS);
                }
            }
        }

        let before = heap.len();
        let nodes = &entries[id].nodes;
        for &(u, w) in &p.adj[root as usize] {
            if nodes.binary_search(&u).is_ok() {
                continue;
            }
            let m = mask | masks[u as usize];
            if state_full(&states, (u, m)) {
                continue;
            }
            let mut grown = nodes.clone();
            let pos = grown.binary_search(&u).unwrap_err();
            grown.insert(pos, u);
            heap.push(Frontier {
                cost: cost + w,
                nodes: grown,
                root: u,
                mask: m,
                back: Back::Grow(id),
            });
        }
        for &other in &by_root[root as usize] {
            if other == id {
                continue;
            }
            let o = &entries[other];
            let m = mask | o.mask;
            if state_full(&states, (root, m)) || !meet_only_at(nodes, &o.nodes, root) {
                continue;
            }
            heap.push(Frontier {
                cost: cost + o.cost,
                nodes: union_sorted(nodes, &o.nodes),
                root,
                mask: m,
                back: Back::Merge(id, other),
            });
        }
        stats.frontier_peak = stats.frontier_peak.max(heap.len());
        pushes += heap.len() - before;
        if opts.max_pushes.is_some_and(|m| pushes > m) {
            return None;
        }
    }

    let mut trees: Vec<RawTree> = found
        .into_iter()
        .map(|id| {
            let e = &entries[id];
            RawTree {
                cost: p.tree_cost(&e.edges),
                nodes: e.nodes.clone(),
                edges: e.edges.clone(),
            }
        })
        .collect();
    trees.sort_by(cmp_raw);
    trees.truncate(k);
    Some(trees)
}

fn to_public(g: &ContextGraph, p: &Problem, raw: RawTree) -> SteinerTree {
    let ids = g.nodes();
    let mut chosen = BTreeMap::new();
    for &v in &raw.nodes {
        let mut m = p.term_mask[v as usize];
        while m != 0 {
            let gi = m.trailing_zeros() as usize;
            chosen.entry(gi).or_insert_with(|| ids[v as usize].clone());
            m &= m - 1;
        }
    }
    SteinerTree {
        nodes: raw.nodes.iter().map(|&v| ids[v as usize].clone()).collect(),
        edges: raw
            .edges
            .iter()
            .map(|&(a, b)| (ids[a as usize].clone(), ids[b as usize].clone()))
            .collect(),
        cost: raw.cost,
        chosen,
    }
}

/// The k least-cost group Steiner trees of `g`, with default limits.
pub fn solve_topk(g: &ContextGraph, k: usize) -> Result<GstSolution> {
    solve_topk_with(g, k, &SolverOptions::default())
}

/// The k least-cost group Steiner trees of `g`.
///
/// The search keeps every distinct partial tree below the current k-th cost,
/// which is exact. If that exceeds `opts.exact_budget` the solve is redone
/// keeping at most k partial trees per (root, covered) state; the trees are
/// still valid but may not be the k cheapest, and `stats.exact` is false.
///
/// When no connected component holds a terminal of every group, each
/// component holding terminals of two or more groups is solved on its own
/// and the trees are merged by cost; groups left without a peer are listed
/// in `unsolvable_by_gst`.
pub fn solve_topk_with(g: &ContextGraph, k: usize, opts: &SolverOptions) -> Result<GstSolution> {
    if k == 0 {
        return Err(Error::Solver("k must be at least 1".into()));
    }
    let p = Problem::build(g)?;
    let l = p.n_groups;
    let mut stats = SolveStats {
        exact: true,
        ..SolveStats::default()
    };
    if l == 0 {
        return Ok(GstSolution {
            trees: Vec::new(),
            groups_solved: Vec::new(),
            unsolvable_by_gst: Vec::new(),
            stats,
        });
    }
    let full: u32 = if l == 32 { u32::MAX } else { (1u32 << l) - 1 };
    let comp = p.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut comp_groups = vec![0u32; n_comp];
    for (v, &m) in p.term_mask.iter().enumerate() {
        comp_groups[comp[v]] |= m;
    }

    let exact = SearchOptions {
        state_cap: None,
        max_pushes: opts.exact_budget,
    };
    let capped = SearchOptions {
        state_cap: Some(k),
        max_pushes: None,
    };
    let run = |masks: &[u32], target: u32, seeds: &[bool], stats: &mut SolveStats| {
        dp_full_cover(&p, masks, target, seeds, k, &exact, stats).unwrap_or_else(|| {
            log::debug!("exact search over budget, falling back to {k} trees per state");
            stats.exact = false;
            dp_full_cover(&p, masks, target, seeds, k, &capped, stats).unwrap_or_default()
        })
    };

    let all_seeds = vec![true; p.adj.len()];
    let (raw, solved_mask) = if comp_groups.contains(&full) {
        stats.components_solved = comp_groups.iter().filter(|&&m| m == full).count();
        (run(&p.term_mask, full, &all_seeds, &mut stats), full)
    } else {
        let mut raw = Vec::new();
        let mut solved = 0u32;
        for (c, &m) in comp_groups.iter().enumerate() {
            if m.count_ones() < 2 {
                continue;
            }
            let seeds: Vec<bool> = comp.iter().map(|&x| x == c).collect();
            let masks: Vec<u32> = p.term_mask.iter().map(|&t| t & m).collect();
            raw.extend(run(&masks, m, &seeds, &mut stats));
            stats.components_solved += 1;
            solved |= m;
        }
        raw.sort_by(cmp_raw);
        raw.truncate(k);
        (raw, solved)
    };

    let groups_solved = (0..l).filter(|&i| solved_mask >> i & 1 == 1).collect();
    let unsolvable_by_gst = (0..l).filter(|&i| solved_mask >> i & 1 == 0).collect();
    Ok(GstSolution {
        trees: raw.into_iter().map(|t| to_public(g, &p, t)).collect(),
        groups_solved,
        unsolvable_by_gst,
        stats,
    })
}

/// Exhaustive reference: every connected node subset that touches every
/// group and whose minimum spanning tree is reduced, costed by that tree,
/// k cheapest first.
pub fn brute_force_gst(g: &ContextGraph, k: usize) -> Result<GstSolution> {
    let n = g.nodes().len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::Solver(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_NODES} nodes, got {n}"
        )));
    }
    if k == 0 {
        return Err(Error::Solver("k must be at least 1".into()));
    }
    let p = Problem::build(g)?;
    let l = p.n_groups;
    let mut trees = Vec::new();
    for subset in 1u32..(1u32 << n) {
        let members: Vec<u32> = (0..n as u32).filter(|&v| subset >> v & 1 == 1).collect();
        let covered = members
            .iter()
            .fold(0u32, |acc, &v| acc | p.term_mask[v as usize]);
        if covered.count_ones() as usize != l {
            continue;
        }
        let Some(tree_edges) = p.spanning_tree(&members) else {
            continue;
        };
        if !reduced(&p.term_mask, &members, &tree_edges, None) {
            continue;
        }
        trees.push(RawTree {
            cost: p.tree_cost(&tree_edges),
            nodes: members,
            edges: tree_edges,
        });
    }
    trees.sort_by(cmp_raw);
    trees.truncate(k);
    let groups_solved = if trees.is_empty() {
        Vec::new()
    } else {
        (0..l).collect()
    };
    let unsolvable_by_gst = if trees.is_empty() {
        (0..l).collect()
    } else {
        Vec::new()
    };
    Ok(GstSolution {
        trees: trees.into_iter().map(|t| to_public(g, &p, t)).collect(),
        groups_solved,
        unsolvable_by_gst,
        stats: SolveStats::default(),
    })
}
