#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use gstned::context::{ContextGraph, TerminalGroup};
use gstned::gst::SteinerTree;
use gstned::kg::EntityId;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random solver instance: up to 12 nodes, 4 groups, 3 terminals per group.
pub fn random_instance(seed: u64) -> ContextGraph {
    build_instance(seed, false)
}

/// As [`random_instance`], but the graph always contains a spanning tree.
pub fn connected_instance(seed: u64) -> ContextGraph {
    build_instance(seed, true)
}

fn build_instance(seed: u64, connected: bool) -> ContextGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let ids: Vec<EntityId> = (0..n).map(|i| EntityId::new(format!("n{i:02}"))).collect();
    let density = rng.gen_range(0.15..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                edges.push((ids[a].clone(), ids[b].clone(), rng.gen_range(0.0..1.0)));
            }
        }
    }
    if connected {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for i in 1..n {
            let (a, b) = (order[i], order[rng.gen_range(0..i)]);
            edges.push((ids[a].clone(), ids[b].clone(), rng.gen_range(0.0..1.0)));
        }
    }
    let l = rng.gen_range(1..=4usize.min(n));
    let mut groups = Vec::new();
    for gi in 0..l {
        let t = rng.gen_range(1..=3usize.min(n));
        let mut pool = ids.clone();
        pool.shuffle(&mut rng);
        groups.push(TerminalGroup::new(
            format!("m{gi}"),
            pool.into_iter().take(t),
        ));
    }
    ContextGraph::new(ids, edges, &HashMap::new(), groups).unwrap()
}

/// Checks that `t` is a tree over its nodes, covers every group of `g`, and
/// that its cost is the sum of its edge costs.
pub fn validate_tree(g: &ContextGraph, t: &SteinerTree) -> Result<(), String> {
    let nodes: BTreeSet<&EntityId> = t.nodes.iter().collect();
    if nodes.len() != t.nodes.len() || t.edges.len() + 1 != t.nodes.len() {
        return Err(format!("{} nodes, {} edges", t.nodes.len(), t.edges.len()));
    }
    let mut parent: HashMap<&EntityId, &EntityId> = nodes.iter().map(|&v| (v, v)).collect();
    fn find<'a>(p: &HashMap<&'a EntityId, &'a EntityId>, mut x: &'a EntityId) -> &'a EntityId {
        while p[x] != x {
            x = p[x];
        }
        x
    }
    let mut sum = 0.0;
    for (a, b) in &t.edges {
        if !nodes.contains(a) || !nodes.contains(b) {
            return Err(format!("edge {a}-{b} leaves the node set"));
        }
        let c = g
            .edge_cost(a, b)
            .ok_or_else(|| format!("edge {a}-{b} is not in the graph"))?;
        sum += c;
        let (ra, rb) = (find(&parent, a), find(&parent, b));
        if ra == rb {
            return Err(format!("edge {a}-{b} closes a cycle"));
        }
        parent.insert(ra, rb);
    }
    for (gi, group) in g.groups().iter().enumerate() {
        if !group.terminals.iter().any(|x| nodes.contains(x)) {
            return Err(format!("group {gi} uncovered"));
        }
    }
    if (sum - t.cost).abs() > 1e-9 {
        return Err(format!("cost {} but edges sum to {sum}", t.cost));
    }
    Ok(())
}
