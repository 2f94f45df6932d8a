use std::collections::{BTreeSet, HashMap};

use gstned::candidates::{Candidate, CandidateSet, Mention};
use gstned::context::{induce_subgraph, weight_graph, Skeleton, WeightLabel};
use gstned::embeddings::EmbeddingTable;
use gstned::kg::{EntityId, EntityNode, KnowledgeGraph};
use proptest::prelude::*;

fn kg_from(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
    let nodes = (0..n)
        .map(|i| EntityNode {
            id: EntityId::new(format!("e{i:02}")),
            label: format!("entity {i}"),
            aliases: vec![],
        })
        .collect();
    let edges = edges.iter().map(|&(a, b)| {
        (
            EntityId::new(format!("e{a:02}")),
            EntityId::new(format!("e{b:02}")),
        )
    });
    KnowledgeGraph::from_records(nodes, edges).unwrap().0
}

fn cand_set(mention: &str, surface: &str, ids: &[&str]) -> CandidateSet {
    CandidateSet {
        mention: Mention {
            mention_id: mention.into(),
            surface: surface.into(),
            doc_id: "doc".into(),
            gold: None,
        },
        candidates: ids
            .iter()
            .map(|id| Candidate {
                entity: EntityId::from(*id),
                match_score: 0.9,
                matched_string: id.to_string(),
            })
            .collect(),
        exact_match: None,
    }
}

/// Nodes and edges touched by any walk of at most `hops` steps joining two
/// distinct terminals of different groups, found by enumerating walks.
fn walk_oracle(
    kg: &KnowledgeGraph,
    groups: &[Vec<usize>],
    hops: usize,
) -> (BTreeSet<usize>, BTreeSet<(usize, usize)>) {
    let mut member: HashMap<usize, BTreeSet<usize>> = HashMap::new();
    for (gi, g) in groups.iter().enumerate() {
        for &t in g {
            member.entry(t).or_default().insert(gi);
        }
    }
    let mut nodes: BTreeSet<usize> = member.keys().copied().collect();
    let mut edges = BTreeSet::new();
    fn walk(
        kg: &KnowledgeGraph,
        member: &HashMap<usize, BTreeSet<usize>>,
        path: &mut Vec<usize>,
        hops: usize,
        nodes: &mut BTreeSet<usize>,
        edges: &mut BTreeSet<(usize, usize)>,
    ) {
        let (a, end) = (path[0], *path.last().unwrap());
        if path.len() > 1 && a != end {
            if let (Some(ga), Some(gb)) = (member.get(&a), member.get(&end)) {
                if ga.iter().any(|x| gb.iter().any(|y| x != y)) {
                    nodes.extend(path.iter().copied());
                    for w in path.windows(2) {
                        edges.insert((w[0].min(w[1]), w[0].max(w[1])));
                    }
                }
            }
        }
        if path.len() > hops {
            return;
        }
        for &u in kg.neighbor_indices(end) {
            path.push(u as usize);
            walk(kg, member, path, hops, nodes, edges);
            path.pop();
        }
    }
    let starts: Vec<usize> = member.keys().copied().collect();
    for t in starts {
        walk(kg, &member, &mut vec![t], hops, &mut nodes, &mut edges);
    }
    (nodes, edges)
}

fn skeleton_sets(sk: &Skeleton) -> (BTreeSet<usize>, BTreeSet<(usize, usize)>) {
    (
        sk.nodes.iter().copied().collect(),
        sk.edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect(),
    )
}

fn sets_for(groups: &[Vec<usize>]) -> Vec<CandidateSet> {
    groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let ids: Vec<String> = g.iter().map(|i| format!("e{i:02}")).collect();
            let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            cand_set(&format!("m{gi}"), "entity", &refs)
        })
        .collect()
}

#[test]
fn three_coloured_groups_over_a_toy_graph() {
    // red r0,r1; yellow y0,y1; blue b0; connectors c0..c3; far-away f0,f1
    let names = [
        "r0", "r1", "y0", "y1", "b0", "c0", "c1", "c2", "c3", "f0", "f1",
    ];
    let idx = |s: &str| names.iter().position(|n| *n == s).unwrap();
    let links = [
        ("r0", "c0"),
        ("c0", "y0"),
        ("y0", "c1"),
        ("c1", "c2"),
        ("c2", "b0"),
        ("r1", "c3"),
        ("c3", "f0"),
        ("f0", "f1"),
        ("y1", "f1"),
    ];
    let edges: Vec<(usize, usize)> = links.iter().map(|&(a, b)| (idx(a), idx(b))).collect();
    let kg = kg_from(names.len(), &edges);
    let groups = vec![
        vec![idx("r0"), idx("r1")],
        vec![idx("y0"), idx("y1")],
        vec![idx("b0")],
    ];
    let sk = induce_subgraph(&kg, &sets_for(&groups), 3).unwrap();
    let (nodes, _) = skeleton_sets(&sk);
    let named: BTreeSet<&str> = nodes.iter().map(|&i| names[i]).collect();
    // r1 reaches y1 only in four steps, so its side path stays out
    let expected: BTreeSet<&str> = ["r0", "r1", "y0", "y1", "b0", "c0", "c1", "c2"].into();
    assert_eq!(named, expected);
    assert_eq!(skeleton_sets(&sk), walk_oracle(&kg, &groups, 3));
}

#[test]
fn edge_costs_and_node_weights() {
    let kg = kg_from(3, &[(0, 1), (1, 2)]);
    let emb = EmbeddingTable::from_vectors(
        2,
        0,
        vec![
            (EntityId::from("e00"), vec![1.0, 0.0]),
            (EntityId::from("e01"), vec![1.0, 1.0]),
            (EntityId::from("e02"), vec![-1.0, 0.0]),
        ],
    )
    .unwrap();
    let sets = vec![
        cand_set("m0", "entity 0", &["e00"]),
        cand_set("m1", "entity", &["e02"]),
    ];
    let sk = induce_subgraph(&kg, &sets, 3).unwrap();
    let g = weight_graph(&sk, &kg, &emb, &sets, WeightLabel::Canonical).unwrap();
    let (e0, e1, e2) = (
        EntityId::from("e00"),
        EntityId::from("e01"),
        EntityId::from("e02"),
    );
    assert!((g.edge_cost(&e0, &e1).unwrap() - (1.0 - 0.5f64.sqrt())).abs() < 1e-6);
    // negative cosine clamps to cost 1
    assert_eq!(g.edge_cost(&e1, &e2).unwrap(), 1.0);
    assert_eq!(g.node_weight(&e0), 1.0);
    assert_eq!(g.node_weight(&e1), 0.0);
    assert!(g.node_weight(&e2) > 0.0 && g.node_weight(&e2) < 1.0);
}

fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<Vec<usize>>)> {
    (3usize..10).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..(2 * n));
        let groups = prop::collection::vec(prop::collection::vec(0..n, 1..3), 1..4);
        (Just(n), edges, groups)
    })
}

proptest! {
    #[test]
    fn induction_matches_walk_enumeration((n, edges, groups) in instance(), hops in 0usize..4) {
        let kg = kg_from(n, &edges);
        let groups: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|g| g.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        let sk = induce_subgraph(&kg, &sets_for(&groups), hops).unwrap();
        prop_assert_eq!(skeleton_sets(&sk), walk_oracle(&kg, &groups, hops));
    }

    #[test]
    fn more_hops_never_shrink_the_graph((n, edges, groups) in instance()) {
        let kg = kg_from(n, &edges);
        let sets = sets_for(&groups);
        let (n2, e2) = skeleton_sets(&induce_subgraph(&kg, &sets, 2).unwrap());
        let (n3, e3) = skeleton_sets(&induce_subgraph(&kg, &sets, 3).unwrap());
        prop_assert!(n2.is_subset(&n3));
        prop_assert!(e2.is_subset(&e3));
    }
}
