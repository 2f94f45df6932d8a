//! Candidate ranking from the top-k Steiner trees.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::candidates::CandidateSet;
use crate::context::ContextGraph;
use crate::error::Error;
use crate::gst::GstSolution;
use crate::kg::EntityId;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Scheme {
    /// Number of trees containing the candidate, higher first.
    #[default]
    GstCount,
    /// Total cost of the trees containing the candidate, lower first.
    GstCost,
    /// Node weights summed over the trees containing the candidate, higher first.
    NodeWeight,
    /// Jaro-Winkler node weight alone, used when no tree covers the mention.
    FallbackNodeWeight,
}

impl Scheme {
    /// The schemes a caller may ask for.
    pub const SELECTABLE: [Scheme; 3] = [Scheme::GstCount, Scheme::GstCost, Scheme::NodeWeight];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::GstCount => "GstCount",
            Scheme::GstCost => "GstCost",
            Scheme::NodeWeight => "NodeWeight",
            Scheme::FallbackNodeWeight => "FallbackNodeWeight",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        match key.as_str() {
            "gstcount" | "count" => Ok(Scheme::GstCount),
            "gstcost" | "cost" => Ok(Scheme::GstCost),
            "nodeweight" | "weight" => Ok(Scheme::NodeWeight),
            "fallbacknodeweight" | "fallback" => Ok(Scheme::FallbackNodeWeight),
            _ => Err(Error::Config(format!(
                "unknown scheme `{s}` (expected gst-count, gst-cost or node-weight)"
            ))),
        }
    }
}

/// How [`Scheme::NodeWeight`] turns trees into a score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeWeightMode {
    /// Sum of every node weight in each containing tree.
    #[default]
    TreeTotal,
    /// The candidate's own weight times the number of containing trees.
    CandidateOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub entity: EntityId,
    /// Infinite costs are written as `null`.
    #[serde(serialize_with = "ser_score", deserialize_with = "de_score")]
    pub score: f64,
}

fn ser_score<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_score<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One linking output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub doc_id: String,
    pub mention_id: String,
    pub ranking: Vec<RankEntry>,
    pub scheme: Scheme,
}

impl RankedCandidates {
    pub fn top(&self) -> Option<&EntityId> {
        self.ranking.first().map(|r| &r.entity)
    }

    pub fn position(&self, e: &EntityId) -> Option<usize> {
        self.ranking.iter().position(|r| &r.entity == e)
    }
}

fn containing<'a>(
    sol: &'a GstSolution,
    e: &'a EntityId,
) -> impl Iterator<Item = &'a crate::gst::SteinerTree> + 'a {
    sol.trees.iter().filter(move |t| t.contains(e))
}

pub fn score_gst_count<'a>(
    sol: &GstSolution,
    candidates: impl IntoIterator<Item = &'a EntityId>,
) -> BTreeMap<EntityId, usize> {
    candidates
        .into_iter()
        .map(|e| (e.clone(), containing(sol, e).count()))
        .collect()
}

/// Candidates in no tree score infinity.
pub fn score_gst_cost<'a>(
    sol: &GstSolution,
    candidates: impl IntoIterator<Item = &'a EntityId>,
) -> BTreeMap<EntityId, f64> {
    candidates
        .into_iter()
        .map(|e| {
            let mut hit = false;
            let total: f64 = containing(sol, e)
                .inspect(|_| hit = true)
                .map(|t| t.cost)
                .sum();
            (e.clone(), if hit { total } else { f64::INFINITY })
        })
        .collect()
}

pub fn score_node_weight<'a>(
    sol: &GstSolution,
    candidates: impl IntoIterator<Item = &'a EntityId>,
    g: &ContextGraph,
    mode: NodeWeightMode,
) -> BTreeMap<EntityId, f64> {
    candidates
        .into_iter()
        .map(|e| {
            let score = match mode {
                NodeWeightMode::TreeTotal => containing(sol, e)
                    .map(|t| t.nodes.iter().map(|v| g.node_weight(v)).sum::<f64>())
                    .sum(),
                NodeWeightMode::CandidateOnly => {
                    g.node_weight(e) * containing(sol, e).count() as f64
                }
            };
            (e.clone(), score)
        })
        .collect()
}

/// Orders the candidates of `set` under `scheme`.
///
/// `group` is the mention's group index in `sol`. Without a solution, with
/// no trees, or when the solver could not cover the group, the ranking falls
/// back to node weight. An exact-match mention ranks only its entity.
pub fn rank(
    set: &CandidateSet,
    sol: Option<(&GstSolution, usize)>,
    g: &ContextGraph,
    scheme: Scheme,
    mode: NodeWeightMode,
) -> RankedCandidates {
    let entities: Vec<&EntityId> = match &set.exact_match {
        Some(e) => vec![e],
        None => set.candidates.iter().map(|c| &c.entity).collect(),
    };
    let usable = sol
        .filter(|(s, gi)| !s.trees.is_empty() && s.covers(*gi))
        .map(|(s, _)| s);
    let scheme = match usable {
        Some(_) if scheme != Scheme::FallbackNodeWeight => scheme,
        _ => Scheme::FallbackNodeWeight,
    };

    let scores: BTreeMap<EntityId, f64> = match (scheme, usable) {
        (Scheme::GstCount, Some(s)) => score_gst_count(s, entities.iter().copied())
            .into_iter()
            .map(|(e, c)| (e, c as f64))
            .collect(),
        (Scheme::GstCost, Some(s)) => score_gst_cost(s, entities.iter().copied()),
        (Scheme::NodeWeight, Some(s)) => score_node_weight(s, entities.iter().copied(), g, mode),
        _ => entities
            .iter()
            .map(|&e| (e.clone(), g.node_weight(e)))
            .collect(),
    };
    let ascending = scheme == Scheme::GstCost;
    let match_score = |e: &EntityId| set.get(e).map_or(0.0, |c| c.match_score);

    let mut ranking: Vec<RankEntry> = entities
        .iter()
        .map(|&e| RankEntry {
            entity: e.clone(),
            score: scores[e],
        })
        .collect();
    ranking.sort_by(|a, b| {
        let primary = if ascending {
            a.score.total_cmp(&b.score)
        } else {
            b.score.total_cmp(&a.score)
        };
        primary
            .then_with(|| {
                g.node_weight(&b.entity)
                    .total_cmp(&g.node_weight(&a.entity))
            })
            .then_with(|| match_score(&b.entity).total_cmp(&match_score(&a.entity)))
            .then_with(|| a.entity.cmp(&b.entity))
    });
    RankedCandidates {
        doc_id: set.mention.doc_id.clone(),
        mention_id: set.mention.mention_id.clone(),
        ranking,
        scheme,
    }
}

/// Ranks are ordered consistently with `scheme`'s direction.
pub fn is_ordered(r: &RankedCandidates) -> bool {
    r.ranking.windows(2).all(|w| {
        let o = w[0].score.total_cmp(&w[1].score);
        if r.scheme == Scheme::GstCost {
            o != Ordering::Greater
        } else {
            o != Ordering::Less
        }
    })
}
