//! End-to-end linking: candidates, context graph, Steiner trees, ranking.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    CandidateIndex, CandidateSet, Document, DEFAULT_MAX_CANDIDATES, DEFAULT_THRESHOLD,
};
use crate::context::{induce_subgraph, weight_graph, ContextGraph, WeightLabel, DEFAULT_MAX_HOPS};
use crate::embeddings::{EmbeddingTable, WalkConfig};
use crate::error::{Error, Result};
use crate::eval::MentionTrace;
use crate::gst::{
    solve_topk_with, GstSolution, SolverOptions, DEFAULT_EXACT_BUDGET, DEFAULT_K, MAX_SOLVER_GROUPS,
};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::rank::{rank, NodeWeightMode, RankedCandidates, Scheme};

/// Documents with more mentions than this are solved in consecutive windows.
pub const DEFAULT_WINDOW: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fuzzy_threshold: f64,
    pub max_candidates: usize,
    pub max_hops: usize,
    pub k: usize,
    pub scheme: Scheme,
    pub node_weight_mode: NodeWeightMode,
    pub weight_label: WeightLabel,
    pub window: usize,
    /// Partial trees the exact search may finalize before the solver falls
    /// back to k per state. 0 means unlimited.
    pub exact_budget: usize,
    /// Top-level seed; overrides `embedding.seed`.
    pub seed: u64,
    pub workers: usize,
    pub embedding: WalkConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fuzzy_threshold: DEFAULT_THRESHOLD,
            max_candidates: DEFAULT_MAX_CANDIDATES,
            max_hops: DEFAULT_MAX_HOPS,
            k: DEFAULT_K,
            scheme: Scheme::GstCount,
            node_weight_mode: NodeWeightMode::TreeTotal,
            weight_label: WeightLabel::Canonical,
            window: DEFAULT_WINDOW,
            exact_budget: DEFAULT_EXACT_BUDGET,
            seed: 42,
            workers: 1,
            embedding: WalkConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fuzzy_threshold > 0.0 && self.fuzzy_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "fuzzy_threshold must be in (0, 1], got {}",
                self.fuzzy_threshold
            )));
        }
        if self.max_candidates == 0 || self.k == 0 {
            return Err(Error::Config(
                "max_candidates and k must be at least 1".into(),
            ));
        }
        if self.window == 0 || self.window > MAX_SOLVER_GROUPS {
            return Err(Error::Config(format!(
                "window must be between 1 and {MAX_SOLVER_GROUPS}, got {}",
                self.window
            )));
        }
        if self.scheme == Scheme::FallbackNodeWeight {
            return Err(Error::Config(
                "the fallback scheme cannot be selected".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.walk_config().validate()
    }

    /// The embedding settings with the top-level seed and worker count applied.
    pub fn walk_config(&self) -> WalkConfig {
        WalkConfig {
            seed: self.seed,
            workers: self.workers,
            ..self.embedding.clone()
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            exact_budget: (self.exact_budget > 0).then_some(self.exact_budget),
        }
    }
}

/// Sizes of `n` consecutive windows of at most `width` items, as even as possible.
pub fn window_sizes(n: usize, width: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let count = n.div_ceil(width);
    (0..count)
        .map(|i| n / count + usize::from(i < n % count))
        .collect()
}

/// One window of a document after solving.
#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub sets: Vec<CandidateSet>,
    pub graph: ContextGraph,
    /// `None` when fewer than two mentions have candidates.
    pub solution: Option<GstSolution>,
    group_of: HashMap<String, usize>,
}

impl WindowAnalysis {
    fn rank_all(&self, scheme: Scheme, mode: NodeWeightMode) -> Vec<RankedCandidates> {
        self.sets
            .iter()
            .map(|set| {
                let sol = self
                    .solution
                    .as_ref()
                    .zip(self.group_of.get(&set.mention.mention_id).copied());
                rank(set, sol, &self.graph, scheme, mode)
            })
            .collect()
    }

    fn traces(&self) -> Vec<MentionTrace> {
        self.sets
            .iter()
            .map(|set| {
                let in_trees: BTreeSet<EntityId> = match &self.solution {
                    Some(sol) => set
                        .candidates
                        .iter()
                        .filter(|c| sol.trees.iter().any(|t| t.contains(&c.entity)))
                        .map(|c| c.entity.clone())
                        .collect(),
                    None => BTreeSet::new(),
                };
                MentionTrace {
                    doc_id: set.mention.doc_id.clone(),
                    mention_id: set.mention.mention_id.clone(),
                    exact_match: set.exact_match.is_some(),
                    in_trees: in_trees.into_iter().collect(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DocumentAnalysis {
    pub doc_id: String,
    pub windows: Vec<WindowAnalysis>,
}

impl DocumentAnalysis {
    /// Rankings for every mention, in document order.
    pub fn rank(&self, scheme: Scheme, mode: NodeWeightMode) -> Vec<RankedCandidates> {
        self.windows
            .iter()
            .flat_map(|w| w.rank_all(scheme, mode))
            .collect()
    }

    /// Which candidates made it into some tree, per mention, in document order.
    pub fn traces(&self) -> Vec<MentionTrace> {
        self.windows.iter().flat_map(|w| w.traces()).collect()
    }
}

/// Links documents against a fixed KG and embedding table.
pub struct Linker<'a> {
    kg: &'a KnowledgeGraph,
    index: Arc<CandidateIndex<'a>>,
    emb: &'a EmbeddingTable,
    cfg: PipelineConfig,
}

impl<'a> Linker<'a> {
    pub fn new(
        kg: &'a KnowledgeGraph,
        emb: &'a EmbeddingTable,
        cfg: PipelineConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Linker {
            kg,
            index: Arc::new(CandidateIndex::build(kg)),
            emb,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Same KG, index and embeddings under different settings.
    pub fn with_config(&self, cfg: PipelineConfig) -> Result<Linker<'a>> {
        cfg.validate()?;
        Ok(Linker {
            kg: self.kg,
            index: self.index.clone(),
            emb: self.emb,
            cfg,
        })
    }

    pub fn analyze(&self, doc: &Document) -> Result<DocumentAnalysis> {
        let mut seen = BTreeSet::new();
        for m in &doc.mentions {
            if !seen.insert(m.mention_id.as_str()) {
                return Err(Error::Config(format!(
                    "document `{}` repeats mention id `{}`",
                    doc.doc_id, m.mention_id
                )));
            }
        }
        let mut windows = Vec::new();
        let mut start = 0;
        for size in window_sizes(doc.mentions.len(), self.cfg.window) {
            let mentions = &doc.mentions[start..start + size];
            start += size;
            let sets = mentions
                .iter()
                .map(|m| {
                    let mut m = m.clone();
                    m.doc_id = doc.doc_id.clone();
                    self.index
                        .generate(&m, self.cfg.fuzzy_threshold, self.cfg.max_candidates)
                })
                .collect::<Result<Vec<_>>>()?;
            windows.push(self.analyze_window(sets)?);
        }
        Ok(DocumentAnalysis {
            doc_id: doc.doc_id.clone(),
            windows,
        })
    }

    fn analyze_window(&self, sets: Vec<CandidateSet>) -> Result<WindowAnalysis> {
        let with_candidates = sets.iter().filter(|s| !s.candidates.is_empty()).count();
        if with_candidates == 0 {
            return Ok(WindowAnalysis {
                sets,
                graph: ContextGraph::new([], [], &HashMap::new(), Vec::new())?,
                solution: None,
                group_of: HashMap::new(),
            });
        }
        let skeleton = induce_subgraph(self.kg, &sets, self.cfg.max_hops)?;
        let graph = weight_graph(&skeleton, self.kg, self.emb, &sets, self.cfg.weight_label)?;
        let group_of = graph
            .groups()
            .iter()
            .enumerate()
            .map(|(i, g)| (g.mention_id.clone(), i))
            .collect();
        let solution = if with_candidates >= 2 {
            Some(solve_topk_with(
                &graph,
                self.cfg.k,
                &self.cfg.solver_options(),
            )?)
        } else {
            None
        };
        Ok(WindowAnalysis {
            sets,
            graph,
            solution,
            group_of,
        })
    }

    /// Analyzes every document, in input order, on `cfg.workers` threads.
    pub fn analyze_all(&self, docs: &[Document]) -> Result<Vec<DocumentAnalysis>> {
        if self.cfg.workers <= 1 {
            return docs.iter().map(|d| self.analyze(d)).collect();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| docs.par_iter().map(|d| self.analyze(d)).collect())
    }

    /// Rankings and traces for every mention under the configured scheme.
    pub fn link_all(
        &self,
        docs: &[Document],
    ) -> Result<(Vec<RankedCandidates>, Vec<MentionTrace>)> {
        let analyses = self.analyze_all(docs)?;
        let rankings = analyses
            .iter()
            .flat_map(|a| a.rank(self.cfg.scheme, self.cfg.node_weight_mode))
            .collect();
        let traces = analyses.iter().flat_map(|a| a.traces()).collect();
        Ok((rankings, traces))
    }
}
