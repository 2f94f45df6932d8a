//! Candidate generation by fuzzy surface matching.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{normalize_surface, EntityId, KnowledgeGraph};
use crate::similarity::{ratio_upper_bound, IndelScorer};

pub const DEFAULT_THRESHOLD: f64 = 0.75;
pub const DEFAULT_MAX_CANDIDATES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub surface: String,
    #[serde(default, skip_serializing)]
    pub doc_id: String,
    #[serde(default)]
    pub gold: Option<EntityId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub mentions: Vec<Mention>,
}

/// Identifies a mention across a corpus; mention ids are only unique per document.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionKey {
    pub doc_id: String,
    pub mention_id: String,
}

impl Mention {
    pub fn key(&self) -> MentionKey {
        MentionKey {
            doc_id: self.doc_id.clone(),
            mention_id: self.mention_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub entity: EntityId,
    pub match_score: f64,
    pub matched_string: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateSet {
    pub mention: Mention,
    pub candidates: Vec<Candidate>,
    pub exact_match: Option<EntityId>,
}

impl CandidateSet {
    pub fn contains(&self, e: &EntityId) -> bool {
        self.candidates.iter().any(|c| &c.entity == e)
    }

    pub fn get(&self, e: &EntityId) -> Option<&Candidate> {
        self.candidates.iter().find(|c| &c.entity == e)
    }
}

struct SurfaceEntry {
    node: usize,
    normalized: String,
    char_len: usize,
    original: String,
}

/// Normalized labels and aliases of every node, ready for scanning.
pub struct CandidateIndex<'kg> {
    kg: &'kg KnowledgeGraph,
    entries: Vec<SurfaceEntry>,
    exact: HashMap<String, usize>,
}

impl<'kg> CandidateIndex<'kg> {
    pub fn build(kg: &'kg KnowledgeGraph) -> Self {
        let mut entries = Vec::new();
        let mut exact: HashMap<String, usize> = HashMap::new();
        for (node, n) in kg.nodes().iter().enumerate() {
            for s in std::iter::once(&n.label).chain(&n.aliases) {
                let normalized = normalize_surface(s);
                // nodes are visited in id order, so the first owner is the smallest id
                exact.entry(normalized.clone()).or_insert(node);
                entries.push(SurfaceEntry {
                    node,
                    char_len: normalized.chars().count(),
                    normalized,
                    original: s.clone(),
                });
            }
        }
        CandidateIndex { kg, entries, exact }
    }

    pub fn kg(&self) -> &'kg KnowledgeGraph {
        self.kg
    }

    /// Scores `mention` against every label and alias.
    ///
    /// An exact normalized match short-circuits to a single candidate.
    /// Otherwise each entity keeps its best score, only scores strictly
    /// above `threshold` survive, and the list is sorted by descending
    /// score then ascending id and cut to `max_candidates`.
    pub fn generate(
        &self,
        mention: &Mention,
        threshold: f64,
        max_candidates: usize,
    ) -> Result<CandidateSet> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::Config(format!(
                "fuzzy threshold must be in (0, 1], got {threshold}"
            )));
        }
        if max_candidates == 0 {
            return Err(Error::Config("max_candidates must be at least 1".into()));
        }
        let surface = normalize_surface(&mention.surface);
        if let Some(&node) = self.exact.get(&surface) {
            let n = self.kg.node_at(node);
            let matched = std::iter::once(&n.label)
                .chain(&n.aliases)
                .find(|s| normalize_surface(s) == surface)
                .cloned()
                .unwrap_or_else(|| n.label.clone());
            return Ok(CandidateSet {
                mention: mention.clone(),
                candidates: vec![Candidate {
                    entity: n.id.clone(),
                    match_score: 1.0,
                    matched_string: matched,
                }],
                exact_match: Some(n.id.clone()),
            });
        }

        let scorer = IndelScorer::new(&surface);
        let mut best: HashMap<usize, (f64, usize)> = HashMap::new();
        for (i, entry) in self.entries.iter().enumerate() {
            if ratio_upper_bound(scorer.pattern_len(), entry.char_len) <= threshold {
                continue;
            }
            let score = scorer.ratio(&entry.normalized);
            if score <= threshold {
                continue;
            }
            best.entry(entry.node)
                .and_modify(|cur| {
                    if score > cur.0 {
                        *cur = (score, i);
                    }
                })
                .or_insert((score, i));
        }
        let mut ranked: Vec<(usize, f64, usize)> =
            best.into_iter().map(|(n, (s, i))| (n, s, i)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(max_candidates);
        Ok(CandidateSet {
            mention: mention.clone(),
            candidates: ranked
                .into_iter()
                .map(|(node, score, entry)| Candidate {
                    entity: self.kg.node_at(node).id.clone(),
                    match_score: score,
                    matched_string: self.entries[entry].original.clone(),
                })
                .collect(),
            exact_match: None,
        })
    }
}

/// One-shot convenience over [`CandidateIndex`]; rebuilds the index each call.
pub fn generate_candidates(
    kg: &KnowledgeGraph,
    mention: &Mention,
    threshold: f64,
    max_candidates: usize,
) -> Result<CandidateSet> {
    CandidateIndex::build(kg).generate(mention, threshold, max_candidates)
}

pub fn read_documents(reader: impl BufRead, source_name: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: Document = serde_json::from_str(&line)
            .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
        for m in &mut doc.mentions {
            if m.surface.trim().is_empty() {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("mention `{}` has an empty surface", m.mention_id),
                ));
            }
            m.doc_id = doc.doc_id.clone();
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn read_documents_file(path: &Path) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(std::io::BufReader::new(file), &path.display().to_string())
}

pub fn write_documents(docs: &[Document], out: &mut impl Write) -> std::io::Result<()> {
    for d in docs {
        serde_json::to_writer(&mut *out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
