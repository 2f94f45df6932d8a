//! Seeded synthetic corpora with planted gold structure.
//!
//! Each mention's surface is a random base string. Its gold entity and its
//! distractors carry labels that differ from the base by one substitution
//! each, at distinct positions past the Winkler prefix, so every candidate
//! matches the surface equally well and only the graph can separate them.
//! The gold entities of a document form a clique; distractors have no
//! edges. Noise drops clique edges and wires distractors to the other
//! mentions' candidates, at most one edge per other mention, so at full
//! noise a distractor is as well connected as a gold entity. Background
//! filler nodes use a disjoint alphabet.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{write_documents, Document, Mention};
use crate::error::{Error, Result};
use crate::kg::{EntityId, EntityNode, KnowledgeGraph};

const LABEL_ALPHABET: &[u8] = b"abcdefghijklm";
const FILLER_ALPHABET: &[u8] = b"nopqrstuvwxyz";
/// Substitutions start here so every label keeps the same Winkler prefix.
const FIRST_EDIT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub docs: usize,
    pub mentions_per_doc: usize,
    pub candidates_per_mention: usize,
    pub filler_nodes: usize,
    /// Random filler-to-filler edges per filler node.
    pub filler_degree: usize,
    pub label_len: usize,
    /// In [0, 1]: probability of dropping each gold clique edge, and of
    /// linking a distractor to a random candidate of each other mention.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            docs: 50,
            mentions_per_doc: 4,
            candidates_per_mention: 4,
            filler_nodes: 200,
            filler_degree: 2,
            label_len: 12,
            noise: 0.0,
            seed: 42,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        if self.docs == 0 || self.mentions_per_doc == 0 || self.candidates_per_mention == 0 {
            return Err(Error::Config(
                "docs, mentions and candidates must be positive".into(),
            ));
        }
        if self.label_len < FIRST_EDIT + self.candidates_per_mention {
            return Err(Error::Config(format!(
                "label_len must be at least {} for {} candidates per mention",
                FIRST_EDIT + self.candidates_per_mention,
                self.candidates_per_mention
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!(
                "noise must be in [0, 1], got {}",
                self.noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub kg: KnowledgeGraph,
    pub documents: Vec<Document>,
}

impl SyntheticCorpus {
    /// Writes `nodes.tsv`, `edges.tsv` and `documents.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| Error::io(&path, e))
        };
        let (mut nodes, mut edges, mut docs) = (
            create("nodes.tsv")?,
            create("edges.tsv")?,
            create("documents.jsonl")?,
        );
        let io = |e| Error::io(dir, e);
        self.kg.write_tsv(&mut nodes, &mut edges).map_err(io)?;
        write_documents(&self.documents, &mut docs).map_err(io)?;
        for w in [&mut nodes, &mut edges, &mut docs] {
            w.flush().map_err(io)?;
        }
        Ok(())
    }
}

fn random_word(rng: &mut ChaCha8Rng, alphabet: &[u8], len: usize) -> Vec<u8> {
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

fn substitute(rng: &mut ChaCha8Rng, base: &[u8], pos: usize) -> Vec<u8> {
    let mut out = base.to_vec();
    while out[pos] == base[pos] {
        out[pos] = *LABEL_ALPHABET.choose(rng).unwrap();
    }
    out
}

pub fn generate_synthetic(params: &SyntheticParams) -> Result<SyntheticCorpus> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_cands = params.docs * params.mentions_per_doc * params.candidates_per_mention;
    let total = n_cands + params.filler_nodes;
    // shuffled ids so the id tie-break carries no signal
    let mut id_of: Vec<usize> = (0..total).collect();
    id_of.shuffle(&mut rng);
    let width = total.to_string().len();
    let ids: Vec<EntityId> = id_of
        .iter()
        .map(|i| EntityId::new(format!("Q{i:0width$}")))
        .collect();

    let mut labels: Vec<String> = Vec::with_capacity(total);
    let mut used: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut documents = Vec::with_capacity(params.docs);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let c = params.candidates_per_mention;
    let positions: Vec<usize> = (FIRST_EDIT..params.label_len).collect();

    for d in 0..params.docs {
        let mut mentions = Vec::with_capacity(params.mentions_per_doc);
        let doc_base = d * params.mentions_per_doc * c;
        for m in 0..params.mentions_per_doc {
            let surface = loop {
                let w = random_word(&mut rng, LABEL_ALPHABET, params.label_len);
                if used.insert(w.clone()) {
                    break w;
                }
            };
            let mut pos = positions.clone();
            pos.shuffle(&mut rng);
            for &p in pos.iter().take(c) {
                let label = loop {
                    let l = substitute(&mut rng, &surface, p);
                    if used.insert(l.clone()) {
                        break l;
                    }
                };
                labels.push(String::from_utf8(label).expect("ascii"));
            }
            // the first candidate of each mention is gold
            let gold = doc_base + m * c;
            mentions.push(Mention {
                mention_id: format!("m{m}"),
                surface: String::from_utf8(surface).expect("ascii"),
                doc_id: format!("doc{d:04}"),
                gold: Some(ids[gold].clone()),
            });
        }
        for a in 0..params.mentions_per_doc {
            for b in a + 1..params.mentions_per_doc {
                if !rng.gen_bool(params.noise) {
                    edges.push((doc_base + a * c, doc_base + b * c));
                }
            }
        }
        for a in 0..params.mentions_per_doc {
            for j in 1..c {
                let distractor = doc_base + a * c + j;
                for b in (0..params.mentions_per_doc).filter(|&b| b != a) {
                    if rng.gen_bool(params.noise) {
                        edges.push((distractor, doc_base + b * c + rng.gen_range(0..c)));
                    }
                }
            }
        }
        documents.push(Document {
            doc_id: format!("doc{d:04}"),
            mentions,
        });
    }

    for _ in 0..params.filler_nodes {
        let len = params.label_len;
        labels.push(String::from_utf8(random_word(&mut rng, FILLER_ALPHABET, len)).expect("ascii"));
    }
    if params.filler_nodes > 1 {
        for f in 0..params.filler_nodes {
            for _ in 0..params.filler_degree {
                let g = rng.gen_range(0..params.filler_nodes);
                if g != f {
                    edges.push((n_cands + f, n_cands + g));
                }
            }
        }
    }
    if params.filler_nodes > 0 {
        // one filler neighbour per gold node keeps the graph in one piece
        for gold in (0..n_cands).step_by(c) {
            edges.push((gold, n_cands + rng.gen_range(0..params.filler_nodes)));
        }
    }

    let nodes = (0..total)
        .map(|i| EntityNode {
            id: ids[i].clone(),
            label: labels[i].clone(),
            aliases: Vec::new(),
        })
        .collect();
    let (kg, _) = KnowledgeGraph::from_records(
        nodes,
        edges
            .into_iter()
            .map(|(a, b)| (ids[a].clone(), ids[b].clone())),
    )?;
    Ok(SyntheticCorpus { kg, documents })
}
