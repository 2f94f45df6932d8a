//! Structural node embeddings: second-order biased random walks followed by
//! skip-gram training with negative sampling.
//!
//! Walk sampling seeds one ChaCha stream per walk, so the walk corpus is the
//! same whether it is sampled on one thread or many. Training itself is
//! sequential SGD and therefore bit-reproducible for a fixed seed.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkConfig {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub return_p: f64,
    pub inout_q: f64,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Threads used for walk sampling. Does not affect the result.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            dim: 64,
            walks_per_node: 10,
            walk_length: 20,
            return_p: 1.0,
            inout_q: 1.0,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 42,
            workers: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("return_p", self.return_p),
            ("inout_q", self.inout_q),
            ("learning_rate", self.learning_rate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Hash of every field that influences the trained vectors.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Picks the next node of a walk that arrived at `cur` from `prev`.
///
/// Unnormalized weights are `1/p` for returning to `prev`, `1` for
/// neighbors of `prev`, and `1/q` for everything else.
pub(crate) fn biased_step(
    kg: &KnowledgeGraph,
    prev: usize,
    cur: usize,
    p: f64,
    q: f64,
    rng: &mut impl Rng,
) -> usize {
    let nbrs = kg.neighbor_indices(cur);
    if p == 1.0 && q == 1.0 {
        return nbrs[rng.gen_range(0..nbrs.len())] as usize;
    }
    let weights: Vec<f64> = nbrs
        .iter()
        .map(|&x| {
            let x = x as usize;
            if x == prev {
                1.0 / p
            } else if kg.has_edge_idx(prev, x) {
                1.0
            } else {
                1.0 / q
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return nbrs[i] as usize;
        }
        r -= w;
    }
    *nbrs.last().expect("non-empty neighbor list") as usize
}

fn walk_from(
    kg: &KnowledgeGraph,
    start: usize,
    cfg: &WalkConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start as u32);
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().unwrap() as usize;
        if kg.neighbor_indices(cur).is_empty() {
            break;
        }
        let next = if walk.len() == 1 {
            let nbrs = kg.neighbor_indices(cur);
            nbrs[rng.gen_range(0..nbrs.len())] as usize
        } else {
            let prev = walk[walk.len() - 2] as usize;
            biased_step(kg, prev, cur, cfg.return_p, cfg.inout_q, rng)
        };
        walk.push(next as u32);
    }
    walk
}

/// Samples `walks_per_node` walks from every node. Walks hold node indices
/// of `kg`; a walk stops early only at a node without neighbors.
pub fn sample_walks(kg: &KnowledgeGraph, cfg: &WalkConfig) -> Vec<Vec<u32>> {
    let n = kg.len();
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut jobs: Vec<(u64, usize)> = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut order_rng);
        for (pos, node) in order.into_iter().enumerate() {
            jobs.push(((round * n + pos) as u64, node));
        }
    }
    let one = |&(stream, node): &(u64, usize)| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        rng.set_stream(stream);
        walk_from(kg, node, cfg, &mut rng)
    };
    if cfg.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(one).collect())
    } else {
        jobs.iter().map(one).collect()
    }
}

/// Trained vectors, one per graph node, in graph index order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    ids: Vec<EntityId>,
    index: HashMap<EntityId, usize>,
    vectors: Vec<f32>,
}

impl EmbeddingTable {
    pub fn from_vectors(dim: usize, seed: u64, rows: Vec<(EntityId, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("non-finite embedding for `{id}`")));
            }
            ids.push(id);
            vectors.extend(v);
        }
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(EmbeddingTable {
            dim,
            seed,
            ids,
            index,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn vector(&self, id: &EntityId) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn write_tsv(&self, key: &str, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# dim={} seed={} key={}", self.dim, self.seed, key)?;
        let mut line = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            line.clear();
            for (j, x) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&x.to_string());
            }
            writeln!(out, "{id}\t{line}")?;
        }
        Ok(())
    }

    /// Reads a table written by [`EmbeddingTable::write_tsv`]; returns it
    /// with the cache key recorded in its header.
    pub fn read_tsv(reader: impl BufRead, source_name: &str) -> Result<(Self, String)> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(source_name, 1, "empty embedding file"))?
            .map_err(|e| Error::parse(source_name, 1, e.to_string()))?;
        let mut dim = None;
        let mut seed = None;
        let mut key = String::new();
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("key", v)) => key = v.to_owned(),
                _ => {}
            }
        }
        let (Some(dim), Some(seed)) = (dim, seed) else {
            return Err(Error::parse(
                source_name,
                1,
                "header must record dim and seed",
            ));
        };
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, line_no, "expected `id<TAB>values`"))?;
            let v = values
                .split(',')
                .map(|x| x.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(source_name, line_no, e.to_string()))?;
            if v.len() != dim {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected {dim} values, found {}", v.len()),
                ));
            }
            rows.push((EntityId::new(id), v));
        }
        Ok((EmbeddingTable::from_vectors(dim, seed, rows)?, key))
    }
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a as f64, b as f64);
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

fn sigmoid(x: f32) -> f32 {
    if x > 8.0 {
        1.0
    } else if x < -8.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Skip-gram with negative sampling over windowed co-occurrences of `walks`.
///
/// `walks` hold indices into `kg`. The learning rate decays linearly to
/// 1e-4 of its start value over all epochs.
pub fn train_embeddings(
    kg: &KnowledgeGraph,
    walks: &[Vec<u32>],
    cfg: &WalkConfig,
) -> Result<EmbeddingTable> {
    cfg.validate()?;
    if walks.is_empty() {
        return Err(Error::Config("no walks to train on".into()));
    }
    let n = kg.len();
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f32> = (0..n * dim)
        .map(|_| (rng.gen::<f32>() - 0.5) / dim as f32)
        .collect();

    if walks.iter().all(|w| w.len() <= 1) {
        log::warn!("every walk has length 1; returning untrained random vectors");
    } else {
        let mut output = vec![0.0f32; n * dim];
        let mut counts = vec![0u64; n];
        for w in walks {
            for &x in w {
                counts[x as usize] += 1;
            }
        }
        let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
            .map_err(|e| Error::Config(format!("negative sampling table: {e}")))?;
        let total_tokens: u64 =
            walks.iter().map(|w| w.len() as u64).sum::<u64>() * cfg.epochs as u64;
        let lr0 = cfg.learning_rate as f32;
        let mut seen = 0u64;
        let mut grad = vec![0.0f32; dim];

        for _ in 0..cfg.epochs {
            for walk in walks {
                for (i, &target) in walk.iter().enumerate() {
                    let lr = lr0 * (1.0 - seen as f32 / total_tokens as f32).max(1e-4);
                    seen += 1;
                    let shrink = rng.gen_range(0..cfg.window);
                    let reach = cfg.window - shrink;
                    let lo = i.saturating_sub(reach);
                    let hi = (i + reach).min(walk.len() - 1);
                    for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                        if j == i {
                            continue;
                        }
                        let ctx = &mut input[context as usize * dim..(context as usize + 1) * dim];
                        grad.iter_mut().for_each(|g| *g = 0.0);
                        for d in 0..=cfg.negatives {
                            let (sample, label) = if d == 0 {
                                (target as usize, 1.0f32)
                            } else {
                                let s = noise.sample(&mut rng);
                                if s == target as usize {
                                    continue;
                                }
                                (s, 0.0)
                            };
                            let out = &mut output[sample * dim..(sample + 1) * dim];
                            let f: f32 = ctx.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                            let g = (label - sigmoid(f)) * lr;
                            for k in 0..dim {
                                grad[k] += g * out[k];
                                out[k] += g * ctx[k];
                            }
                        }
                        for k in 0..dim {
                            ctx[k] += grad[k];
                        }
                    }
                }
            }
        }
    }

    let rows = kg
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| (node.id.clone(), input[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    EmbeddingTable::from_vectors(dim, cfg.seed, rows)
}

/// Cache key for a graph and walk configuration.
pub fn cache_key(kg: &KnowledgeGraph, cfg: &WalkConfig) -> String {
    let mut h = Sha256::new();
    h.update(kg.content_hash().as_bytes());
    h.update(cfg.fingerprint().as_bytes());
    hex::encode(h.finalize())
}

/// Loads vectors from `path` if its header key matches, else trains and
/// writes them there. The flag is true on a cache hit.
pub fn train_or_load(
    kg: &KnowledgeGraph,
    cfg: &WalkConfig,
    path: &Path,
) -> Result<(EmbeddingTable, bool)> {
    let key = cache_key(kg, cfg);
    if let Ok(file) = std::fs::File::open(path) {
        match EmbeddingTable::read_tsv(std::io::BufReader::new(file), &path.display().to_string()) {
            Ok((table, cached_key)) if cached_key == key && table.len() == kg.len() => {
                log::info!("cache hit: {}", path.display());
                return Ok((table, true));
            }
            Ok(_) => log::info!("cache stale: {}", path.display()),
            Err(e) => log::warn!("ignoring unreadable cache: {e}"),
        }
    }
    let walks = sample_walks(kg, cfg);
    let table = train_embeddings(kg, &walks, cfg)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    table
        .write_tsv(&key, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))?;
    Ok((table, false))
}
