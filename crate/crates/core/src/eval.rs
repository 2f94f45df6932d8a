//! Precision@1, Hit@5, candidate recall, the error taxonomy, and sweeps.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::candidates::{Document, MentionKey};
use crate::error::{Error, Result};
use crate::kg::EntityId;
use crate::pipeline::{DocumentAnalysis, Linker, PipelineConfig};
use crate::rank::{NodeWeightMode, RankedCandidates, Scheme};

/// Per-mention facts the ranking record does not carry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionTrace {
    pub doc_id: String,
    pub mention_id: String,
    pub exact_match: bool,
    /// Candidates present in at least one returned tree.
    pub in_trees: Vec<EntityId>,
}

impl MentionTrace {
    pub fn key(&self) -> MentionKey {
        MentionKey {
            doc_id: self.doc_id.clone(),
            mention_id: self.mention_id.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GoldNotInCandidates,
    GoldNotInTopkGsts,
    GoldInGstsNotTop1,
    Correct,
}

/// Assigns one mention to exactly one outcome.
pub fn classify(ranking: &RankedCandidates, trace: &MentionTrace, gold: &EntityId) -> Outcome {
    if ranking.position(gold).is_none() {
        Outcome::GoldNotInCandidates
    } else if ranking.top() == Some(gold) {
        Outcome::Correct
    } else if !trace.in_trees.contains(gold) {
        Outcome::GoldNotInTopkGsts
    } else {
        Outcome::GoldInGstsNotTop1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub gold_not_in_candidates: f64,
    pub gold_not_in_topk_gsts: f64,
    pub gold_in_gsts_not_top1: f64,
    pub correct: f64,
}

impl ErrorBreakdown {
    pub fn total(&self) -> f64 {
        self.gold_not_in_candidates
            + self.gold_not_in_topk_gsts
            + self.gold_in_gsts_not_top1
            + self.correct
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision_at_1: f64,
    pub hit_at_5: f64,
    pub candidate_recall: f64,
    pub error_breakdown: ErrorBreakdown,
    pub n_mentions: usize,
}

impl EvalReport {
    pub fn table(&self) -> String {
        let b = &self.error_breakdown;
        let mut out = String::new();
        let rows = [
            ("mentions", self.n_mentions.to_string()),
            ("precision@1", format!("{:.4}", self.precision_at_1)),
            ("hit@5", format!("{:.4}", self.hit_at_5)),
            ("candidate recall", format!("{:.4}", self.candidate_recall)),
            (
                "(a) gold not in candidates",
                format!("{:.4}", b.gold_not_in_candidates),
            ),
            (
                "(b) gold not in top-k trees",
                format!("{:.4}", b.gold_not_in_topk_gsts),
            ),
            (
                "(c) gold in trees, not top-1",
                format!("{:.4}", b.gold_in_gsts_not_top1),
            ),
            ("correct", format!("{:.4}", b.correct)),
        ];
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<30} {value:>8}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Leave exact-match mentions out of every metric.
    pub exclude_exact: bool,
}

/// Gold entity per mention, for mentions that have one.
pub fn gold_map(docs: &[Document]) -> BTreeMap<MentionKey, EntityId> {
    docs.iter()
        .flat_map(|d| {
            d.mentions.iter().filter_map(move |m| {
                m.gold.clone().map(|g| {
                    (
                        MentionKey {
                            doc_id: d.doc_id.clone(),
                            mention_id: m.mention_id.clone(),
                        },
                        g,
                    )
                })
            })
        })
        .collect()
}

/// Micro-averaged metrics over every gold mention.
pub fn evaluate(
    rankings: &[RankedCandidates],
    traces: &[MentionTrace],
    gold: &BTreeMap<MentionKey, EntityId>,
    opts: EvalOptions,
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::Eval(
            "evaluation needs gold annotations, and none were found".into(),
        ));
    }
    let by_key: HashMap<MentionKey, &RankedCandidates> = rankings
        .iter()
        .map(|r| {
            (
                MentionKey {
                    doc_id: r.doc_id.clone(),
                    mention_id: r.mention_id.clone(),
                },
                r,
            )
        })
        .collect();
    let trace_by_key: HashMap<MentionKey, &MentionTrace> =
        traces.iter().map(|t| (t.key(), t)).collect();

    let mut counts: BTreeMap<Outcome, usize> = BTreeMap::new();
    let (mut hits5, mut recalled, mut n) = (0usize, 0usize, 0usize);
    for (key, g) in gold {
        let ranking = by_key.get(key).ok_or_else(|| {
            Error::Eval(format!(
                "no ranking for mention `{}` of document `{}`",
                key.mention_id, key.doc_id
            ))
        })?;
        let trace = trace_by_key.get(key).ok_or_else(|| {
            Error::Eval(format!(
                "no trace for mention `{}` of document `{}`",
                key.mention_id, key.doc_id
            ))
        })?;
        if opts.exclude_exact && trace.exact_match {
            continue;
        }
        n += 1;
        let pos = ranking.position(g);
        hits5 += usize::from(pos.is_some_and(|p| p < 5));
        recalled += usize::from(pos.is_some());
        *counts.entry(classify(ranking, trace, g)).or_default() += 1;
    }
    if n == 0 {
        return Err(Error::Eval("no gold mentions left to evaluate".into()));
    }
    let share = |o: Outcome| counts.get(&o).copied().unwrap_or(0) as f64 / n as f64;
    let breakdown = ErrorBreakdown {
        gold_not_in_candidates: share(Outcome::GoldNotInCandidates),
        gold_not_in_topk_gsts: share(Outcome::GoldNotInTopkGsts),
        gold_in_gsts_not_top1: share(Outcome::GoldInGstsNotTop1),
        correct: share(Outcome::Correct),
    };
    Ok(EvalReport {
        precision_at_1: breakdown.correct,
        hit_at_5: hits5 as f64 / n as f64,
        candidate_recall: recalled as f64 / n as f64,
        error_breakdown: breakdown,
        n_mentions: n,
    })
}

pub fn write_jsonl<T: Serialize>(items: &[T], out: &mut impl Write) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead, source_name: &str) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::parse(source_name, i + 1, e.to_string()))?,
        );
    }
    Ok(items)
}

/// Indices of a seeded `fraction` of `n` documents, ascending. At least one
/// document is always chosen.
pub fn held_out_split(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "held-out fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    let mut chosen = idx[..take].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub k: usize,
    pub scheme: Scheme,
}

/// Every combination of the given axes, thresholds outermost.
pub fn grid(thresholds: &[f64], ks: &[usize], schemes: &[Scheme]) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &threshold in thresholds {
        for &k in ks {
            for &scheme in schemes {
                out.push(SweepPoint {
                    threshold,
                    k,
                    scheme,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub report: EvalReport,
}

/// Runs the pipeline once per grid point on a seeded held-out split.
/// Points sharing threshold and k share one solve.
pub fn sweep(
    linker: &Linker<'_>,
    docs: &[Document],
    points: &[SweepPoint],
    held_out_fraction: f64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::Config("the sweep grid is empty".into()));
    }
    let held: Vec<Document> = held_out_split(docs.len(), held_out_fraction, seed)?
        .into_iter()
        .map(|i| docs[i].clone())
        .collect();
    let gold = gold_map(&held);
    let mut solved: Vec<((u64, usize), Vec<DocumentAnalysis>)> = Vec::new();
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let key = (p.threshold.to_bits(), p.k);
        let pos = match solved.iter().position(|(k, _)| *k == key) {
            Some(pos) => pos,
            None => {
                let cfg = PipelineConfig {
                    fuzzy_threshold: p.threshold,
                    k: p.k,
                    ..linker.config().clone()
                };
                solved.push((key, linker.with_config(cfg)?.analyze_all(&held)?));
                solved.len() - 1
            }
        };
        let analyses = &solved[pos].1;
        let report = report_for(analyses, &gold, p.scheme, linker.config().node_weight_mode)?;
        rows.push(SweepRow { point: *p, report });
    }
    Ok(rows)
}

fn report_for(
    analyses: &[DocumentAnalysis],
    gold: &BTreeMap<MentionKey, EntityId>,
    scheme: Scheme,
    mode: NodeWeightMode,
) -> Result<EvalReport> {
    let rankings: Vec<RankedCandidates> =
        analyses.iter().flat_map(|a| a.rank(scheme, mode)).collect();
    let traces: Vec<MentionTrace> = analyses.iter().flat_map(|a| a.traces()).collect();
    evaluate(&rankings, &traces, gold, EvalOptions::default())
}

pub const SWEEP_HEADER: &str =
    "threshold\tk\tscheme\tmentions\tprecision_at_1\thit_at_5\tcandidate_recall\tgold_not_in_candidates\tgold_not_in_topk_gsts\tgold_in_gsts_not_top1";

pub fn write_sweep_tsv(rows: &[SweepRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let b = &r.report.error_breakdown;
        writeln!(
            out,
            "{:.2}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.point.threshold,
            r.point.k,
            r.point.scheme,
            r.report.n_mentions,
            r.report.precision_at_1,
            r.report.hit_at_5,
            r.report.candidate_recall,
            b.gold_not_in_candidates,
            b.gold_not_in_topk_gsts,
            b.gold_in_gsts_not_top1,
        )?;
    }
    Ok(())
}

/// Precision@1 pivoted with thresholds as rows and k values as columns,
/// for one scheme.
pub fn pivot_table(rows: &[SweepRow], scheme: Scheme) -> String {
    let mut thresholds: Vec<f64> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for r in rows.iter().filter(|r| r.point.scheme == scheme) {
        if !thresholds.contains(&r.point.threshold) {
            thresholds.push(r.point.threshold);
        }
        if !ks.contains(&r.point.k) {
            ks.push(r.point.k);
        }
    }
    let mut out = String::from("threshold");
    for k in &ks {
        let _ = write!(out, "\tk={k}");
    }
    out.push('\n');
    for t in &thresholds {
        let _ = write!(out, "{t:.2}");
        for k in &ks {
            let cell = rows
                .iter()
                .find(|r| r.point.scheme == scheme && r.point.threshold == *t && r.point.k == *k)
                .map_or("-".to_string(), |r| {
                    format!("{:.3}", r.report.precision_at_1)
                });
            let _ = write!(out, "\t{cell}");
        }
        out.push('\n');
    }
    out
}

/// A ranking variant compared by [`compare_schemes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Variant {
    pub scheme: Scheme,
    pub mode: NodeWeightMode,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant {
            scheme: Scheme::GstCount,
            mode: NodeWeightMode::TreeTotal,
        },
        Variant {
            scheme: Scheme::GstCost,
            mode: NodeWeightMode::TreeTotal,
        },
        Variant {
            scheme: Scheme::NodeWeight,
            mode: NodeWeightMode::TreeTotal,
        },
        Variant {
            scheme: Scheme::NodeWeight,
            mode: NodeWeightMode::CandidateOnly,
        },
    ];

    pub fn label(&self) -> String {
        match (self.scheme, self.mode) {
            (Scheme::NodeWeight, NodeWeightMode::CandidateOnly) => {
                "NodeWeight(candidate-only)".into()
            }
            (s, _) => s.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeComparison {
    pub rows: Vec<(String, EvalReport)>,
    /// Mentions where one candidate sits in every tree and the rest in none.
    pub unanimous_mentions: usize,
    /// Of those, mentions every variant ranks that candidate first.
    pub unanimous_agreed: usize,
}

impl SchemeComparison {
    pub fn table(&self) -> String {
        let mut out = String::from("scheme\tprecision_at_1\thit_at_5\tcandidate_recall\n");
        for (label, r) in &self.rows {
            let _ = writeln!(
                out,
                "{label}\t{:.4}\t{:.4}\t{:.4}",
                r.precision_at_1, r.hit_at_5, r.candidate_recall
            );
        }
        let _ = writeln!(
            out,
            "unanimous mentions\t{}\tagreed\t{}",
            self.unanimous_mentions, self.unanimous_agreed
        );
        out
    }
}

/// Evaluates every ranking variant over one set of solved documents.
pub fn compare_schemes(
    analyses: &[DocumentAnalysis],
    gold: &BTreeMap<MentionKey, EntityId>,
) -> Result<SchemeComparison> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        rows.push((v.label(), report_for(analyses, gold, v.scheme, v.mode)?));
    }
    let mut unanimous_mentions = 0;
    let mut unanimous_agreed = 0;
    for a in analyses {
        let tops: Vec<HashMap<String, EntityId>> = Variant::ALL
            .iter()
            .map(|v| {
                a.rank(v.scheme, v.mode)
                    .into_iter()
                    .filter_map(|r| r.top().cloned().map(|t| (r.mention_id, t)))
                    .collect()
            })
            .collect();
        for w in &a.windows {
            let Some(sol) = &w.solution else { continue };
            if sol.trees.is_empty() {
                continue;
            }
            for set in &w.sets {
                let in_all: Vec<&EntityId> = set
                    .candidates
                    .iter()
                    .map(|c| &c.entity)
                    .filter(|e| sol.trees.iter().all(|t| t.contains(e)))
                    .collect();
                let in_none = set
                    .candidates
                    .iter()
                    .filter(|c| sol.trees.iter().all(|t| !t.contains(&c.entity)))
                    .count();
                if set.candidates.len() < 2
                    || in_all.len() != 1
                    || in_none + 1 != set.candidates.len()
                {
                    continue;
                }
                unanimous_mentions += 1;
                let agreed = tops
                    .iter()
                    .all(|t| t.get(&set.mention.mention_id) == Some(in_all[0]));
                unanimous_agreed += usize::from(agreed);
            }
        }
    }
    Ok(SchemeComparison {
        rows,
        unanimous_mentions,
        unanimous_agreed,
    })
}
