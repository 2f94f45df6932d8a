use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gstned::candidates::{read_documents_file, Document};
use gstned::embeddings::{cache_key, train_or_load, EmbeddingTable};
use gstned::eval::{
    compare_schemes, evaluate, gold_map, grid, pivot_table, read_jsonl, sweep as run_sweep,
    write_jsonl, write_sweep_tsv, EvalOptions, MentionTrace,
};
use gstned::kg::{load_kg_files, KnowledgeGraph};
use gstned::pipeline::Linker;
use gstned::rank::RankedCandidates;
use gstned::synthetic::{generate_synthetic, SyntheticParams};
use gstned::{Error, Result};
use log::info;

use crate::config::CliConfig;

const NODES: &str = "nodes.tsv";
const EDGES: &str = "edges.tsv";
const EMBEDDINGS: &str = "embeddings.tsv";

/// `rankings.jsonl` becomes `rankings.gst.jsonl`.
pub fn trace_path(rankings: &Path) -> PathBuf {
    let stem = rankings
        .file_stem()
        .map_or_else(|| "rankings".into(), |s| s.to_string_lossy().into_owned());
    rankings.with_file_name(format!("{stem}.gst.jsonl"))
}

fn write_file(
    path: &Path,
    fill: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))?;
    fill(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn index(cfg: &CliConfig) -> Result<()> {
    let nodes = CliConfig::require(&cfg.nodes, "nodes")?;
    let edges = CliConfig::require(&cfg.edges, "edges")?;
    let (kg, report) = load_kg_files(nodes, edges)?;
    info!(
        "loaded {} entities and {} edges ({} self-loops, {} duplicate edges, {} redundant aliases dropped)",
        kg.len(),
        kg.edge_count(),
        report.self_loops,
        report.duplicate_edges,
        report.redundant_aliases
    );
    let dir = &cfg.index_dir;
    let (mut node_buf, mut edge_buf) = (Vec::new(), Vec::new());
    kg.write_tsv(&mut node_buf, &mut edge_buf)
        .map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in [(NODES, node_buf), (EDGES, edge_buf)] {
        write_file(&dir.join(name), |w| w.write_all(&bytes))?;
    }
    let started = Instant::now();
    let (emb, hit) = train_or_load(&kg, &cfg.pipeline.walk_config(), &dir.join(EMBEDDINGS))?;
    if !hit {
        info!(
            "trained {} vectors in {:.1}s",
            emb.len(),
            started.elapsed().as_secs_f64()
        );
    }
    cfg.echo(dir)?;
    info!("index written to {}", dir.display());
    Ok(())
}

fn load_index(cfg: &CliConfig) -> Result<(KnowledgeGraph, EmbeddingTable)> {
    let dir = &cfg.index_dir;
    let emb_path = dir.join(EMBEDDINGS);
    if !dir.join(NODES).is_file() || !emb_path.is_file() {
        return Err(Error::Config(format!(
            "no index found in {}; run `gstned index` first",
            dir.display()
        )));
    }
    let (kg, _) = load_kg_files(&dir.join(NODES), &dir.join(EDGES))?;
    let file = File::open(&emb_path).map_err(|e| Error::io(&emb_path, e))?;
    let (emb, key) =
        EmbeddingTable::read_tsv(BufReader::new(file), &emb_path.display().to_string())?;
    if key != cache_key(&kg, &cfg.pipeline.walk_config()) {
        return Err(Error::Config(format!(
            "the index in {} was built with different embedding settings or seed; rerun `gstned index`",
            dir.display()
        )));
    }
    Ok((kg, emb))
}

fn load_documents(cfg: &CliConfig) -> Result<Vec<Document>> {
    let docs = read_documents_file(CliConfig::require(&cfg.documents, "documents")?)?;
    info!("read {} documents", docs.len());
    Ok(docs)
}

pub fn link(cfg: &CliConfig) -> Result<()> {
    let (kg, emb) = load_index(cfg)?;
    let docs = load_documents(cfg)?;
    let linker = Linker::new(&kg, &emb, cfg.pipeline.clone())?;
    let started = Instant::now();
    let (rankings, traces) = linker.link_all(&docs)?;
    info!(
        "linked {} mentions in {:.2}s",
        rankings.len(),
        started.elapsed().as_secs_f64()
    );
    let out = cfg.output_dir.join("rankings.jsonl");
    write_file(&out, |w| write_jsonl(&rankings, w))?;
    write_file(&trace_path(&out), |w| write_jsonl(&traces, w))?;
    cfg.echo(&cfg.output_dir)?;
    info!("rankings written to {}", out.display());
    Ok(())
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn eval(cfg: &CliConfig, rankings: &Path, traces: &Path, exclude_exact: bool) -> Result<()> {
    let gold = gold_map(&load_documents(cfg)?);
    let rankings: Vec<RankedCandidates> = read_records(rankings)?;
    let traces: Vec<MentionTrace> = read_records(traces)?;
    let report = evaluate(&rankings, &traces, &gold, EvalOptions { exclude_exact })?;
    print!("{}", report.table());
    let path = cfg.output_dir.join("eval.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })
}

pub fn compare(cfg: &CliConfig) -> Result<()> {
    let (kg, emb) = load_index(cfg)?;
    let docs = load_documents(cfg)?;
    let linker = Linker::new(&kg, &emb, cfg.pipeline.clone())?;
    let analyses = linker.analyze_all(&docs)?;
    let table = compare_schemes(&analyses, &gold_map(&docs))?.table();
    print!("{table}");
    write_file(&cfg.output_dir.join("schemes.txt"), |w| {
        w.write_all(table.as_bytes())
    })?;
    cfg.echo(&cfg.output_dir)
}

pub fn sweep(cfg: &CliConfig) -> Result<()> {
    let (kg, emb) = load_index(cfg)?;
    let docs = load_documents(cfg)?;
    let linker = Linker::new(&kg, &emb, cfg.pipeline.clone())?;
    let s = &cfg.sweep;
    let points = grid(&s.thresholds, &s.ks, &s.schemes);
    let rows = run_sweep(
        &linker,
        &docs,
        &points,
        s.held_out_fraction,
        cfg.pipeline.seed,
    )?;
    for &scheme in &s.schemes {
        println!("P@1 for {scheme} (rows: threshold, columns: k)");
        print!("{}", pivot_table(&rows, scheme));
    }
    let path = cfg.output_dir.join("sweep.tsv");
    write_file(&path, |w| write_sweep_tsv(&rows, w))?;
    cfg.echo(&cfg.output_dir)?;
    info!("{} sweep rows written to {}", rows.len(), path.display());
    Ok(())
}

pub fn synth(params: &SyntheticParams, out: &Path) -> Result<()> {
    let corpus = generate_synthetic(params)?;
    corpus.write(out)?;
    info!(
        "wrote {} entities and {} documents to {}",
        corpus.kg.len(),
        corpus.documents.len(),
        out.display()
    );
    Ok(())
}
