//! Whitespace-separated edge lists and `node<TAB>block` partition files.
//!
//! Graph Challenge files number nodes (and blocks) from 1; pass
//! `one_based = true` to shift them to dense 0-based ids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeListStats, Graph, NodeId, Partition};
use crate::sbmgen::StreamStep;

fn parse_id(tok: &str, one_based: bool, path: &Path, line: usize) -> Result<usize> {
    let raw: i64 = tok.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("not an integer: {tok:?}"),
    })?;
    let id = if one_based { raw - 1 } else { raw };
    if id < 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("negative node id {raw}"),
        });
    }
    Ok(id as usize)
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(path, e)))))
}

/// Reads an edge list. A third column, if present on any line, makes the
/// graph weighted (lines without it get weight 1).
pub fn read_edge_list(
    path: &Path,
    one_based: bool,
    n_hint: Option<usize>,
) -> Result<(Graph, EdgeListStats)> {
    let mut pairs = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut weighted = false;
    for (lineno, line) in lines(path)? {
        let line = line?;
        let mut toks = line.split_whitespace();
        let Some(a) = toks.next() else { continue };
        if a.starts_with('#') || a.starts_with('%') {
            continue;
        }
        let b = toks.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: "expected two node ids".into(),
        })?;
        let u = parse_id(a, one_based, path, lineno)?;
        let v = parse_id(b, one_based, path, lineno)?;
        let w = match toks.next() {
            Some(t) => {
                weighted = true;
                t.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("bad weight {t:?}"),
                })?
            }
            None => 1.0,
        };
        pairs.push((u, v));
        weights.push(w);
    }
    if weighted {
        let n = match (pairs.iter().map(|&(u, v)| u.max(v)).max(), n_hint) {
            (_, Some(n)) => n,
            (Some(m), None) => m + 1,
            (None, None) => return Err(Error::input("empty edge list and no node count given")),
        };
        let triples: Vec<_> = pairs
            .iter()
            .zip(&weights)
            .map(|(&(u, v), &w)| (u, v, w))
            .collect();
        Ok((Graph::from_weighted_edges(n, &triples)?, EdgeListStats::default()))
    } else {
        Graph::from_edge_list_counted(&pairs, n_hint)
    }
}

pub fn write_edge_list(path: &Path, g: &Graph, one_based: bool) -> Result<()> {
    let off = usize::from(one_based);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for (i, j, w) in g.edges() {
            let (i, j) = (i as usize + off, j as usize + off);
            if g.is_weighted() {
                writeln!(out, "{i}\t{j}\t{w}")?;
            } else {
                writeln!(out, "{i}\t{j}")?;
            }
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Reads `node<TAB>block` lines. Every node in `0..n` must appear exactly
/// once; block ids are compacted preserving their order.
pub fn read_partition(path: &Path, one_based: bool) -> Result<Partition> {
    let mut rows: Vec<(usize, i64)> = Vec::new();
    for (lineno, line) in lines(path)? {
        let line = line?;
        let mut toks = line.split_whitespace();
        let Some(a) = toks.next() else { continue };
        if a.starts_with('#') {
            continue;
        }
        let b = toks.next().ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: "expected node and block id".into(),
        })?;
        let v = parse_id(a, one_based, path, lineno)?;
        let blk: i64 = b.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("not an integer: {b:?}"),
        })?;
        rows.push((v, blk));
    }
    let n = rows.len();
    let mut labels = vec![None; n];
    for &(v, b) in &rows {
        if v >= n {
            return Err(Error::input(format!(
                "{}: node {v} outside 0..{n}",
                path.display()
            )));
        }
        if labels[v].replace(b).is_some() {
            return Err(Error::input(format!("{}: node {v} listed twice", path.display())));
        }
    }
    let labels: Vec<i64> = labels.into_iter().map(Option::unwrap).collect();
    Ok(Partition::from_labels(&labels))
}

pub fn write_partition(path: &Path, p: &Partition, one_based: bool) -> Result<()> {
    let off = usize::from(one_based);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for (v, &b) in p.assign().iter().enumerate() {
            writeln!(out, "{}\t{}", v + off, b as usize + off)?;
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Index of a snowball stream written to a directory. File names are
/// relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    pub schema_version: u32,
    pub one_based: bool,
    pub steps: Vec<ManifestStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestStep {
    pub t: usize,
    pub n: usize,
    pub m: usize,
    pub graph: String,
    pub truth: String,
    /// Original id of every step-local node, one per line.
    pub nodes: String,
}

fn write_ids(path: &Path, ids: &[NodeId], one_based: bool) -> Result<()> {
    let off = u64::from(one_based);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for &v in ids {
            writeln!(out, "{}", v as u64 + off)?;
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn read_ids(path: &Path, one_based: bool) -> Result<Vec<NodeId>> {
    let mut ids = Vec::new();
    for (lineno, line) in lines(path)? {
        let line = line?;
        let tok = line.trim();
        if tok.is_empty() || tok.starts_with('#') {
            continue;
        }
        ids.push(parse_id(tok, one_based, path, lineno)? as NodeId);
    }
    Ok(ids)
}

/// Writes every step's graph, truth and node map plus `manifest.json`;
/// returns the manifest path.
pub fn write_stream(dir: &Path, steps: &[StreamStep], one_based: bool) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(steps.len());
    for s in steps {
        let entry = ManifestStep {
            t: s.t,
            n: s.graph.n(),
            m: s.graph.num_edges(),
            graph: format!("step{:03}.edges.tsv", s.t),
            truth: format!("step{:03}.truth.tsv", s.t),
            nodes: format!("step{:03}.nodes.txt", s.t),
        };
        write_edge_list(&dir.join(&entry.graph), &s.graph, one_based)?;
        write_partition(&dir.join(&entry.truth), &s.truth, one_based)?;
        write_ids(&dir.join(&entry.nodes), &s.nodes, one_based)?;
        entries.push(entry);
    }
    let manifest = StreamManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        one_based,
        steps: entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_stream_manifest(path: &Path) -> Result<StreamManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m: StreamManifest = serde_json::from_slice(&bytes)?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::input(format!(
            "manifest schema {} unsupported",
            m.schema_version
        )));
    }
    Ok(m)
}

/// Loads the step graphs of a manifest (truth files are read on demand by
/// callers that need them).
pub fn read_stream_graphs(manifest_path: &Path) -> Result<(StreamManifest, Vec<Graph>)> {
    let m = read_stream_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let graphs = m
        .steps
        .iter()
        .map(|s| read_edge_list(&dir.join(&s.graph), m.one_based, Some(s.n)).map(|(g, _)| g))
        .collect::<Result<_>>()?;
    Ok((m, graphs))
}

/// Writes `g000.edges.tsv` / `g000.truth.tsv` pairs.
pub fn write_corpus(dir: &Path, corpus: &[(Graph, Partition)], one_based: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, (g, t)) in corpus.iter().enumerate() {
        write_edge_list(&dir.join(format!("g{i:03}.edges.tsv")), g, one_based)?;
        write_partition(&dir.join(format!("g{i:03}.truth.tsv")), t, one_based)?;
    }
    Ok(())
}

/// Reads every `*.edges.tsv` in `dir` (sorted by name) with its matching
/// `*.truth.tsv`.
pub fn read_corpus(dir: &Path, one_based: bool) -> Result<Vec<(Graph, Partition)>> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".edges.tsv"))
        .collect();
    names.sort();
    names
        .iter()
        .map(|name| {
            let stem = name.trim_end_matches(".edges.tsv");
            let truth = read_partition(&dir.join(format!("{stem}.truth.tsv")), one_based)?;
            let (g, _) = read_edge_list(&dir.join(name), one_based, Some(truth.n()))?;
            Ok((g, truth))
        })
        .collect()
}
