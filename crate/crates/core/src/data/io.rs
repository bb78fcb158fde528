//! Line-oriented dataset files.
//!
//! * edge list: `src dst` per line
//! * subgraphs: `label<TAB>id,id,...` or the `id-id-id<TAB>label<TAB>split` layout
//! * embeddings: whitespace-separated reals, row index = node id
//! * splits: `record_index<TAB>train|val|test`
//!
//! Blank lines and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::bundle::{make_splits, DatasetBundle};
use super::protocol::Stage;
use crate::autodiff::Matrix;
use crate::error::{invalid, PsiError, Result};
use crate::graph::{Edge, GlobalGraph, NodeId, SubgraphRecord};

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> PsiError {
    PsiError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').to_string()))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect())
}

pub fn read_edge_list(path: &Path) -> Result<Vec<Edge>> {
    let mut edges = Vec::new();
    for (no, line) in content_lines(path)? {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, no, "expected two node ids"));
        };
        let u: NodeId = a
            .parse()
            .map_err(|_| parse_err(path, no, format!("bad node id '{a}'")))?;
        let v: NodeId = b
            .parse()
            .map_err(|_| parse_err(path, no, format!("bad node id '{b}'")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

/// One subgraph line before label indexing.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSubgraph {
    /// In file order.
    pub nodes: Vec<NodeId>,
    pub label: String,
    pub split: Option<Stage>,
}

pub fn read_subgraphs(path: &Path) -> Result<Vec<RawSubgraph>> {
    let lines = content_lines(path)?;
    if lines.is_empty() {
        log::warn!("{}: no subgraphs", path.display());
    }
    let mut out = Vec::with_capacity(lines.len());
    for (no, line) in lines {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let parse_ids = |s: &str, sep: char| -> Result<Vec<NodeId>> {
            s.split(sep)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse()
                        .map_err(|_| parse_err(path, no, format!("bad node id '{t}'")))
                })
                .collect()
        };
        let raw = match fields.as_slice() {
            [nodes, label, split] => RawSubgraph {
                nodes: parse_ids(nodes, '-')?,
                label: label.to_string(),
                split: Some(
                    split
                        .parse()
                        .map_err(|_| parse_err(path, no, format!("bad split '{split}'")))?,
                ),
            },
            [label, nodes] => RawSubgraph {
                nodes: parse_ids(nodes, ',')?,
                label: label.to_string(),
                split: None,
            },
            _ => {
                return Err(parse_err(
                    path,
                    no,
                    "expected 'label<TAB>ids' or 'ids<TAB>label<TAB>split'",
                ))
            }
        };
        if raw.nodes.is_empty() {
            return Err(parse_err(path, no, "subgraph without nodes"));
        }
        out.push(raw);
    }
    Ok(out)
}

pub fn read_embeddings(path: &Path) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (no, line) in content_lines(path)? {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| parse_err(path, no, format!("bad number '{t}'")))
            })
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(parse_err(
                    path,
                    no,
                    format!("{} values, expected {c}", row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

pub fn read_splits(path: &Path, num_records: usize) -> Result<Vec<Stage>> {
    let mut splits: Vec<Option<Stage>> = vec![None; num_records];
    for (no, line) in content_lines(path)? {
        let Some((idx, stage)) = line.split_once('\t') else {
            return Err(parse_err(path, no, "expected 'record_index<TAB>split'"));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(path, no, format!("bad index '{idx}'")))?;
        if idx >= num_records {
            return invalid(format!(
                "split entry for record {idx} but only {num_records} records"
            ));
        }
        splits[idx] = Some(
            stage
                .parse()
                .map_err(|_| parse_err(path, no, format!("bad split '{stage}'")))?,
        );
    }
    splits
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| PsiError::InvalidArgument(format!("record {i} has no split")))
        })
        .collect()
}

/// Maps label strings to class indices: numeric order when every label is
/// an integer, lexicographic otherwise.
pub fn index_labels(labels: &[String]) -> (Vec<usize>, Vec<String>) {
    let unique: BTreeSet<&str> = labels.iter().map(String::as_str).collect();
    let mut names: Vec<String> = unique.into_iter().map(str::to_string).collect();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    let index = labels
        .iter()
        .map(|l| {
            names
                .iter()
                .position(|n| n == l)
                .expect("label collected above")
        })
        .collect();
    (index, names)
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub name: String,
    pub edge_file: PathBuf,
    pub subgraph_file: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    /// Used when neither the subgraph file nor a split file assigns splits.
    pub split_ratios: (f64, f64, f64),
    pub split_seed: u64,
    pub symmetrize: bool,
    /// Treat each line's node order as the observation order.
    pub ordered: bool,
}

impl LoadOptions {
    /// `edge_list.txt` and `subgraphs.pth` inside `dir`.
    pub fn subgnn_dir(name: &str, dir: &Path) -> Self {
        Self {
            name: name.to_string(),
            edge_file: dir.join("edge_list.txt"),
            subgraph_file: dir.join("subgraphs.pth"),
            embeddings: None,
            split_file: None,
            split_ratios: (0.7, 0.15, 0.15),
            split_seed: 0,
            symmetrize: true,
            ordered: false,
        }
    }
}

pub fn load_dataset(opts: &LoadOptions) -> Result<DatasetBundle> {
    let edges = read_edge_list(&opts.edge_file)?;
    let raw = read_subgraphs(&opts.subgraph_file)?;
    let features = opts
        .embeddings
        .as_deref()
        .map(read_embeddings)
        .transpose()?;
    let max_id = edges
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .chain(raw.iter().flat_map(|r| r.nodes.iter().copied()))
        .max();
    let num_nodes = match &features {
        Some(f) => f.rows(),
        None => max_id.map_or(0, |m| m + 1),
    };
    if let Some(m) = max_id {
        if m >= num_nodes {
            return invalid(format!("node id {m} out of range for {num_nodes} nodes"));
        }
    }
    let graph = GlobalGraph::new(num_nodes, edges, opts.symmetrize)?;

    let before = raw.len();
    let kept: Vec<RawSubgraph> = raw
        .into_iter()
        .filter(|r| r.nodes.iter().collect::<BTreeSet<_>>().len() > 1)
        .collect();
    if kept.len() < before {
        log::info!(
            "{}: excluded {} single-node subgraphs",
            opts.name,
            before - kept.len()
        );
    }
    let labels: Vec<String> = kept.iter().map(|r| r.label.clone()).collect();
    let (label_idx, names) = index_labels(&labels);
    let mut records = Vec::with_capacity(kept.len());
    for (r, &label) in kept.iter().zip(&label_idx) {
        let mut record = SubgraphRecord::induced(&graph, r.nodes.clone(), label);
        if opts.ordered {
            let mut seen = BTreeSet::new();
            record.observation_order = Some(
                r.nodes
                    .iter()
                    .copied()
                    .filter(|v| seen.insert(*v))
                    .collect(),
            );
        }
        records.push(record);
    }
    let splits = if let Some(path) = &opts.split_file {
        read_splits(path, records.len())?
    } else if kept.iter().all(|r| r.split.is_some()) && !kept.is_empty() {
        kept.iter().map(|r| r.split.unwrap()).collect()
    } else {
        make_splits(records.len(), opts.split_ratios, opts.split_seed)?
    };
    let bundle = DatasetBundle {
        name: opts.name.clone(),
        graph,
        records,
        num_classes: names.len().max(2),
        splits,
        features,
        ordered: opts.ordered,
    };
    if !bundle.records.is_empty() {
        bundle.validate()?;
    }
    Ok(bundle)
}

/// Writes `edges.txt`, `subgraphs.txt`, `splits.txt` and, when present,
/// `embeddings.txt` into `dir`.
pub fn write_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("edges.txt"))?);
    for &(u, v) in bundle.graph.edges() {
        if u <= v || !bundle.graph.has_edge(v, u) {
            writeln!(w, "{u} {v}")?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("subgraphs.txt"))?);
    for r in &bundle.records {
        let order = r.observation_order.as_ref().unwrap_or(&r.node_ids);
        let ids: Vec<String> = order.iter().map(NodeId::to_string).collect();
        writeln!(w, "{}\t{}", r.label, ids.join(","))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("splits.txt"))?);
    for (i, s) in bundle.splits.iter().enumerate() {
        writeln!(w, "{i}\t{}", s.name())?;
    }
    w.flush()?;
    if let Some(f) = &bundle.features {
        let mut w = BufWriter::new(fs::File::create(dir.join("embeddings.txt"))?);
        for r in 0..f.rows() {
            let row: Vec<String> = f.row(r).iter().map(f64::to_string).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Reads a directory produced by [`write_bundle`].
pub fn read_bundle(name: &str, dir: &Path, ordered: bool) -> Result<DatasetBundle> {
    let embeddings = dir.join("embeddings.txt");
    let opts = LoadOptions {
        name: name.to_string(),
        edge_file: dir.join("edges.txt"),
        subgraph_file: dir.join("subgraphs.txt"),
        embeddings: embeddings.exists().then_some(embeddings),
        split_file: Some(dir.join("splits.txt")),
        split_ratios: (0.7, 0.15, 0.15),
        split_seed: 0,
        symmetrize: true,
        ordered,
    };
    load_dataset(&opts)
}
