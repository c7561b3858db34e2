//! SNAP-style edge-list and community-file ingestion.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::{Graph, GraphDataset};
use crate::error::{Error, Result};

fn parse_id(tok: &str, path: &Path, line: usize) -> Result<u64> {
    tok.parse::<u64>().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("expected a non-negative integer node id, found {tok:?}"),
    })
}

/// Raw `(u, v)` pairs in file order, self-loops removed.
fn read_raw_edges(reader: impl Read, path: &Path) -> Result<Vec<(u64, u64)>> {
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (toks.next(), toks.next(), toks.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                message: format!("expected two node ids, found {trimmed:?}"),
            });
        };
        let (u, v) = (parse_id(a, path, lineno)?, parse_id(b, path, lineno)?);
        if u != v {
            edges.push((u, v));
        }
    }
    Ok(edges)
}

/// Parses edge-list text; `origin` is only used in error messages.
///
/// Node ids are relabeled to `0..n` in first-seen order.
pub fn parse_edge_list(reader: impl Read, origin: &Path) -> Result<Graph> {
    let raw = read_raw_edges(reader, origin)?;
    if raw.is_empty() {
        return Err(Error::EmptyGraph(origin.to_path_buf()));
    }
    let mut ids: HashMap<u64, usize> = HashMap::new();
    let mut relabel = |x: u64| {
        let next = ids.len();
        *ids.entry(x).or_insert(next)
    };
    let edges: Vec<(usize, usize)> = raw.iter().map(|&(u, v)| (relabel(u), relabel(v))).collect();
    Graph::new(ids.len(), edges)
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    parse_edge_list(fs::File::open(path)?, path)
}

/// Extracts one induced subgraph per community with `min_size..=max_size`
/// members present in the edge file.
///
/// Members absent from the edge file are skipped and counted in
/// [`GraphDataset::skipped_members`]; communities without induced edges are
/// discarded.
pub fn load_communities(
    edge_path: impl AsRef<Path>,
    community_path: impl AsRef<Path>,
    min_size: usize,
    max_size: usize,
) -> Result<GraphDataset> {
    let edge_path = edge_path.as_ref();
    let community_path = community_path.as_ref();
    if min_size > max_size {
        return Err(crate::error::invalid(format!(
            "empty size range [{min_size}, {max_size}]"
        )));
    }
    let raw = read_raw_edges(fs::File::open(edge_path)?, edge_path)?;
    let mut nodes: HashSet<u64> = HashSet::with_capacity(raw.len());
    let mut edge_set: HashSet<(u64, u64)> = HashSet::with_capacity(raw.len());
    for &(u, v) in &raw {
        nodes.insert(u);
        nodes.insert(v);
        edge_set.insert((u.min(v), u.max(v)));
    }
    drop(raw);

    let mut dataset = GraphDataset::new((min_size, max_size));
    let reader = BufReader::new(fs::File::open(community_path)?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut seen = HashSet::new();
        let mut members = Vec::new();
        for tok in trimmed.split_whitespace() {
            let id = parse_id(tok, community_path, idx + 1)?;
            if !seen.insert(id) {
                continue;
            }
            if nodes.contains(&id) {
                members.push(id);
            } else {
                dataset.skipped_members += 1;
            }
        }
        if members.len() < min_size || members.len() > max_size {
            continue;
        }
        let mut edges = Vec::new();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i], members[j]);
                if edge_set.contains(&(a.min(b), a.max(b))) {
                    edges.push((i, j));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let g = Graph::new(members.len(), edges)?.with_community(Some(idx as u64));
        dataset.graphs.push(g);
    }
    Ok(dataset)
}
