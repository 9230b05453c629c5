//! Text codecs for graphs, partitionings, workloads, streams and swap logs.
//!
//! Bulk data is tab-separated, one record per line. Lines starting with `#`
//! are comments; writers put a `# repart <kind> v1` header first, and a
//! reader rejects a header naming another kind or version. Vertex ids in
//! files are arbitrary strings mapped to dense ids in order of appearance.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{GraphError, LabeledGraph, PartitionId, Partitioning, VertexId};
use crate::rpq::{parse, QueryExpr, SyntaxError};
use crate::swapper::SwapLogEntry;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{kind} line {line}: {message}")]
    Malformed {
        kind: &'static str,
        line: usize,
        message: String,
    },
    #[error("expected a {expected} file, found header for {found}")]
    WrongKind { expected: &'static str, found: String },
    #[error("{kind} format version {found} is not supported")]
    UnsupportedVersion { kind: &'static str, found: String },
    #[error("{kind} line {line}: unknown vertex {id:?}")]
    UnknownVertex {
        kind: &'static str,
        line: usize,
        id: String,
    },
    #[error("{kind} line {line}: vertex {id:?} listed twice")]
    DuplicateVertex {
        kind: &'static str,
        line: usize,
        id: String,
    },
    #[error("partition file has no entry for vertex {0:?}")]
    MissingAssignment(String),
    #[error("{kind} line {line}: {source}")]
    Query {
        kind: &'static str,
        line: usize,
        source: SyntaxError,
    },
    #[error("workload frequencies sum to zero")]
    ZeroWorkload,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Bidirectional map between external vertex names and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, VertexId>,
}

impl IdMap {
    /// Names `0..n` for graphs built with dense ids.
    pub fn identity(n: usize) -> Self {
        let mut map = Self::default();
        for i in 0..n {
            map.insert(&i.to_string());
        }
        map
    }

    fn insert(&mut self, name: &str) -> Option<VertexId> {
        if self.index.contains_key(name) {
            return None;
        }
        let id = self.names.len() as VertexId;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Some(id)
    }

    pub fn id(&self, name: &str) -> Option<VertexId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: VertexId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

pub fn header(kind: &str, extra: &str) -> String {
    if extra.is_empty() {
        format!("# repart {kind} v{FORMAT_VERSION}\n")
    } else {
        format!("# repart {kind} v{FORMAT_VERSION} {extra}\n")
    }
}

type Records<'t> = (Vec<(usize, &'t str)>, HashMap<&'t str, &'t str>);

/// Data lines with their 1-based line numbers; checks any header and
/// returns its `key=value` fields.
fn records<'t>(text: &'t str, kind: &'static str) -> Result<Records<'t>, FormatError> {
    let mut fields = HashMap::new();
    let mut lines = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("repart") {
                let found = words.next().unwrap_or_default();
                if found != kind {
                    return Err(FormatError::WrongKind {
                        expected: kind,
                        found: found.to_string(),
                    });
                }
                let version = words.next().unwrap_or_default();
                if version != format!("v{FORMAT_VERSION}") {
                    return Err(FormatError::UnsupportedVersion {
                        kind,
                        found: version.to_string(),
                    });
                }
                fields.extend(words.filter_map(|w| w.split_once('=')));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        lines.push((i + 1, line));
    }
    Ok((lines, fields))
}

fn two_columns<'t>(kind: &'static str, line: usize, text: &'t str) -> Result<(&'t str, &'t str), FormatError> {
    let mut cols = text.split('\t');
    match (cols.next(), cols.next(), cols.next()) {
        (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => Ok((a, b)),
        _ => Err(FormatError::Malformed {
            kind,
            line,
            message: "expected two tab-separated columns".into(),
        }),
    }
}

/// Reads vertex (`id<TAB>label`) and edge (`src<TAB>dst`) files.
pub fn read_graph(vertex_text: &str, edge_text: &str) -> Result<(LabeledGraph, IdMap), FormatError> {
    let mut ids = IdMap::default();
    let mut vertices = Vec::new();
    let (lines, _) = records(vertex_text, "vertices")?;
    for (line, text) in lines {
        let (name, label) = two_columns("vertices", line, text)?;
        let id = ids.insert(name).ok_or_else(|| FormatError::DuplicateVertex {
            kind: "vertices",
            line,
            id: name.to_string(),
        })?;
        vertices.push((id, label));
    }
    let mut edges = Vec::new();
    let (lines, _) = records(edge_text, "edges")?;
    for (line, text) in lines {
        let (a, b) = two_columns("edges", line, text)?;
        let lookup = |name: &str| {
            ids.id(name).ok_or_else(|| FormatError::UnknownVertex {
                kind: "edges",
                line,
                id: name.to_string(),
            })
        };
        edges.push((lookup(a)?, lookup(b)?));
    }
    Ok((LabeledGraph::build(&vertices, &edges)?, ids))
}

pub fn write_vertices(g: &LabeledGraph, ids: &IdMap) -> String {
    let mut out = header("vertices", "");
    for v in g.vertices() {
        let _ = writeln!(out, "{}\t{}", ids.name(v), g.label_name(v));
    }
    out
}

pub fn write_edges(g: &LabeledGraph, ids: &IdMap) -> String {
    let mut out = header("edges", "");
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{}\t{}", ids.name(u), ids.name(v));
    }
    out
}

/// Reads `id<TAB>partition`. The partition count comes from the header's
/// `k=` field when present, otherwise from the largest id seen.
pub fn read_partition(text: &str, ids: &IdMap) -> Result<Partitioning, FormatError> {
    const KIND: &str = "partition";
    let (lines, fields) = records(text, KIND)?;
    let mut assignment: Vec<Option<PartitionId>> = vec![None; ids.len()];
    for (line, row) in lines {
        let (name, part) = two_columns(KIND, line, row)?;
        let v = ids.id(name).ok_or_else(|| FormatError::UnknownVertex {
            kind: KIND,
            line,
            id: name.to_string(),
        })?;
        let part: PartitionId = part.parse().map_err(|_| FormatError::Malformed {
            kind: KIND,
            line,
            message: format!("bad partition id {part:?}"),
        })?;
        if assignment[v as usize].replace(part).is_some() {
            return Err(FormatError::DuplicateVertex {
                kind: KIND,
                line,
                id: name.to_string(),
            });
        }
    }
    let assignment = assignment
        .into_iter()
        .enumerate()
        .map(|(v, p)| p.ok_or_else(|| FormatError::MissingAssignment(ids.name(v as VertexId).to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let k = match fields.get("k") {
        Some(k) => k.parse().map_err(|_| FormatError::Malformed {
            kind: KIND,
            line: 1,
            message: format!("bad partition count {k:?}"),
        })?,
        None => assignment.iter().max().map_or(1, |&m| m as usize + 1),
    };
    Ok(Partitioning::new(k, assignment)?)
}

pub fn write_partition(p: &Partitioning, ids: &IdMap) -> String {
    let mut out = header("partition", &format!("k={}", p.k()));
    for (v, part) in p.assignment().iter().enumerate() {
        let _ = writeln!(out, "{}\t{part}", ids.name(v as VertexId));
    }
    out
}

/// Reads `frequency<TAB>rpq` lines and normalizes the frequencies to sum 1.
/// An empty file is an empty workload.
pub fn read_workload(text: &str) -> Result<Vec<(QueryExpr, f64)>, FormatError> {
    const KIND: &str = "workload";
    let (lines, _) = records(text, KIND)?;
    let mut out = Vec::new();
    for (line, row) in lines {
        let (freq, rpq) = two_columns(KIND, line, row)?;
        let freq: f64 = freq
            .parse()
            .ok()
            .filter(|f: &f64| f.is_finite() && *f >= 0.0)
            .ok_or_else(|| FormatError::Malformed {
                kind: KIND,
                line,
                message: format!("bad frequency {freq:?}"),
            })?;
        let q = parse(rpq).map_err(|source| FormatError::Query {
            kind: KIND,
            line,
            source,
        })?;
        out.push((q, freq));
    }
    if out.is_empty() {
        return Ok(out);
    }
    let total: f64 = out.iter().map(|(_, f)| f).sum();
    if total <= 0.0 {
        return Err(FormatError::ZeroWorkload);
    }
    for (_, f) in &mut out {
        *f /= total;
    }
    Ok(out)
}

pub fn write_workload(queries: &[(QueryExpr, f64)]) -> String {
    let mut out = header("workload", "");
    for (q, f) in queries {
        let _ = writeln!(out, "{f}\t{q}");
    }
    out
}

/// Reads `tick<TAB>rpq` lines.
pub fn read_stream(text: &str) -> Result<Vec<(u64, QueryExpr)>, FormatError> {
    const KIND: &str = "stream";
    let (lines, _) = records(text, KIND)?;
    lines
        .into_iter()
        .map(|(line, row)| {
            let (tick, rpq) = two_columns(KIND, line, row)?;
            let tick = tick.parse().map_err(|_| FormatError::Malformed {
                kind: KIND,
                line,
                message: format!("bad tick {tick:?}"),
            })?;
            let q = parse(rpq).map_err(|source| FormatError::Query {
                kind: KIND,
                line,
                source,
            })?;
            Ok((tick, q))
        })
        .collect()
}

pub fn write_stream(events: &[(u64, QueryExpr)]) -> String {
    let mut out = header("stream", "");
    for (tick, q) in events {
        let _ = writeln!(out, "{tick}\t{q}");
    }
    out
}

/// One JSON object per line after a comment header.
pub fn write_swap_log(entries: &[SwapLogEntry]) -> Result<String, FormatError> {
    let mut out = header("swap-log", "");
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_swap_log(text: &str) -> Result<Vec<SwapLogEntry>, FormatError> {
    let (lines, _) = records(text, "swap-log")?;
    lines
        .into_iter()
        .map(|(_, row)| Ok(serde_json::from_str(row)?))
        .collect()
}
