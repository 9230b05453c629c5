//! Browser bindings: trie probabilities, visitor scores on the six-vertex
//! example graph, and an enhancement run on a generated graph.
//!
//! Each operation has a plain Rust form returning a serializable value and
//! a `#[wasm_bindgen]` wrapper returning JSON text.

use std::collections::BTreeMap;

use repart_core::gen::{generate, GenConfig};
use repart_core::io::read_workload;
use repart_core::query_exec::{measure, IptMode};
use repart_core::swapper::{enhance_with, EnhanceConfig};
use repart_core::vm::{calc_vm_rows, RowCache, Scoring, VmParams};
use repart_core::{hash_partition, LabeledGraph, Partitioning, QueryExpr, Tpstry};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const STAR_CAP: usize = 4;

/// Parses `frequency<TAB>rpq` lines; a line without a tab is a query of
/// frequency 1.
pub fn parse_workload(text: &str) -> Result<Vec<(QueryExpr, f64)>, String> {
    let normalized: String = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            if l.contains('\t') {
                format!("{l}\n")
            } else {
                format!("1\t{}\n", l.trim())
            }
        })
        .collect();
    let w = read_workload(&normalized).map_err(|e| e.to_string())?;
    if w.is_empty() {
        return Err("workload is empty".into());
    }
    Ok(w)
}

fn build_trie(g: &LabeledGraph, workload: &[(QueryExpr, f64)]) -> Result<Tpstry, String> {
    let mut trie = Tpstry::new(g.vocabulary().clone());
    let mut freqs = BTreeMap::new();
    for (q, f) in workload {
        let h = trie.insert_expr(q, STAR_CAP).map_err(|e| e.to_string())?;
        *freqs.entry(h).or_insert(0.0) += f;
    }
    trie.recompute_probabilities(&freqs).map_err(|e| e.to_string())?;
    Ok(trie)
}

#[derive(Debug, Serialize)]
pub struct TrieNode {
    pub path: String,
    pub probability: f64,
}

pub fn trie_nodes(workload: &str) -> Result<Vec<TrieNode>, String> {
    let w = parse_workload(workload)?;
    let g = LabeledGraph::build::<&str>(&[], &[]).map_err(|e| e.to_string())?;
    let trie = build_trie(&g, &w)?;
    Ok(trie
        .paths()
        .into_iter()
        .map(|(path, probability)| TrieNode {
            path: trie.vocabulary().render(&path),
            probability,
        })
        .collect())
}

/// The six-vertex example graph; drawing vertex `n` is id `n - 1`.
pub fn example_graph() -> LabeledGraph {
    let vertices = [(0, "a"), (1, "b"), (2, "c"), (3, "d"), (4, "c"), (5, "a")];
    let edges = [(0, 1), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (2, 5), (3, 4), (4, 5)];
    LabeledGraph::build(&vertices, &edges).expect("example graph is valid")
}

#[derive(Debug, Serialize)]
pub struct VertexView {
    pub vertex: u32,
    pub label: String,
    pub partition: u32,
    /// Skipped by enhancement: no external neighbours or introversion
    /// above the default threshold.
    pub safe: bool,
    pub intra_mass: f64,
    pub total_mass: f64,
    pub extroversion: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ExampleView {
    pub total_ipt: usize,
    pub vertices: Vec<VertexView>,
    pub edges: Vec<(u32, u32)>,
}

/// Scores every vertex of the example graph under a two-way split given
/// as one partition id per vertex.
pub fn score_example(assignment: &[u32], workload: &str) -> Result<ExampleView, String> {
    let g = example_graph();
    if assignment.len() != g.len() {
        return Err(format!("expected {} partition ids", g.len()));
    }
    let k = assignment.iter().max().map_or(1, |&m| m as usize + 1);
    let p = Partitioning::new(k, assignment.to_vec()).map_err(|e| e.to_string())?;
    let w = parse_workload(workload)?;
    let trie = build_trie(&g, &w)?;
    let ipt = measure(&g, &p, w.iter().map(|(q, f)| (q, *f)), STAR_CAP, IptMode::Partial).map_err(|e| e.to_string())?;
    let threshold = VmParams::default().safe_threshold;
    let unfiltered = VmParams {
        safe_threshold: 1.0,
        ..VmParams::default()
    };
    let mut vertices = Vec::new();
    for v in g.vertices() {
        let (scoring, _) = calc_vm_rows(&g, &p, &trie, v, unfiltered).map_err(|e| e.to_string())?;
        let (safe, intra_mass, total_mass) = match &scoring {
            Scoring::Safe => (true, 0.0, 0.0),
            Scoring::Scored(t) => (t.introversion().is_none_or(|i| i > threshold), t.intra, t.total),
        };
        vertices.push(VertexView {
            vertex: v + 1,
            label: g.label_name(v).to_string(),
            partition: p.part(v),
            safe,
            intra_mass,
            total_mass,
            extroversion: (total_mass > 0.0).then(|| (1.0 - intra_mass / total_mass).max(0.0)),
        });
    }
    Ok(ExampleView {
        total_ipt: ipt.total_ipt,
        vertices,
        edges: g.edges().map(|(u, v)| (u + 1, v + 1)).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct EnhanceStep {
    pub iteration: usize,
    pub swaps: usize,
    pub moved: usize,
    pub imbalance: f64,
    pub ipt: f64,
}

#[derive(Debug, Serialize)]
pub struct EnhanceView {
    pub vertices: usize,
    pub edges: usize,
    pub initial_ipt: f64,
    pub steps: Vec<EnhanceStep>,
}

/// Generates a graph, hash-partitions it and enhances it for `workload`,
/// measuring weighted ipt after every iteration.
pub fn enhance_generated(
    vertices: usize,
    k: usize,
    epsilon: f64,
    seed: u64,
    workload: &str,
) -> Result<EnhanceView, String> {
    let g = generate(&GenConfig {
        vertices,
        communities: (vertices / 50).max(1),
        seed,
        ..GenConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let p0 = hash_partition(&g, k, seed).map_err(|e| e.to_string())?;
    let w = parse_workload(workload)?;
    let trie = build_trie(&g, &w)?;
    let ipt = |p: &Partitioning| {
        measure(&g, p, w.iter().map(|(q, f)| (q, *f)), STAR_CAP, IptMode::Partial).map(|r| r.weighted_ipt)
    };
    let initial_ipt = ipt(&p0).map_err(|e| e.to_string())?;
    let cfg = EnhanceConfig {
        epsilon,
        ..EnhanceConfig::default()
    };
    let mut steps = Vec::new();
    let mut failure = None;
    enhance_with(&g, &p0, &trie, &cfg, &mut RowCache::new(), &mut |it, p| match ipt(p) {
        Ok(value) => steps.push(EnhanceStep {
            iteration: it.iteration,
            swaps: it.swaps,
            moved: it.moved,
            imbalance: it.imbalance,
            ipt: value,
        }),
        Err(e) => failure = Some(e.to_string()),
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(EnhanceView {
        vertices: g.len(),
        edges: g.edge_count(),
        initial_ipt,
        steps,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON list of `{path, probability}` for every trie node.
#[wasm_bindgen(js_name = trieProbabilities)]
pub fn trie_probabilities(workload: &str) -> Result<String, JsError> {
    to_js(trie_nodes(workload))
}

/// JSON scores of the example graph under `assignment`.
#[wasm_bindgen(js_name = scoreExample)]
pub fn score_example_js(assignment: Vec<u32>, workload: &str) -> Result<String, JsError> {
    to_js(score_example(&assignment, workload))
}

/// JSON ipt trace of an enhancement run on a generated graph.
#[wasm_bindgen(js_name = enhanceGenerated)]
pub fn enhance_generated_js(
    vertices: usize,
    k: usize,
    epsilon: f64,
    seed: u32,
    workload: &str,
) -> Result<String, JsError> {
    to_js(enhance_generated(vertices, k, epsilon, seed.into(), workload))
}
