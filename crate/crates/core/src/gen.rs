//! Seeded random labelled graphs with planted communities.
//!
//! Vertices are split into contiguous equal-size communities. Each edge
//! stays inside its source's community with probability `1 - mixing`.
//! Every community has a dominant label that a vertex takes with
//! probability `label_skew`; otherwise its label is uniform.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphError, LabeledGraph, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub vertices: usize,
    pub avg_degree: f64,
    pub labels: usize,
    pub communities: usize,
    /// Fraction of edges leaving their source's community.
    pub mixing: f64,
    pub label_skew: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            vertices: 1000,
            avg_degree: 6.0,
            labels: 4,
            communities: 50,
            mixing: 0.1,
            label_skew: 0.7,
            seed: 0,
        }
    }
}

/// Label names used by the generator: `a`, `b`, ... then `l26`, `l27`, ...
pub fn label_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("l{i}")
    }
}

pub fn community_of(cfg: &GenConfig, v: VertexId) -> usize {
    let c = cfg.communities.clamp(1, cfg.vertices.max(1));
    v as usize * c / cfg.vertices.max(1)
}

/// Uniform in `lo..hi`, drawn as `u64` so 32- and 64-bit targets agree.
fn pick(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.gen_range(lo as u64..hi as u64) as usize
}

pub fn generate(cfg: &GenConfig) -> Result<LabeledGraph, GraphError> {
    let n = cfg.vertices;
    let labels = cfg.labels.max(1);
    let communities = cfg.communities.clamp(1, n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let vertices: Vec<(VertexId, String)> = (0..n)
        .map(|v| {
            let dominant = community_of(cfg, v as VertexId) % labels;
            let l = if rng.gen_bool(cfg.label_skew.clamp(0.0, 1.0)) {
                dominant
            } else {
                pick(&mut rng, 0, labels)
            };
            (v as VertexId, label_name(l))
        })
        .collect();

    // Community c spans [start(c), start(c + 1)).
    let start = |c: usize| (c * n).div_ceil(communities);
    let target = ((n as f64 * cfg.avg_degree) / 2.0).round() as usize;
    let max_edges = n * n.saturating_sub(1) / 2;
    let target = target.min(max_edges);
    let mut seen: HashSet<(VertexId, VertexId)> = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target && attempts < target.saturating_mul(50) + 100 {
        attempts += 1;
        let u = pick(&mut rng, 0, n);
        let w = if rng.gen_bool(cfg.mixing.clamp(0.0, 1.0)) {
            pick(&mut rng, 0, n)
        } else {
            let c = community_of(cfg, u as VertexId);
            pick(&mut rng, start(c), start(c + 1).max(start(c) + 1))
        };
        if u == w {
            continue;
        }
        let key = (u.min(w) as VertexId, u.max(w) as VertexId);
        if seen.insert(key) {
            edges.push(key);
        }
    }
    LabeledGraph::build(&vertices, &edges)
}
