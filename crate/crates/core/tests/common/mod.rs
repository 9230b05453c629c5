//! Shared fixtures and brute-force oracles for the integration tests.
//!
//! The oracles deliberately avoid the library's trie, rows and tracing:
//! prefix probabilities come straight from the expanded strings, and
//! visitor mass from enumerating every walk.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repart_core::{parse, LabeledGraph, Partitioning, QueryExpr, Tpstry, VertexId};

pub const Q1: &str = "a.(b|c).(c|d)";
pub const Q2: &str = "(c|a).c.a";

/// The six-vertex example graph; vertex `n` of the drawing is id `n - 1`.
pub fn fixture_graph() -> LabeledGraph {
    let vertices = [(0, "a"), (1, "b"), (2, "c"), (3, "d"), (4, "c"), (5, "a")];
    let edges = [(1, 2), (2, 3), (2, 4), (2, 5), (3, 4), (3, 5), (3, 6), (4, 5), (5, 6)];
    let edges: Vec<_> = edges.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
    LabeledGraph::build(&vertices, &edges).unwrap()
}

/// Two-way split with the listed drawing vertices in partition 0.
pub fn fixture_split(first: &[u32]) -> Partitioning {
    let assignment = (1..=6).map(|n| if first.contains(&n) { 0 } else { 1 }).collect();
    Partitioning::new(2, assignment).unwrap()
}

pub fn v(n: u32) -> VertexId {
    n - 1
}

pub fn build_trie(g: &LabeledGraph, queries: &[(QueryExpr, f64)], star_cap: usize) -> Tpstry {
    let mut t = Tpstry::new(g.vocabulary().clone());
    let mut freqs = BTreeMap::new();
    for (q, f) in queries {
        let h = t.insert_expr(q, star_cap).unwrap();
        *freqs.entry(h).or_insert(0.0) += f;
    }
    t.recompute_probabilities(&freqs).unwrap();
    t
}

pub fn fixture_workload() -> Vec<(QueryExpr, f64)> {
    vec![(parse(Q1).unwrap(), 0.5), (parse(Q2).unwrap(), 0.5)]
}

pub type Word = Vec<String>;

/// Expanded strings of each query with its frequency.
pub struct OracleWorkload {
    pub queries: Vec<(BTreeSet<Word>, f64)>,
}

impl OracleWorkload {
    pub fn new(queries: &[(QueryExpr, f64)], star_cap: usize) -> Self {
        let mut merged: BTreeMap<String, (BTreeSet<Word>, f64)> = BTreeMap::new();
        for (q, f) in queries {
            let words = q
                .expand(star_cap)
                .unwrap()
                .into_iter()
                .filter(|w| !w.is_empty())
                .collect();
            merged.entry(q.to_string()).or_insert((words, 0.0)).1 += f;
        }
        Self {
            queries: merged.into_values().collect(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.queries
            .iter()
            .flat_map(|(ws, _)| ws.iter().map(Vec::len))
            .max()
            .unwrap_or(0)
    }

    /// Whether some string of some query starts with `prefix`.
    pub fn is_prefix(&self, prefix: &[String]) -> bool {
        self.queries
            .iter()
            .any(|(ws, _)| ws.iter().any(|w| w.starts_with(prefix)))
    }

    /// Workload probability of reaching `prefix`: per query, each step
    /// splits evenly over the distinct next labels plus stopping if a
    /// string ends there.
    pub fn prob(&self, prefix: &[String]) -> f64 {
        let mut total = 0.0;
        for (words, f) in &self.queries {
            let mut pr = 1.0;
            for j in 0..prefix.len() {
                let here = &prefix[..j];
                let next: BTreeSet<&String> = words
                    .iter()
                    .filter(|w| w.len() > j && w.starts_with(here))
                    .map(|w| &w[j])
                    .collect();
                if !next.contains(&prefix[j]) {
                    pr = 0.0;
                    break;
                }
                let stops = j > 0 && words.iter().any(|w| w.as_slice() == here);
                pr /= (next.len() + usize::from(stops)) as f64;
            }
            total += f * pr;
        }
        total
    }

    /// Labels that extend `prefix` to another prefix.
    pub fn next_labels(&self, prefix: &[String]) -> BTreeSet<String> {
        let j = prefix.len();
        self.queries
            .iter()
            .flat_map(|(ws, _)| ws.iter())
            .filter(|w| w.len() > j && w.starts_with(prefix))
            .map(|w| w[j].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleScore {
    pub intra: f64,
    pub total: f64,
    pub flow: BTreeMap<VertexId, f64>,
}

impl OracleScore {
    pub fn extroversion(&self) -> f64 {
        1.0 - self.intra / self.total
    }
}

fn names(g: &LabeledGraph, walk: &[VertexId]) -> Vec<String> {
    walk.iter().map(|&u| g.label_name(u).to_string()).collect()
}

/// Every walk of `len` vertices inside `part` ending at `v`.
fn walks_ending_at(g: &LabeledGraph, p: &Partitioning, v: VertexId, len: usize) -> Vec<Vec<VertexId>> {
    let mut walks = vec![vec![v]];
    for _ in 1..len {
        let mut longer = Vec::new();
        for w in &walks {
            for &n in g.neighbors(w[0]) {
                if p.part(n) == p.part(v) {
                    let mut x = vec![n];
                    x.extend_from_slice(w);
                    longer.push(x);
                }
            }
        }
        walks = longer;
    }
    walks
}

/// Visitor mass of `v` in its partition over all prefix-spelling walks of
/// up to `max_len` vertices.
pub fn oracle_score(
    g: &LabeledGraph,
    p: &Partitioning,
    w: &OracleWorkload,
    v: VertexId,
    max_len: usize,
) -> OracleScore {
    let home = p.part(v);
    let in_home = |u: VertexId| p.part(u) == home;
    let mut score = OracleScore::default();
    for len in 1..=max_len {
        for walk in walks_ending_at(g, p, v, len) {
            let labels = names(g, &walk);
            if !w.is_prefix(&labels) {
                continue;
            }
            let same_label = g
                .vertices()
                .filter(|&u| in_home(u) && g.label(u) == g.label(walk[0]))
                .count();
            let mut pr = w.prob(&labels[..1]) / same_label as f64;
            for j in 1..walk.len() {
                let here = w.prob(&labels[..j]);
                if here == 0.0 {
                    pr = 0.0;
                    break;
                }
                let fan = g
                    .neighbors(walk[j - 1])
                    .iter()
                    .filter(|&&n| g.label(n) == g.label(walk[j]))
                    .count();
                pr *= w.prob(&labels[..=j]) / here / fan as f64;
            }
            if pr <= 0.0 {
                continue;
            }
            let here = w.prob(&labels);
            let mut stop = 1.0;
            for l in w.next_labels(&labels) {
                let targets: Vec<VertexId> = g
                    .neighbors(v)
                    .iter()
                    .copied()
                    .filter(|&n| g.label_name(n) == l)
                    .collect();
                if targets.is_empty() {
                    continue;
                }
                let mut ext = labels.clone();
                ext.push(l);
                let q = if here > 0.0 { w.prob(&ext) / here } else { 0.0 };
                stop -= q;
                for n in &targets {
                    let mass = pr * q / targets.len() as f64;
                    *score.flow.entry(*n).or_default() += mass;
                    if in_home(*n) {
                        score.intra += mass;
                    }
                }
            }
            if here > 0.0 && stop > 0.0 {
                *score.flow.entry(v).or_default() += pr * stop;
                score.intra += pr * stop;
            } else if here == 0.0 {
                *score.flow.entry(v).or_default() += pr;
                score.intra += pr;
            }
            score.total += pr;
        }
    }
    score
}

/// A random small labelled graph with a random partitioning and workload.
pub struct Case {
    pub seed: u64,
    pub graph: LabeledGraph,
    pub partitioning: Partitioning,
    pub queries: Vec<(QueryExpr, f64)>,
    pub star_cap: usize,
}

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

fn random_item(rng: &mut ChaCha8Rng, labels: usize) -> String {
    let atom = |rng: &mut ChaCha8Rng| LABELS[rng.gen_range(0..labels)].to_string();
    match rng.gen_range(0..5) {
        0 => format!("({}|{})", atom(rng), atom(rng)),
        1 => format!("{}*", atom(rng)),
        _ => atom(rng),
    }
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=50);
    let labels = rng.gen_range(1..=4);
    let vertices: Vec<(VertexId, &str)> = (0..n)
        .map(|i| (i as VertexId, LABELS[rng.gen_range(0..labels)]))
        .collect();
    let degree: f64 = rng.gen_range(1.5..5.0);
    let edge_p = (degree / (n - 1) as f64).min(1.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for w in u + 1..n {
            if rng.gen_bool(edge_p) {
                edges.push((u as VertexId, w as VertexId));
            }
        }
    }
    let graph = LabeledGraph::build(&vertices, &edges).unwrap();
    let k = rng.gen_range(2..=4usize.min(n));
    let mut assignment: Vec<u32> = (0..n).map(|i| (i % k) as u32).collect();
    assignment.shuffle(&mut rng);
    let partitioning = Partitioning::new(k, assignment).unwrap();
    let count = rng.gen_range(1..=3);
    let mut queries = Vec::new();
    for _ in 0..count {
        let items = rng.gen_range(1..=3);
        let text: Vec<String> = (0..items).map(|_| random_item(&mut rng, labels)).collect();
        queries.push((parse(&text.join(".")).unwrap(), rng.gen_range(0.1..1.0)));
    }
    let total: f64 = queries.iter().map(|(_, f)| f).sum();
    for (_, f) in &mut queries {
        *f /= total;
    }
    Case {
        seed,
        graph,
        partitioning,
        queries,
        star_cap: rng.gen_range(1..=2),
    }
}

/// Pattern length used with the random corpus.
pub const CORPUS_T: usize = 4;
