//! Workload evaluation and inter-partition traversal counting.
//!
//! A query is expanded into its label strings, which are folded into a
//! small trie. Evaluation walks that trie and the graph together, depth
//! first, from every vertex matching a first label. Each walk step along an
//! edge whose endpoints lie in different partitions is one ipt.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Label, LabeledGraph, Partitioning, VertexId};
use crate::rpq::{ExpandError, LabelWord, QueryExpr, QueryHash, Workload};

/// Which walk steps count towards ipt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IptMode {
    /// Every crossing step of a live prefix, completed or not.
    #[default]
    Partial,
    /// Only crossing steps that lie on at least one completed match.
    CompleteOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryEval {
    pub matches: usize,
    pub ipt: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryIpt {
    pub matches: usize,
    pub ipt: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IptReport {
    pub per_query: BTreeMap<QueryHash, QueryIpt>,
    pub total_ipt: usize,
    pub weighted_ipt: f64,
}

impl IptReport {
    /// `query_hash,matches,ipt,frequency` rows under a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_hash,matches,ipt,frequency\n");
        for (h, q) in &self.per_query {
            let _ = writeln!(out, "{h},{},{},{}", q.matches, q.ipt, q.frequency);
        }
        out
    }
}

#[derive(Default)]
struct WalkNode {
    children: HashMap<Label, usize>,
    terminal: bool,
}

/// Label strings of one query, as a trie over graph labels.
struct WalkTrie {
    nodes: Vec<WalkNode>,
}

impl WalkTrie {
    fn new(g: &LabeledGraph, words: &BTreeSet<LabelWord>) -> Self {
        let mut nodes = vec![WalkNode::default()];
        let vocab = g.vocabulary();
        'words: for word in words.iter().filter(|w| !w.is_empty()) {
            let mut labels = Vec::with_capacity(word.len());
            for name in word {
                // A label no vertex carries can never match.
                let Some(l) = vocab.get(name) else { continue 'words };
                labels.push(l);
            }
            let mut at = 0;
            for l in labels {
                at = match nodes[at].children.get(&l) {
                    Some(&next) => next,
                    None => {
                        nodes.push(WalkNode::default());
                        let next = nodes.len() - 1;
                        nodes[at].children.insert(l, next);
                        next
                    }
                };
            }
            nodes[at].terminal = true;
        }
        Self { nodes }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    matches: usize,
    partial: usize,
    complete: usize,
}

struct Walker<'a> {
    g: &'a LabeledGraph,
    p: &'a Partitioning,
    trie: &'a WalkTrie,
}

impl Walker<'_> {
    /// Walks from `v` at trie node `at`; returns whether any match lies below.
    fn walk(&self, v: VertexId, at: usize, tally: &mut Tally) -> bool {
        let node = &self.trie.nodes[at];
        let mut matched = node.terminal;
        if node.terminal {
            tally.matches += 1;
        }
        if node.children.is_empty() {
            return matched;
        }
        for &n in self.g.neighbors(v) {
            let Some(&next) = node.children.get(&self.g.label(n)) else {
                continue;
            };
            let crossing = self.p.part(v) != self.p.part(n);
            if crossing {
                tally.partial += 1;
            }
            if self.walk(n, next, tally) {
                matched = true;
                if crossing {
                    tally.complete += 1;
                }
            }
        }
        matched
    }
}

/// Matches and ipt of `q` on `g` under `p`.
pub fn evaluate_with_ipt(
    g: &LabeledGraph,
    p: &Partitioning,
    q: &QueryExpr,
    star_cap: usize,
    mode: IptMode,
) -> Result<QueryEval, ExpandError> {
    let words = q.expand(star_cap)?;
    Ok(evaluate_words(g, p, &words, mode))
}

/// [`evaluate_with_ipt`] over already expanded strings.
pub fn evaluate_words(g: &LabeledGraph, p: &Partitioning, words: &BTreeSet<LabelWord>, mode: IptMode) -> QueryEval {
    let trie = WalkTrie::new(g, words);
    let walker = Walker { g, p, trie: &trie };
    let root = &trie.nodes[0];
    let tally = g
        .vertices()
        .collect::<Vec<_>>()
        .par_iter()
        .filter_map(|&v| root.children.get(&g.label(v)).map(|&at| (v, at)))
        .map(|(v, at)| {
            let mut t = Tally::default();
            walker.walk(v, at, &mut t);
            t
        })
        .reduce(Tally::default, |a, b| Tally {
            matches: a.matches + b.matches,
            partial: a.partial + b.partial,
            complete: a.complete + b.complete,
        });
    QueryEval {
        matches: tally.matches,
        ipt: match mode {
            IptMode::Partial => tally.partial,
            IptMode::CompleteOnly => tally.complete,
        },
    }
}

/// Exhaustive enumeration of vertex paths spelling `word`.
pub fn match_paths(g: &LabeledGraph, word: &[&str]) -> BTreeSet<Vec<VertexId>> {
    let vocab = g.vocabulary();
    let Some(labels) = word.iter().map(|n| vocab.get(n)).collect::<Option<Vec<_>>>() else {
        return BTreeSet::new();
    };
    let Some((&first, rest)) = labels.split_first() else {
        return BTreeSet::new();
    };
    let mut paths: Vec<Vec<VertexId>> = g.vertices().filter(|&v| g.label(v) == first).map(|v| vec![v]).collect();
    for &l in rest {
        let mut next = Vec::new();
        for path in &paths {
            let last = *path.last().unwrap();
            for &n in g.neighbors(last) {
                if g.label(n) == l {
                    let mut longer = path.clone();
                    longer.push(n);
                    next.push(longer);
                }
            }
        }
        paths = next;
    }
    paths.into_iter().collect()
}

/// Evaluates each query once and weights its ipt by its frequency.
pub fn measure<'q>(
    g: &LabeledGraph,
    p: &Partitioning,
    queries: impl IntoIterator<Item = (&'q QueryExpr, f64)>,
    star_cap: usize,
    mode: IptMode,
) -> Result<IptReport, ExpandError> {
    let mut report = IptReport::default();
    for (q, frequency) in queries {
        let eval = evaluate_with_ipt(g, p, q, star_cap, mode)?;
        let entry = report.per_query.entry(q.canonical_hash()).or_insert(QueryIpt {
            matches: eval.matches,
            ipt: eval.ipt,
            frequency: 0.0,
        });
        entry.frequency += frequency;
    }
    for q in report.per_query.values() {
        report.total_ipt += q.ipt;
        report.weighted_ipt += q.frequency * q.ipt as f64;
    }
    Ok(report)
}

/// [`measure`] over the in-window queries of `w` at time `now`.
pub fn measure_workload(
    g: &LabeledGraph,
    p: &Partitioning,
    w: &Workload,
    now: u64,
    star_cap: usize,
    mode: IptMode,
) -> Result<IptReport, ExpandError> {
    let freqs = w.frequencies(now);
    let queries = freqs.iter().filter_map(|(h, &f)| w.query(*h).map(|q| (q, f)));
    measure(g, p, queries, star_cap, mode)
}
