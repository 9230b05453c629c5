//! Per-partition visitor matrices.
//!
//! A row of the matrix is keyed by a vertex path `(p_1, ..., p_m)` whose
//! label string is a trie prefix, and holds the distribution of the next
//! vertex after `p_m`: the trie's conditional label probabilities spread
//! uniformly over the neighbours of `p_m` carrying each label, with any
//! stopping mass placed on `p_m` itself. Rows are never materialised as a
//! dense tensor.
//!
//! Within partition `V_i` the probability of a path is the product of its
//! row entries times a start prior. The prior of `v` is the trie mass of
//! `v`'s label split evenly over the vertices of `V_i` carrying that label.
//! Introversion of `v` is the probability-weighted share of next steps
//! (stopping included) that stay in `V_i`, over all legal paths inside
//! `V_i` ending at `v`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::{Label, LabeledGraph, PartitionId, Partitioning, VertexId};
use crate::tpstry::{Tpstry, TrieError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VmError {
    #[error("path label string is not a trie prefix")]
    NotATriePrefix,
    #[error("consecutive path vertices {0} and {1} are not adjacent")]
    DisconnectedPath(VertexId, VertexId),
    #[error("empty path")]
    EmptyPath,
    #[error("no row for prefix {0:?}")]
    MissingPrefixRow(Vec<VertexId>),
    #[error("vertex {0} is safe")]
    VertexIsSafe(VertexId),
    #[error("vertex {0} has not been scored")]
    VertexUnscored(VertexId),
    #[error("no workload path reaches vertex {0}")]
    ZeroTotalMass(VertexId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmParams {
    /// Maximum pattern length `t`; rows exist for paths shorter than this.
    /// `None` uses the trie depth.
    pub max_path_len: Option<usize>,
    /// Vertices whose introversion exceeds this are declared safe.
    pub safe_threshold: f64,
    /// Longest path length considered before classifying a vertex.
    /// `None` considers every path shorter than `t`.
    pub length_cutoff: Option<usize>,
}

impl Default for VmParams {
    fn default() -> Self {
        Self {
            max_path_len: None,
            safe_threshold: 0.85,
            length_cutoff: None,
        }
    }
}

impl VmParams {
    pub fn pattern_length(&self, trie: &Tpstry) -> usize {
        self.max_path_len.map_or(trie.max_depth(), |t| t.min(trie.max_depth()))
    }

    /// Longest path for which rows are computed: `min(t - 1, cutoff)`.
    pub fn row_depth(&self, trie: &Tpstry) -> usize {
        let deepest = self.pattern_length(trie).saturating_sub(1);
        self.length_cutoff.map_or(deepest, |k| k.min(deepest))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmRow {
    pub path: Vec<VertexId>,
    /// Sorted by vertex; the subject's own entry is the stop mass.
    pub transitions: Vec<(VertexId, f64)>,
}

impl VmRow {
    pub fn subject(&self) -> VertexId {
        *self.path.last().unwrap()
    }

    pub fn get(&self, v: VertexId) -> f64 {
        self.transitions
            .binary_search_by_key(&v, |&(w, _)| w)
            .map_or(0.0, |i| self.transitions[i].1)
    }

    pub fn total(&self) -> f64 {
        self.transitions.iter().map(|(_, p)| p).sum()
    }
}

/// Computes the row for `path`.
pub fn vm_row(g: &LabeledGraph, trie: &Tpstry, path: &[VertexId]) -> Result<VmRow, VmError> {
    let (&subject, _) = path.split_last().ok_or(VmError::EmptyPath)?;
    for pair in path.windows(2) {
        if !g.are_adjacent(pair[0], pair[1]) {
            return Err(VmError::DisconnectedPath(pair[0], pair[1]));
        }
    }
    let labels = g.label_string(path);
    if !trie.contains_prefix(&labels) {
        return Err(VmError::NotATriePrefix);
    }
    let next = match trie.next_label_probs(&labels) {
        Ok(next) => next,
        // An unreachable prefix: nothing is ever traversed from here.
        Err(TrieError::ZeroProbabilityPrefix(_)) => Vec::new(),
        Err(TrieError::MissingFrequency(_)) => unreachable!(),
    };
    let mut entries: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut stop = 1.0;
    for (label, q) in next {
        let targets: Vec<VertexId> = g
            .neighbors(subject)
            .iter()
            .copied()
            .filter(|&n| g.label(n) == label)
            .collect();
        if targets.is_empty() {
            continue;
        }
        stop -= q;
        let share = q / targets.len() as f64;
        for n in targets {
            *entries.entry(n).or_default() += share;
        }
    }
    if stop > 1e-15 {
        *entries.entry(subject).or_default() += stop;
    }
    Ok(VmRow {
        path: path.to_vec(),
        transitions: entries.into_iter().collect(),
    })
}

/// Per-partition label counts, kept in step with vertex moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCensus {
    counts: Vec<Vec<usize>>,
}

impl LabelCensus {
    pub fn new(g: &LabeledGraph, p: &Partitioning) -> Self {
        let mut counts = vec![vec![0; g.vocabulary().len()]; p.k()];
        for v in g.vertices() {
            counts[p.part(v) as usize][g.label(v).0 as usize] += 1;
        }
        Self { counts }
    }

    pub fn count(&self, part: PartitionId, l: Label) -> usize {
        self.counts[part as usize].get(l.0 as usize).copied().unwrap_or(0)
    }

    pub fn record_move(&mut self, l: Label, from: PartitionId, to: PartitionId) {
        self.counts[from as usize][l.0 as usize] -= 1;
        self.counts[to as usize][l.0 as usize] += 1;
    }
}

/// A set of vertices treated as one partition when tracing paths.
pub trait Region {
    fn contains(&self, v: VertexId) -> bool;
    /// Vertices in the region carrying label `l`.
    fn label_count(&self, l: Label) -> usize;
}

/// An actual partition of a partitioning.
pub struct PartitionRegion<'a> {
    pub partitioning: &'a Partitioning,
    pub census: &'a LabelCensus,
    pub part: PartitionId,
}

impl Region for PartitionRegion<'_> {
    fn contains(&self, v: VertexId) -> bool {
        self.partitioning.part(v) == self.part
    }

    fn label_count(&self, l: Label) -> usize {
        self.census.count(self.part, l)
    }
}

/// A partition as it would be after `incoming` vertices joined it.
pub struct AugmentedRegion<'a> {
    pub partitioning: &'a Partitioning,
    pub census: &'a LabelCensus,
    pub part: PartitionId,
    pub incoming: &'a BTreeSet<VertexId>,
    pub incoming_labels: HashMap<Label, usize>,
}

impl<'a> AugmentedRegion<'a> {
    pub fn new(
        g: &LabeledGraph,
        partitioning: &'a Partitioning,
        census: &'a LabelCensus,
        part: PartitionId,
        incoming: &'a BTreeSet<VertexId>,
    ) -> Self {
        let mut incoming_labels = HashMap::new();
        for &v in incoming {
            if partitioning.part(v) != part {
                *incoming_labels.entry(g.label(v)).or_default() += 1;
            }
        }
        Self {
            partitioning,
            census,
            part,
            incoming,
            incoming_labels,
        }
    }
}

impl Region for AugmentedRegion<'_> {
    fn contains(&self, v: VertexId) -> bool {
        self.partitioning.part(v) == self.part || self.incoming.contains(&v)
    }

    fn label_count(&self, l: Label) -> usize {
        self.census.count(self.part, l) + self.incoming_labels.get(&l).copied().unwrap_or(0)
    }
}

/// Rows shared across matrix builds. Row contents depend only on the graph
/// and the trie, so entries stay valid until the trie changes under them.
#[derive(Debug, Clone, Default)]
pub struct RowCache {
    rows: HashMap<Vec<VertexId>, VmRow>,
}

impl RowCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, path: &[VertexId]) -> Option<&VmRow> {
        self.rows.get(path)
    }

    pub fn absorb(&mut self, rows: HashMap<Vec<VertexId>, VmRow>) {
        self.rows.extend(rows);
    }

    /// Drops rows whose conditionals depend on a changed trie path: a row
    /// at label string `s` reads `p(s)` and `p(s.l)` for each child `l`.
    pub fn invalidate(&mut self, g: &LabeledGraph, changed: &BTreeSet<Vec<Label>>) -> usize {
        if changed.is_empty() {
            return 0;
        }
        let mut stale: HashSet<&[Label]> = HashSet::new();
        for path in changed {
            stale.insert(path);
            stale.insert(&path[..path.len() - 1]);
        }
        let before = self.rows.len();
        self.rows
            .retain(|path, _| !stale.contains(g.label_string(path).as_slice()));
        before - self.rows.len()
    }

    pub fn clear(&mut self) {
        self.rows.clear();
    }
}

/// Graph, trie and parameters for one scoring pass, plus the set of label
/// strings that can still grow (backwards) into a trie prefix.
pub struct VmContext<'a> {
    pub graph: &'a LabeledGraph,
    pub trie: &'a Tpstry,
    pub params: VmParams,
    depth: usize,
    suffixes: HashSet<Vec<Label>>,
}

impl<'a> VmContext<'a> {
    pub fn new(graph: &'a LabeledGraph, trie: &'a Tpstry, params: VmParams) -> Self {
        let depth = params.row_depth(trie);
        let mut suffixes = HashSet::new();
        for (path, _) in trie.paths() {
            if path.len() > depth {
                continue;
            }
            for start in 0..path.len() {
                suffixes.insert(path[start..].to_vec());
            }
        }
        Self {
            graph,
            trie,
            params,
            depth,
            suffixes,
        }
    }

    /// Longest path length for which rows are computed.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn model<'c>(&'c self, shared: &'c RowCache) -> FlowModel<'c> {
        FlowModel {
            ctx: self,
            shared,
            local: HashMap::new(),
        }
    }
}

/// Outgoing traversal mass of one vertex over its legal paths in a region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub intra: f64,
    pub total: f64,
    /// Mass per next vertex; the traced vertex's own entry is stopping.
    pub flow: BTreeMap<VertexId, f64>,
    pub paths: Vec<(Vec<VertexId>, f64)>,
}

impl Trace {
    pub fn introversion(&self) -> Option<f64> {
        // Summation order can push intra a hair past total.
        (self.total > 0.0).then(|| (self.intra / self.total).min(1.0))
    }
}

/// Row evaluation with a read-only shared cache and a private overflow.
pub struct FlowModel<'c> {
    ctx: &'c VmContext<'c>,
    shared: &'c RowCache,
    local: HashMap<Vec<VertexId>, VmRow>,
}

impl<'c> FlowModel<'c> {
    pub fn context(&self) -> &VmContext<'c> {
        self.ctx
    }

    /// Rows computed here that the shared cache did not have.
    pub fn into_new_rows(self) -> HashMap<Vec<VertexId>, VmRow> {
        self.local
    }

    pub fn row(&mut self, path: &[VertexId]) -> Result<&VmRow, VmError> {
        if let Some(row) = self.shared.get(path) {
            return Ok(row);
        }
        if !self.local.contains_key(path) {
            let row = vm_row(self.ctx.graph, self.ctx.trie, path)?;
            self.local.insert(path.to_vec(), row);
        }
        Ok(&self.local[path])
    }

    /// Start prior of `v` within `region`.
    pub fn prior(&self, v: VertexId, region: &dyn Region) -> f64 {
        let label = self.ctx.graph.label(v);
        let mass = self.ctx.trie.probability(&[label]).unwrap_or(0.0);
        let count = region.label_count(label);
        if count == 0 {
            0.0
        } else {
            mass / count as f64
        }
    }

    /// Chain-rule probability of a legal path inside `region`.
    pub fn path_probability(&mut self, path: &[VertexId], region: &dyn Region) -> Result<f64, VmError> {
        let (&first, _) = path.split_first().ok_or(VmError::EmptyPath)?;
        let mut pr = self.prior(first, region);
        for j in 1..path.len() {
            if pr == 0.0 {
                break;
            }
            pr *= self.row(&path[..j])?.get(path[j]);
        }
        Ok(pr)
    }

    /// Walks legal paths inside `region` ending at `v`, shortest first, up
    /// to `max_len` vertices, accumulating where the next traversal goes.
    pub fn trace(&mut self, v: VertexId, region: &dyn Region, max_len: usize) -> Result<Trace, VmError> {
        let g = self.ctx.graph;
        let mut out = Trace::default();
        let mut level: Vec<Vec<VertexId>> = Vec::new();
        if self.ctx.suffixes.contains(&vec![g.label(v)]) {
            level.push(vec![v]);
        }
        for len in 1..=max_len {
            if level.is_empty() {
                break;
            }
            for path in &level {
                if !self.ctx.trie.contains_prefix(&g.label_string(path)) {
                    continue;
                }
                let pr = self.path_probability(path, region)?;
                if pr <= 0.0 {
                    continue;
                }
                let row = self.row(path)?;
                for &(w, x) in &row.transitions {
                    let mass = pr * x;
                    *out.flow.entry(w).or_default() += mass;
                    if w == v || region.contains(w) {
                        out.intra += mass;
                    }
                }
                out.total += pr;
                out.paths.push((path.clone(), pr));
            }
            if len == max_len {
                break;
            }
            let mut next = Vec::new();
            for path in &level {
                for &n in g.neighbors(path[0]) {
                    if !region.contains(n) {
                        continue;
                    }
                    let mut extended = Vec::with_capacity(path.len() + 1);
                    extended.push(n);
                    extended.extend_from_slice(path);
                    if self.ctx.suffixes.contains(&g.label_string(&extended)) {
                        next.push(extended);
                    }
                }
            }
            level = next;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexStatus {
    Safe,
    Scored,
    Unscored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexScore {
    pub intra_mass: f64,
    pub total_mass: f64,
    pub status: VertexStatus,
    /// Next-vertex mass, kept for scored vertices only.
    pub flow: BTreeMap<VertexId, f64>,
}

/// Outcome of scoring one vertex.
#[derive(Debug, Clone, PartialEq)]
pub enum Scoring {
    Safe,
    Scored(Trace),
}

/// Scores `v` within its own partition.
///
/// Paths are considered shortest first up to the row depth; the vertex is
/// then declared safe if its introversion exceeds the threshold. Vertices
/// without external neighbours, and vertices no workload path reaches, are
/// safe without rows.
pub fn score_vertex(
    model: &mut FlowModel<'_>,
    p: &Partitioning,
    region: &dyn Region,
    v: VertexId,
) -> Result<Scoring, VmError> {
    let ctx = model.context();
    let g = ctx.graph;
    let home = p.part(v);
    if g.neighbors(v).iter().all(|&n| p.part(n) == home) {
        return Ok(Scoring::Safe);
    }
    let (depth, threshold) = (ctx.depth(), ctx.params.safe_threshold);
    let trace = model.trace(v, region, depth)?;
    match trace.introversion() {
        Some(intro) if intro <= threshold => Ok(Scoring::Scored(trace)),
        _ => Ok(Scoring::Safe),
    }
}

/// Standalone scoring of one vertex against the current partitioning.
pub fn calc_vm_rows(
    g: &LabeledGraph,
    p: &Partitioning,
    trie: &Tpstry,
    v: VertexId,
    params: VmParams,
) -> Result<(Scoring, Vec<VmRow>), VmError> {
    let ctx = VmContext::new(g, trie, params);
    let shared = RowCache::new();
    let mut model = ctx.model(&shared);
    let census = LabelCensus::new(g, p);
    let region = PartitionRegion {
        partitioning: p,
        census: &census,
        part: p.part(v),
    };
    let scoring = score_vertex(&mut model, p, &region, v)?;
    let rows = match &scoring {
        Scoring::Safe => Vec::new(),
        Scoring::Scored(trace) => {
            let mut rows = Vec::new();
            for (path, _) in &trace.paths {
                rows.push(model.row(path)?.clone());
            }
            rows
        }
    };
    Ok((scoring, rows))
}

#[derive(Debug, Clone)]
pub struct VisitorMatrix {
    pub partition: PartitionId,
    pub params: VmParams,
    /// Rows of scored vertices' paths and of every prefix of those paths.
    pub rows: BTreeMap<Vec<VertexId>, VmRow>,
    pub per_vertex: BTreeMap<VertexId, VertexScore>,
    priors: BTreeMap<VertexId, f64>,
}

impl VisitorMatrix {
    /// Scores every vertex of partition `part`.
    pub fn build(
        model: &mut FlowModel<'_>,
        p: &Partitioning,
        census: &LabelCensus,
        part: PartitionId,
    ) -> Result<Self, VmError> {
        let region = PartitionRegion {
            partitioning: p,
            census,
            part,
        };
        let mut vm = VisitorMatrix {
            partition: part,
            params: model.context().params,
            rows: BTreeMap::new(),
            per_vertex: BTreeMap::new(),
            priors: BTreeMap::new(),
        };
        for v in p.members(part) {
            let score = match score_vertex(model, p, &region, v)? {
                Scoring::Safe => VertexScore {
                    intra_mass: 0.0,
                    total_mass: 0.0,
                    status: VertexStatus::Safe,
                    flow: BTreeMap::new(),
                },
                Scoring::Scored(trace) => {
                    for (path, _) in &trace.paths {
                        for end in 1..=path.len() {
                            if !vm.rows.contains_key(&path[..end]) {
                                let row = model.row(&path[..end])?.clone();
                                vm.rows.insert(path[..end].to_vec(), row);
                            }
                        }
                        vm.priors.insert(path[0], model.prior(path[0], &region));
                    }
                    VertexScore {
                        intra_mass: trace.intra,
                        total_mass: trace.total,
                        status: VertexStatus::Scored,
                        flow: trace.flow,
                    }
                }
            };
            vm.per_vertex.insert(v, score);
        }
        Ok(vm)
    }

    pub fn score(&self, v: VertexId) -> Option<&VertexScore> {
        self.per_vertex.get(&v)
    }

    pub fn status(&self, v: VertexId) -> VertexStatus {
        self.per_vertex.get(&v).map_or(VertexStatus::Unscored, |s| s.status)
    }

    pub fn introversion(&self, v: VertexId) -> Result<f64, VmError> {
        let score = self.per_vertex.get(&v).ok_or(VmError::VertexUnscored(v))?;
        match score.status {
            VertexStatus::Safe => Err(VmError::VertexIsSafe(v)),
            VertexStatus::Unscored => Err(VmError::VertexUnscored(v)),
            VertexStatus::Scored if score.total_mass <= 0.0 => Err(VmError::ZeroTotalMass(v)),
            VertexStatus::Scored => Ok((score.intra_mass / score.total_mass).min(1.0)),
        }
    }

    pub fn extroversion(&self, v: VertexId) -> Result<f64, VmError> {
        self.introversion(v).map(|i| 1.0 - i)
    }

    /// Scored vertices by extroversion, highest first, ties by id.
    pub fn extroversion_ordering(&self) -> Vec<(VertexId, f64)> {
        let mut order: Vec<(VertexId, f64)> = self
            .per_vertex
            .keys()
            .filter_map(|&v| self.extroversion(v).ok().map(|e| (v, e)))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order
    }

    /// Chain-rule probability of a path from rows held in this matrix.
    pub fn path_probability(&self, path: &[VertexId]) -> Result<f64, VmError> {
        let (&first, _) = path.split_first().ok_or(VmError::EmptyPath)?;
        let mut pr = *self
            .priors
            .get(&first)
            .ok_or_else(|| VmError::MissingPrefixRow(vec![first]))?;
        for j in 1..path.len() {
            let row = self
                .rows
                .get(&path[..j])
                .ok_or_else(|| VmError::MissingPrefixRow(path[..j].to_vec()))?;
            pr *= row.get(path[j]);
        }
        Ok(pr)
    }

    /// `path<TAB>vertex:prob,...` per row in path order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (path, row) in &self.rows {
            write_row(&mut out, path, row);
        }
        out
    }
}

pub fn write_row(out: &mut String, path: &[VertexId], row: &VmRow) {
    let ids: Vec<String> = path.iter().map(|v| v.to_string()).collect();
    let cells: Vec<String> = row.transitions.iter().map(|(v, p)| format!("{v}:{p}")).collect();
    let _ = writeln!(out, "{}\t{}", ids.join(","), cells.join(","));
}
