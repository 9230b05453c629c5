//! Vertex-labelled graphs and k-way partitionings over them.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense vertex identifier, `0..graph.len()`.
pub type VertexId = u32;

/// Partition identifier, `0..k`.
pub type PartitionId = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({0}, {1}) references an unknown vertex")]
    UnknownEndpoint(VertexId, VertexId),
    #[error("vertex id {0} appears more than once")]
    DuplicateVertexId(VertexId),
    #[error("self loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("vertex ids must be exactly 0..{len}; {missing} is missing")]
    SparseVertexIds { len: usize, missing: VertexId },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("partition count {k} exceeds vertex count {vertices}")]
    PartitionCountExceedsVertices { k: usize, vertices: usize },
    #[error("partition count must be at least 1")]
    ZeroPartitions,
    #[error("assignment covers {got} vertices, graph has {expected}")]
    AssignmentLength { expected: usize, got: usize },
    #[error("vertex {vertex} assigned to partition {partition} but k = {k}")]
    PartitionOutOfRange {
        vertex: VertexId,
        partition: PartitionId,
        k: usize,
    },
}

/// Interned vertex label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Label(pub u32);

/// Bidirectional map between label names and [`Label`] symbols.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    names: Vec<Arc<str>>,
    ids: HashMap<Arc<str>, Label>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> Label {
        if let Some(&label) = self.ids.get(name) {
            return label;
        }
        let label = Label(self.names.len() as u32);
        let name: Arc<str> = Arc::from(name);
        self.names.push(name.clone());
        self.ids.insert(name, label);
        label
    }

    pub fn get(&self, name: &str) -> Option<Label> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, label: Label) -> &str {
        &self.names[label.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Renders a label sequence as `a.b.c`.
    pub fn render(&self, labels: &[Label]) -> String {
        let parts: Vec<&str> = labels.iter().map(|&l| self.name(l)).collect();
        parts.join(".")
    }
}

/// Immutable undirected graph with exactly one label per vertex.
#[derive(Debug, Clone)]
pub struct LabeledGraph {
    vocabulary: Vocabulary,
    labels: Vec<Label>,
    adjacency: Vec<Vec<VertexId>>,
    edge_count: usize,
}

impl LabeledGraph {
    /// Builds a graph from `(id, label)` records and undirected edges.
    ///
    /// Ids must be exactly `0..n` in any order. Duplicate edges, including
    /// the reversed pair, collapse to a single edge.
    pub fn build<S: AsRef<str>>(
        vertex_records: &[(VertexId, S)],
        edge_records: &[(VertexId, VertexId)],
    ) -> Result<Self, GraphError> {
        let n = vertex_records.len();
        let mut vocabulary = Vocabulary::new();
        let mut labels: Vec<Option<Label>> = vec![None; n];
        for (id, name) in vertex_records {
            let slot = labels.get_mut(*id as usize).ok_or(GraphError::SparseVertexIds {
                len: n,
                missing: first_missing(vertex_records),
            })?;
            if slot.is_some() {
                return Err(GraphError::DuplicateVertexId(*id));
            }
            *slot = Some(vocabulary.intern(name.as_ref()));
        }
        // Every slot is filled: n records, no duplicates, all ids < n.
        let labels: Vec<Label> = labels.into_iter().map(|l| l.unwrap()).collect();

        let mut adjacency: Vec<Vec<VertexId>> = vec![Vec::new(); n];
        for &(u, v) in edge_records {
            if u as usize >= n || v as usize >= n {
                return Err(GraphError::UnknownEndpoint(u, v));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            adjacency[u as usize].push(v);
            adjacency[v as usize].push(u);
        }
        let mut edge_count = 0;
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Self {
            vocabulary,
            labels,
            adjacency,
            edge_count: edge_count / 2,
        })
    }

    /// Like [`LabeledGraph::build`] but with pre-interned labels sharing `vocabulary`.
    pub fn from_parts(
        vocabulary: Vocabulary,
        labels: Vec<Label>,
        edge_records: &[(VertexId, VertexId)],
    ) -> Result<Self, GraphError> {
        let records: Vec<(VertexId, &str)> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (i as VertexId, vocabulary.name(l)))
            .collect();
        let mut graph = Self::build(&records, edge_records)?;
        // Re-map onto the caller's vocabulary so label ids agree with it.
        graph.labels = labels;
        graph.vocabulary = vocabulary;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        0..self.labels.len() as VertexId
    }

    pub fn contains(&self, v: VertexId) -> bool {
        (v as usize) < self.labels.len()
    }

    pub fn label(&self, v: VertexId) -> Label {
        self.labels[v as usize]
    }

    pub fn label_name(&self, v: VertexId) -> &str {
        self.vocabulary.name(self.label(v))
    }

    /// Sorted neighbour list.
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.adjacency[v as usize]
    }

    pub fn are_adjacent(&self, u: VertexId, v: VertexId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    /// Label ids of a vertex sequence.
    pub fn label_string(&self, path: &[VertexId]) -> Vec<Label> {
        path.iter().map(|&v| self.label(v)).collect()
    }

    /// All undirected edges as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.vertices()
            .flat_map(move |u| self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
    }
}

fn first_missing<S>(records: &[(VertexId, S)]) -> VertexId {
    let mut seen = vec![false; records.len()];
    for (id, _) in records {
        if let Some(slot) = seen.get_mut(*id as usize) {
            *slot = true;
        }
    }
    seen.iter().position(|s| !s).unwrap_or(records.len()) as VertexId
}

/// Disjoint, covering assignment of vertices to `k` partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    assignment: Vec<PartitionId>,
    sizes: Vec<usize>,
}

impl Partitioning {
    pub fn new(k: usize, assignment: Vec<PartitionId>) -> Result<Self, GraphError> {
        if k == 0 {
            return Err(GraphError::ZeroPartitions);
        }
        let mut sizes = vec![0; k];
        for (v, &p) in assignment.iter().enumerate() {
            match sizes.get_mut(p as usize) {
                Some(s) => *s += 1,
                None => {
                    return Err(GraphError::PartitionOutOfRange {
                        vertex: v as VertexId,
                        partition: p,
                        k,
                    })
                }
            }
        }
        Ok(Self { assignment, sizes })
    }

    /// Checks the assignment covers exactly the vertices of `g`.
    pub fn for_graph(g: &LabeledGraph, k: usize, assignment: Vec<PartitionId>) -> Result<Self, GraphError> {
        if assignment.len() != g.len() {
            return Err(GraphError::AssignmentLength {
                expected: g.len(),
                got: assignment.len(),
            });
        }
        Self::new(k, assignment)
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn part(&self, v: VertexId) -> PartitionId {
        self.assignment[v as usize]
    }

    pub fn assignment(&self) -> &[PartitionId] {
        &self.assignment
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, p: PartitionId) -> usize {
        self.sizes[p as usize]
    }

    pub fn members(&self, p: PartitionId) -> impl Iterator<Item = VertexId> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &q)| q == p)
            .map(|(v, _)| v as VertexId)
    }

    pub fn move_vertex(&mut self, v: VertexId, to: PartitionId) {
        let from = self.assignment[v as usize];
        if from != to {
            self.sizes[from as usize] -= 1;
            self.sizes[to as usize] += 1;
            self.assignment[v as usize] = to;
        }
    }

    /// `max_i |V_i| / (|V| / k) - 1`.
    pub fn imbalance(&self) -> f64 {
        imbalance_of(&self.sizes)
    }

    /// Largest partition size allowed under imbalance cap `epsilon`.
    pub fn capacity(&self, epsilon: f64) -> f64 {
        (1.0 + epsilon) * self.len() as f64 / self.k() as f64
    }
}

pub fn imbalance_of(sizes: &[usize]) -> f64 {
    let total: usize = sizes.iter().sum();
    if total == 0 || sizes.is_empty() {
        return 0.0;
    }
    let mean = total as f64 / sizes.len() as f64;
    let max = sizes.iter().copied().max().unwrap_or(0) as f64;
    max / mean - 1.0
}

/// True iff some neighbour of `v` lies in a different partition.
pub fn is_boundary(g: &LabeledGraph, p: &Partitioning, v: VertexId) -> Result<bool, GraphError> {
    if !g.contains(v) {
        return Err(GraphError::UnknownVertex(v));
    }
    let home = p.part(v);
    Ok(g.neighbors(v).iter().any(|&n| p.part(n) != home))
}

/// Hash partitioning: `mix(seed, id) mod k`.
pub fn hash_partition(g: &LabeledGraph, k: usize, seed: u64) -> Result<Partitioning, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroPartitions);
    }
    if k > g.len().max(1) {
        return Err(GraphError::PartitionCountExceedsVertices { k, vertices: g.len() });
    }
    let assignment = g
        .vertices()
        .map(|v| (mix64(seed ^ mix64(v as u64)) % k as u64) as PartitionId)
        .collect();
    Partitioning::new(k, assignment)
}

// splitmix64 finalizer
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The six-vertex example graph; vertex `n` of the drawing is id `n - 1`.
    pub(crate) fn example_graph() -> LabeledGraph {
        let vertices = [(0, "a"), (1, "b"), (2, "c"), (3, "d"), (4, "c"), (5, "a")];
        let edges = [(1, 2), (2, 3), (2, 4), (2, 5), (3, 4), (3, 5), (3, 6), (4, 5), (5, 6)];
        let edges: Vec<_> = edges.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
        LabeledGraph::build(&vertices, &edges).unwrap()
    }

    pub(crate) fn split(assign_one_based: &[(u32, u32)]) -> Partitioning {
        let mut a = vec![0; assign_one_based.len()];
        for &(v, p) in assign_one_based {
            a[(v - 1) as usize] = p;
        }
        Partitioning::new(2, a).unwrap()
    }

    /// A = {1,2,4} -> 0, B = {3,5,6} -> 1.
    pub(crate) fn split_ab() -> Partitioning {
        split(&[(1, 0), (2, 0), (4, 0), (3, 1), (5, 1), (6, 1)])
    }

    #[test]
    fn example_neighbourhoods() {
        let g = example_graph();
        assert_eq!(g.neighbors(1), &[0, 2, 3, 4]);
        assert_eq!(g.neighbors(2), &[1, 3, 4, 5]);
        assert_eq!(g.edge_count(), 9);
        for u in g.vertices() {
            for &v in g.neighbors(u) {
                assert!(g.neighbors(v).contains(&u));
            }
        }
    }

    #[test]
    fn lone_vertex_has_no_neighbours() {
        let g = LabeledGraph::build(&[(0, "x")], &[]).unwrap();
        assert!(g.neighbors(0).is_empty());
    }

    #[test]
    fn reversed_duplicate_edges_collapse() {
        let g = LabeledGraph::build(&[(0, "x"), (1, "y")], &[(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn build_errors() {
        assert_eq!(
            LabeledGraph::build(&[(0, "x")], &[(0, 3)]).unwrap_err(),
            GraphError::UnknownEndpoint(0, 3)
        );
        assert_eq!(
            LabeledGraph::build(&[(0, "x"), (0, "y")], &[]).unwrap_err(),
            GraphError::DuplicateVertexId(0)
        );
        assert_eq!(
            LabeledGraph::build(&[(0, "x")], &[(0, 0)]).unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert!(matches!(
            LabeledGraph::build(&[(0, "x"), (5, "y")], &[]).unwrap_err(),
            GraphError::SparseVertexIds { missing: 1, .. }
        ));
    }

    #[test]
    fn boundary_flags() {
        let g = example_graph();
        let p = split_ab();
        assert!(is_boundary(&g, &p, 2).unwrap());
        assert!(!is_boundary(&g, &p, 0).unwrap());
        let single = Partitioning::new(1, vec![0; 6]).unwrap();
        assert!(g.vertices().all(|v| !is_boundary(&g, &single, v).unwrap()));
        assert_eq!(is_boundary(&g, &p, 17), Err(GraphError::UnknownVertex(17)));
    }

    #[test]
    fn imbalance_values() {
        assert_eq!(imbalance_of(&[5; 8]), 0.0);
        assert_eq!(imbalance_of(&[3, 3]), 0.0);
        assert!((imbalance_of(&[4, 2]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hash_partition_properties() {
        let g = example_graph();
        let one = hash_partition(&g, 1, 7).unwrap();
        assert!(one.assignment().iter().all(|&p| p == 0));
        assert_eq!(hash_partition(&g, 2, 3).unwrap(), hash_partition(&g, 2, 3).unwrap());
        assert!(matches!(
            hash_partition(&g, 7, 0),
            Err(GraphError::PartitionCountExceedsVertices { .. })
        ));

        let records: Vec<(VertexId, &str)> = (0..10_000).map(|i| (i, "x")).collect();
        let big = LabeledGraph::build(&records, &[]).unwrap();
        let p = hash_partition(&big, 8, 42).unwrap();
        assert!(p.imbalance() < 0.10, "imbalance {}", p.imbalance());
        assert_eq!(p.sizes().iter().sum::<usize>(), 10_000);
    }

    #[test]
    fn moves_keep_sizes_consistent() {
        let mut p = split_ab();
        p.move_vertex(2, 0);
        assert_eq!(p.sizes(), &[4, 2]);
        assert_eq!(p.members(1).collect::<Vec<_>>(), vec![4, 5]);
    }
}
