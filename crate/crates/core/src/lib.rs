//! Workload-aware refinement of k-way graph partitionings.
//!
//! Regular path queries from a workload are summarised in a prefix trie of
//! label strings ([`tpstry`]). Per-partition visitor matrices ([`vm`]) turn
//! that summary into path-conditioned transition probabilities, from which
//! each vertex gets an *extroversion*: the chance that the next traversal
//! through it leaves its partition. The [`swapper`] moves highly extroverted
//! vertices, with the neighbours that feed them, to the partitions they talk
//! to most. [`query_exec`] measures the result by counting inter-partition
//! traversals while evaluating the workload.

pub mod engine;
pub mod gen;
pub mod graph;
pub mod io;
pub mod query_exec;
pub mod rpq;
pub mod swapper;
pub mod tpstry;
pub mod vm;

mod error;

pub use error::Error;
pub use graph::{hash_partition, is_boundary, Label, LabeledGraph, PartitionId, Partitioning, VertexId, Vocabulary};
pub use rpq::{parse, QueryExpr, QueryHash, Workload};
pub use tpstry::Tpstry;
