use thiserror::Error;

use crate::graph::GraphError;
use crate::io::FormatError;
use crate::rpq::{ExpandError, SyntaxError, WorkloadError};
use crate::swapper::SwapError;
use crate::tpstry::TrieError;
use crate::vm::VmError;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Trie(#[from] TrieError),
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error(transparent)]
    Swap(#[from] SwapError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
