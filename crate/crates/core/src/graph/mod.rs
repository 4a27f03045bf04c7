//! Knowledge-graph assembly: parse sources into node/edge JSON Lines,
//! rewrite identifiers onto clique leaders, harmonize predicates, merge
//! with bounded memory, and drive the whole pipeline from a YAML graphspec
//! with content-addressed stage caching.

mod build;
mod merge;
mod parse;
mod records;
mod transform;

pub use build::{
    build_from_graphspec, BuildOutcome, GraphMetadata, GraphSpec, MergeStrategy,
    PropagationRule, SourceMetadata, SourceSpec, StageExecution,
};
pub use merge::{merge_graphs, MergeStats};
pub use parse::{parse_source, registered_parsers, ParsedCounts};
pub use records::{
    canonical_qualifiers, read_edge_file, read_node_file, write_edge_file, write_node_file,
    EdgeMergeKey, EdgeRecord, NodeRecord,
};
pub use transform::{
    collect_assertions, harmonize_predicates, normalize_graph, propagate_properties,
    restrict_to_existing, HarmonizeStats, NormalizationOptions, NormalizeGraphStats,
    OnUnresolvable, PredicateTable, PropagationStats, PropertyAssertion, RestrictStats,
    UNRESOLVED_CATEGORY,
};

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::normalizer::NormalizerError;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no parser named {0:?} is registered")]
    UnknownParser(String),
    #[error("{path}:{line}: {message}")]
    MalformedInput {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    MalformedTable {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid graphspec: {0}")]
    InvalidSpec(String),
    #[error("spill directory {path} is unwritable")]
    SpillDirUnwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Normalizer(#[from] NormalizerError),
    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}
