//! Entity-resolution toolkit for identifier-heavy data: builds equivalence
//! cliques from cross-reference mappings, serves normalization and
//! name-lookup queries over the result, assembles knowledge graphs whose
//! edges survive merging byte-for-byte deterministically, and measures how
//! much identifier harmonization increases overlap between datasets.

pub mod analytics;
pub mod cliques;
pub mod compendium;
pub mod conflation;
pub mod graph;
pub mod ingest;
pub mod ioutil;
pub mod model;
pub mod name_lookup;
pub mod normalizer;
