//! KGX-style node and edge records plus the five-part edge merge key.
//! Unrecognized JSON fields ride along in `properties` so passthrough
//! sources keep their payloads.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ioutil;
use crate::model::Curie;

use super::GraphError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: Curie,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "category", default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(flatten)]
    pub properties: BTreeMap<String, Value>,
}

impl NodeRecord {
    pub fn bare(id: Curie) -> Self {
        NodeRecord {
            id,
            name: None,
            categories: Vec::new(),
            properties: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub subject: Curie,
    pub predicate: String,
    pub object: Curie,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub qualifiers: BTreeMap<String, String>,
    pub primary_knowledge_source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aggregator_knowledge_sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub publications: Vec<String>,
    #[serde(flatten)]
    pub properties: BTreeMap<String, Value>,
}

impl EdgeRecord {
    /// Predicate and asserting source must be stated; empty strings carry
    /// no assertion.
    pub fn validate(&self) -> Result<(), String> {
        if self.predicate.is_empty() {
            return Err("edge is missing a predicate".to_string());
        }
        if self.primary_knowledge_source.is_empty() {
            return Err("edge is missing a primary knowledge source".to_string());
        }
        Ok(())
    }

    pub fn merge_key(&self) -> EdgeMergeKey {
        EdgeMergeKey {
            subject: self.subject.clone(),
            predicate: self.predicate.clone(),
            object: self.object.clone(),
            qualifiers: canonical_qualifiers(&self.qualifiers),
            primary_knowledge_source: self.primary_knowledge_source.clone(),
        }
    }
}

/// Two edges are the same assertion iff these five parts are equal after
/// qualifier canonicalization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeMergeKey {
    pub subject: Curie,
    pub predicate: String,
    pub object: Curie,
    pub qualifiers: String,
    pub primary_knowledge_source: String,
}

/// Renders qualifiers as `k=v` pairs sorted by key, joined by `;`.
/// Pairs with empty values are excluded — an empty qualifier asserts
/// nothing, so `{"x": ""}` and `{}` collide deliberately.
pub fn canonical_qualifiers(qualifiers: &BTreeMap<String, String>) -> String {
    let mut rendered = String::new();
    for (key, value) in qualifiers {
        if value.is_empty() {
            continue;
        }
        if !rendered.is_empty() {
            rendered.push(';');
        }
        rendered.push_str(key);
        rendered.push('=');
        rendered.push_str(value);
    }
    rendered
}

pub fn read_node_file(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<NodeRecord, GraphError>>, GraphError> {
    read_jsonl(path)
}

pub fn read_edge_file(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<EdgeRecord, GraphError>>, GraphError> {
    read_jsonl(path)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = Result<T, GraphError>>, GraphError> {
    let origin = path.as_ref().to_path_buf();
    let reader = ioutil::open_text(path.as_ref())?;
    Ok(ioutil::data_lines(reader).map(move |entry| {
        let (line_no, text) = entry?;
        serde_json::from_str(&text).map_err(|e| GraphError::MalformedInput {
            path: origin.clone(),
            line: line_no,
            message: e.to_string(),
        })
    }))
}

pub fn write_node_file<'a>(
    path: impl AsRef<Path>,
    nodes: impl IntoIterator<Item = &'a NodeRecord>,
) -> Result<u64, GraphError> {
    write_jsonl(path, nodes)
}

pub fn write_edge_file<'a>(
    path: impl AsRef<Path>,
    edges: impl IntoIterator<Item = &'a EdgeRecord>,
) -> Result<u64, GraphError> {
    write_jsonl(path, edges)
}

fn write_jsonl<T: Serialize>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = T>,
) -> Result<u64, GraphError> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut written = 0;
    for record in records {
        serde_json::to_writer(&mut out, &record).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
        written += 1;
    }
    out.flush()?;
    Ok(written)
}
