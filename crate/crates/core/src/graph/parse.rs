//! Source parsers. Each turns one raw file into intermediate node and edge
//! JSON Lines; identifiers must parse as Curies but are not yet normalized.
//!
//! Three parsers are registered:
//! - `generic_tsv`: record-tagged rows, `node <TAB> id [<TAB> name [<TAB>
//!   cat1|cat2]]` or `edge <TAB> subject <TAB> predicate <TAB> object <TAB>
//!   source [<TAB> pub1|pub2]`, with `-` for an absent name.
//! - `association_csv`: header `subject,relation,object,source`; every row
//!   becomes one edge plus bare endpoint nodes, first seen first.
//! - `jsonl_passthrough`: mixed KGX-style lines split by shape — objects
//!   with a `subject` are edges, objects with an `id` are nodes — and
//!   copied byte-for-byte apart from line endings.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::ioutil;
use crate::model::Curie;

use super::records::{EdgeRecord, NodeRecord};
use super::GraphError;

pub const GENERIC_TSV: &str = "generic_tsv";
pub const ASSOCIATION_CSV: &str = "association_csv";
pub const JSONL_PASSTHROUGH: &str = "jsonl_passthrough";

pub fn registered_parsers() -> [&'static str; 3] {
    [GENERIC_TSV, ASSOCIATION_CSV, JSONL_PASSTHROUGH]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParsedCounts {
    pub nodes: u64,
    pub edges: u64,
}

pub fn parse_source(
    parser: &str,
    raw: impl AsRef<Path>,
    nodes_out: impl AsRef<Path>,
    edges_out: impl AsRef<Path>,
) -> Result<ParsedCounts, GraphError> {
    match parser {
        GENERIC_TSV => parse_generic_tsv(raw.as_ref(), nodes_out.as_ref(), edges_out.as_ref()),
        ASSOCIATION_CSV => {
            parse_association_csv(raw.as_ref(), nodes_out.as_ref(), edges_out.as_ref())
        }
        JSONL_PASSTHROUGH => {
            parse_jsonl_passthrough(raw.as_ref(), nodes_out.as_ref(), edges_out.as_ref())
        }
        other => Err(GraphError::UnknownParser(other.to_string())),
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::MalformedInput {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_curie(path: &Path, line: usize, text: &str) -> Result<Curie, GraphError> {
    Curie::parse(text).map_err(|e| malformed(path, line, e.to_string()))
}

struct JsonlSink {
    nodes: BufWriter<File>,
    edges: BufWriter<File>,
    counts: ParsedCounts,
}

impl JsonlSink {
    fn create(nodes_out: &Path, edges_out: &Path) -> Result<Self, GraphError> {
        Ok(JsonlSink {
            nodes: BufWriter::new(File::create(nodes_out)?),
            edges: BufWriter::new(File::create(edges_out)?),
            counts: ParsedCounts { nodes: 0, edges: 0 },
        })
    }

    fn node(&mut self, record: &NodeRecord) -> Result<(), GraphError> {
        serde_json::to_writer(&mut self.nodes, record).map_err(std::io::Error::from)?;
        self.nodes.write_all(b"\n")?;
        self.counts.nodes += 1;
        Ok(())
    }

    fn edge(&mut self, record: &EdgeRecord) -> Result<(), GraphError> {
        serde_json::to_writer(&mut self.edges, record).map_err(std::io::Error::from)?;
        self.edges.write_all(b"\n")?;
        self.counts.edges += 1;
        Ok(())
    }

    fn raw_node(&mut self, line: &str) -> Result<(), GraphError> {
        self.nodes.write_all(line.as_bytes())?;
        self.nodes.write_all(b"\n")?;
        self.counts.nodes += 1;
        Ok(())
    }

    fn raw_edge(&mut self, line: &str) -> Result<(), GraphError> {
        self.edges.write_all(line.as_bytes())?;
        self.edges.write_all(b"\n")?;
        self.counts.edges += 1;
        Ok(())
    }

    fn finish(mut self) -> Result<ParsedCounts, GraphError> {
        self.nodes.flush()?;
        self.edges.flush()?;
        Ok(self.counts)
    }
}

fn parse_generic_tsv(
    raw: &Path,
    nodes_out: &Path,
    edges_out: &Path,
) -> Result<ParsedCounts, GraphError> {
    let mut sink = JsonlSink::create(nodes_out, edges_out)?;
    for entry in ioutil::data_lines(ioutil::open_text(raw)?) {
        let (line_no, text) = entry?;
        let fields: Vec<&str> = text.split('\t').collect();
        match fields[0] {
            "node" => {
                if !(2..=4).contains(&fields.len()) {
                    return Err(malformed(raw, line_no, "node rows take 1 to 3 fields"));
                }
                let mut record = NodeRecord::bare(parse_curie(raw, line_no, fields[1])?);
                if let Some(&name) = fields.get(2) {
                    if name != "-" && !name.is_empty() {
                        record.name = Some(name.to_string());
                    }
                }
                if let Some(&cats) = fields.get(3) {
                    record.categories = split_list(cats);
                }
                sink.node(&record)?;
            }
            "edge" => {
                if !(5..=6).contains(&fields.len()) {
                    return Err(malformed(raw, line_no, "edge rows take 4 or 5 fields"));
                }
                let record = EdgeRecord {
                    subject: parse_curie(raw, line_no, fields[1])?,
                    predicate: fields[2].to_string(),
                    object: parse_curie(raw, line_no, fields[3])?,
                    qualifiers: Default::default(),
                    primary_knowledge_source: fields[4].to_string(),
                    aggregator_knowledge_sources: Vec::new(),
                    publications: fields.get(5).map(|&p| split_list(p)).unwrap_or_default(),
                    properties: Default::default(),
                };
                record
                    .validate()
                    .map_err(|m| malformed(raw, line_no, m))?;
                sink.edge(&record)?;
            }
            other => {
                return Err(malformed(
                    raw,
                    line_no,
                    format!("unknown record tag {other:?}"),
                ));
            }
        }
    }
    sink.finish()
}

fn split_list(text: &str) -> Vec<String> {
    if text == "-" || text.is_empty() {
        return Vec::new();
    }
    text.split('|')
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_association_csv(
    raw: &Path,
    nodes_out: &Path,
    edges_out: &Path,
) -> Result<ParsedCounts, GraphError> {
    let mut sink = JsonlSink::create(nodes_out, edges_out)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(ioutil::open_text(raw)?);
    let headers = reader.headers().map_err(|e| malformed(raw, 1, e.to_string()))?;
    let expected = ["subject", "relation", "object", "source"];
    if headers.iter().ne(expected) {
        return Err(malformed(
            raw,
            1,
            format!("expected header {expected:?}, found {headers:?}"),
        ));
    }
    let mut seen_nodes: BTreeSet<Curie> = BTreeSet::new();
    for row in reader.into_records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or_default();
            malformed(raw, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or_default();
        if row.len() != 4 {
            return Err(malformed(raw, line, "expected 4 columns"));
        }
        let record = EdgeRecord {
            subject: parse_curie(raw, line, &row[0])?,
            predicate: row[1].to_string(),
            object: parse_curie(raw, line, &row[2])?,
            qualifiers: Default::default(),
            primary_knowledge_source: row[3].to_string(),
            aggregator_knowledge_sources: Vec::new(),
            publications: Vec::new(),
            properties: Default::default(),
        };
        record.validate().map_err(|m| malformed(raw, line, m))?;
        for endpoint in [&record.subject, &record.object] {
            if seen_nodes.insert(endpoint.clone()) {
                sink.node(&NodeRecord::bare(endpoint.clone()))?;
            }
        }
        sink.edge(&record)?;
    }
    sink.finish()
}

fn parse_jsonl_passthrough(
    raw: &Path,
    nodes_out: &Path,
    edges_out: &Path,
) -> Result<ParsedCounts, GraphError> {
    let mut sink = JsonlSink::create(nodes_out, edges_out)?;
    for entry in ioutil::data_lines(ioutil::open_text(raw)?) {
        let (line_no, text) = entry?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| malformed(raw, line_no, e.to_string()))?;
        let object = value
            .as_object()
            .ok_or_else(|| malformed(raw, line_no, "expected a JSON object"))?;
        if object.contains_key("subject") {
            let edge: EdgeRecord = serde_json::from_str(&text)
                .map_err(|e| malformed(raw, line_no, e.to_string()))?;
            edge.validate().map_err(|m| malformed(raw, line_no, m))?;
            sink.raw_edge(&text)?;
        } else if object.contains_key("id") {
            serde_json::from_str::<NodeRecord>(&text)
                .map_err(|e| malformed(raw, line_no, e.to_string()))?;
            sink.raw_node(&text)?;
        } else {
            return Err(malformed(
                raw,
                line_no,
                "line is neither a node (id) nor an edge (subject)",
            ));
        }
    }
    sink.finish()
}
