//! Bit-exact artifact serialization. Compendia, synonym files, and
//! conflation files are newline-delimited JSON with fixed key order so the
//! same in-memory value always produces the same bytes. Readers accept
//! gzip-compressed files by `.gz` name. Writers are streaming: they hold
//! one record at a time.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cliques::NameTable;
use crate::ioutil;
use crate::model::{
    Clique, CliqueMember, ConflationPolicy, ConflationSet, Curie, ModelError, TypeTaxonomy,
};

#[derive(Debug, Error)]
pub enum CompendiumError {
    #[error("{path}:{line}: schema violation: {message}")]
    SchemaViolation {
        path: String,
        line: usize,
        message: String,
    },
    #[error("cliques not in leader order: {later} written after {earlier}")]
    UnsortedInput { earlier: Curie, later: Curie },
    #[error(transparent)]
    Invalid(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One compendium line. Key order is part of the format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CliqueLine {
    #[serde(rename = "type")]
    type_name: String,
    ic: Option<f64>,
    identifiers: Vec<IdentifierLine>,
    preferred_name: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentifierLine {
    i: Curie,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    l: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    d: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    t: Option<Vec<Curie>>,
}

fn to_line(clique: &Clique) -> CliqueLine {
    CliqueLine {
        type_name: clique.type_name.clone(),
        ic: clique.information_content,
        identifiers: clique
            .members
            .iter()
            .map(|m| IdentifierLine {
                i: m.curie.clone(),
                l: m.label.clone(),
                d: if m.descriptions.is_empty() {
                    None
                } else {
                    Some(m.descriptions.clone())
                },
                t: if m.taxa.is_empty() {
                    None
                } else {
                    Some(m.taxa.clone())
                },
            })
            .collect(),
        preferred_name: clique.preferred_label.clone(),
    }
}

fn from_line(line: CliqueLine) -> Clique {
    Clique {
        members: line
            .identifiers
            .into_iter()
            .map(|id| CliqueMember {
                curie: id.i,
                label: id.l,
                descriptions: id.d.unwrap_or_default(),
                taxa: id.t.unwrap_or_default(),
            })
            .collect(),
        preferred_label: line.preferred_name,
        type_name: line.type_name,
        information_content: line.ic,
    }
}

/// Writes cliques one JSON line each. Input must already be in canonical
/// leader order (the builder emits it that way); violations are an error
/// so the writer can stay streaming instead of sorting.
pub fn write_compendium<'a>(
    cliques: impl IntoIterator<Item = &'a Clique>,
    out: impl Write,
) -> Result<usize, CompendiumError> {
    let mut out = std::io::BufWriter::new(out);
    let mut previous: Option<Curie> = None;
    let mut count = 0;
    for clique in cliques {
        clique.validate()?;
        if let Some(earlier) = &previous {
            if clique.leader() <= earlier {
                return Err(CompendiumError::UnsortedInput {
                    earlier: earlier.clone(),
                    later: clique.leader().clone(),
                });
            }
        }
        previous = Some(clique.leader().clone());
        serde_json::to_writer(&mut out, &to_line(clique))
            .map_err(|e| CompendiumError::Io(e.into()))?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

pub fn write_compendium_file<'a>(
    cliques: impl IntoIterator<Item = &'a Clique>,
    path: impl AsRef<Path>,
) -> Result<usize, CompendiumError> {
    write_compendium(cliques, std::fs::File::create(path)?)
}

/// Streaming compendium reader; validates each clique as it is parsed.
pub struct CompendiumReader<R> {
    lines: ioutil::DataLines<R>,
    origin: String,
}

impl CompendiumReader<Box<dyn BufRead + Send>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CompendiumError> {
        let path = path.as_ref();
        Ok(CompendiumReader {
            lines: ioutil::data_lines(ioutil::open_text(path)?),
            origin: path.display().to_string(),
        })
    }
}

impl<R: BufRead> CompendiumReader<R> {
    pub fn new(reader: R, origin: &str) -> Self {
        CompendiumReader {
            lines: ioutil::data_lines(reader),
            origin: origin.to_string(),
        }
    }
}

impl<R: BufRead> Iterator for CompendiumReader<R> {
    type Item = Result<Clique, CompendiumError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = match self.lines.next()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e.into())),
        };
        let parsed: CliqueLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                return Some(Err(CompendiumError::SchemaViolation {
                    path: self.origin.clone(),
                    line: line_no,
                    message: e.to_string(),
                }))
            }
        };
        let clique = from_line(parsed);
        if let Err(e) = clique.validate() {
            return Some(Err(CompendiumError::SchemaViolation {
                path: self.origin.clone(),
                line: line_no,
                message: e.to_string(),
            }));
        }
        Some(Ok(clique))
    }
}

pub fn read_compendium_file(path: impl AsRef<Path>) -> Result<Vec<Clique>, CompendiumError> {
    CompendiumReader::open(path)?.collect()
}

/// One synonym-file line: everything the search index needs about a
/// clique, nothing more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynonymDocument {
    pub curie: Curie,
    pub preferred_name: String,
    /// Sorted, deduplicated union of all member labels and synonyms;
    /// always contains `preferred_name`.
    pub names: Vec<String>,
    pub types: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub taxa: Vec<Curie>,
}

pub fn synonym_document(
    clique: &Clique,
    names: &NameTable,
    taxonomy: Option<&TypeTaxonomy>,
) -> SynonymDocument {
    let mut all: std::collections::BTreeSet<String> = clique
        .member_curies()
        .filter_map(|c| names.get(c))
        .flat_map(|set| set.all_names().map(str::to_string))
        .collect();
    all.insert(clique.preferred_label.clone());
    let types = match taxonomy {
        Some(tax) if tax.contains(&clique.type_name) => tax.lineage(&clique.type_name),
        _ => vec![clique.type_name.clone()],
    };
    SynonymDocument {
        curie: clique.leader().clone(),
        preferred_name: clique.preferred_label.clone(),
        names: all.into_iter().collect(),
        types,
        taxa: clique.taxa(),
    }
}

pub fn write_synonyms<'a>(
    cliques: impl IntoIterator<Item = &'a Clique>,
    names: &NameTable,
    taxonomy: Option<&TypeTaxonomy>,
    out: impl Write,
) -> Result<usize, CompendiumError> {
    write_synonym_documents(
        cliques
            .into_iter()
            .map(|clique| synonym_document(clique, names, taxonomy)),
        out,
    )
}

pub fn write_synonym_documents(
    documents: impl IntoIterator<Item = SynonymDocument>,
    out: impl Write,
) -> Result<usize, CompendiumError> {
    let mut out = std::io::BufWriter::new(out);
    let mut count = 0;
    for document in documents {
        serde_json::to_writer(&mut out, &document)
            .map_err(|e| CompendiumError::Io(e.into()))?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

pub fn read_synonyms(reader: impl BufRead, origin: &str) -> Result<Vec<SynonymDocument>, CompendiumError> {
    let mut documents = Vec::new();
    for item in ioutil::data_lines(reader) {
        let (line_no, line) = item?;
        let document: SynonymDocument =
            serde_json::from_str(&line).map_err(|e| CompendiumError::SchemaViolation {
                path: origin.to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        documents.push(document);
    }
    Ok(documents)
}

pub fn read_synonyms_file(path: impl AsRef<Path>) -> Result<Vec<SynonymDocument>, CompendiumError> {
    let path = path.as_ref();
    read_synonyms(ioutil::open_text(path)?, &path.display().to_string())
}

/// One JSON array of rendered identifiers per line, order preserved.
pub fn write_conflation(
    sets: &[ConflationSet],
    out: impl Write,
) -> Result<(), CompendiumError> {
    let mut out = std::io::BufWriter::new(out);
    for set in sets {
        serde_json::to_writer(&mut out, &set.leaders)
            .map_err(|e| CompendiumError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_conflation(
    reader: impl BufRead,
    origin: &str,
    policy: ConflationPolicy,
) -> Result<Vec<ConflationSet>, CompendiumError> {
    let mut sets = Vec::new();
    for item in ioutil::data_lines(reader) {
        let (line_no, line) = item?;
        let violation = |message: String| CompendiumError::SchemaViolation {
            path: origin.to_string(),
            line: line_no,
            message,
        };
        let leaders: Vec<Curie> =
            serde_json::from_str(&line).map_err(|e| violation(e.to_string()))?;
        let set = ConflationSet::new(policy, leaders).map_err(|e| violation(e.to_string()))?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn read_conflation_file(
    path: impl AsRef<Path>,
    policy: ConflationPolicy,
) -> Result<Vec<ConflationSet>, CompendiumError> {
    let path = path.as_ref();
    read_conflation(
        ioutil::open_text(path)?,
        &path.display().to_string(),
        policy,
    )
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct KgxEquivalenceNode {
    id: Curie,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    name: Option<String>,
    category: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct KgxEquivalenceEdge {
    subject: Curie,
    predicate: String,
    object: Curie,
}

/// Explicit node-and-edge form of the equivalence structure: one node per
/// member, one `same_as` edge from each non-leader to its leader.
pub fn export_kgx_equivalence<'a>(
    cliques: impl IntoIterator<Item = &'a Clique>,
    node_out: impl Write,
    edge_out: impl Write,
) -> Result<(usize, usize), CompendiumError> {
    let mut node_out = std::io::BufWriter::new(node_out);
    let mut edge_out = std::io::BufWriter::new(edge_out);
    let mut nodes = 0;
    let mut edges = 0;
    for clique in cliques {
        let leader = clique.leader().clone();
        for member in &clique.members {
            let node = KgxEquivalenceNode {
                id: member.curie.clone(),
                name: member.label.clone(),
                category: vec![clique.type_name.clone()],
            };
            serde_json::to_writer(&mut node_out, &node)
                .map_err(|e| CompendiumError::Io(e.into()))?;
            node_out.write_all(b"\n")?;
            nodes += 1;
            if member.curie != leader {
                let edge = KgxEquivalenceEdge {
                    subject: member.curie.clone(),
                    predicate: "same_as".to_string(),
                    object: leader.clone(),
                };
                serde_json::to_writer(&mut edge_out, &edge)
                    .map_err(|e| CompendiumError::Io(e.into()))?;
                edge_out.write_all(b"\n")?;
                edges += 1;
            }
        }
    }
    node_out.flush()?;
    edge_out.flush()?;
    Ok((nodes, edges))
}

/// Cross-compendium consistency findings: identifiers appearing in more
/// than one clique, and preferred names shared by more than one clique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DuplicateReport {
    pub multi_clique_curies: Vec<(Curie, Vec<Curie>)>,
    pub duplicate_labels: Vec<(String, Vec<Curie>)>,
}

impl DuplicateReport {
    pub fn is_empty(&self) -> bool {
        self.multi_clique_curies.is_empty() && self.duplicate_labels.is_empty()
    }
}

/// Scans compendium files and reports duplicates. Nothing is merged or
/// repaired — the report is the product.
pub fn detect_duplicates(
    paths: &[impl AsRef<Path>],
) -> Result<DuplicateReport, CompendiumError> {
    let mut by_curie: BTreeMap<Curie, Vec<Curie>> = BTreeMap::new();
    let mut by_label: BTreeMap<String, Vec<Curie>> = BTreeMap::new();
    for path in paths {
        for clique in CompendiumReader::open(path)? {
            let clique = clique?;
            let leader = clique.leader().clone();
            for member in clique.member_curies() {
                by_curie.entry(member.clone()).or_default().push(leader.clone());
            }
            by_label
                .entry(clique.preferred_label.clone())
                .or_default()
                .push(leader);
        }
    }
    let mut report = DuplicateReport::default();
    for (curie, mut leaders) in by_curie {
        if leaders.len() >= 2 {
            leaders.sort();
            report.multi_clique_curies.push((curie, leaders));
        }
    }
    for (label, mut leaders) in by_label {
        if leaders.len() >= 2 {
            leaders.sort();
            report.duplicate_labels.push((label, leaders));
        }
    }
    Ok(report)
}

/// TSV rendering of a duplicate report: `kind<TAB>key<TAB>leaders_csv`.
pub fn write_report(report: &DuplicateReport, out: impl Write) -> Result<(), CompendiumError> {
    let mut out = std::io::BufWriter::new(out);
    let csv = |leaders: &[Curie]| {
        leaders
            .iter()
            .map(Curie::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    for (curie, leaders) in &report.multi_clique_curies {
        writeln!(out, "identifier\t{curie}\t{}", csv(leaders))?;
    }
    for (label, leaders) in &report.duplicate_labels {
        writeln!(out, "label\t{label}\t{}", csv(leaders))?;
    }
    out.flush()?;
    Ok(())
}
