//! Graphspec-driven builds. Every stage writes its artifact into a
//! content-addressed directory keyed by (stage, source, version, config,
//! upstream hashes); a stage whose directory already exists is skipped, so
//! an unchanged spec re-executes nothing and a version bump re-executes
//! exactly the touched source's chain plus the merge. Artifact writes go
//! to a temp directory first and land via rename.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Curie, TypeTaxonomy};
use crate::normalizer::NormalizerIndex;

use super::merge::merge_graphs;
use super::parse::{parse_source, registered_parsers};
use super::records::{read_edge_file, read_node_file};
use super::transform::{
    collect_assertions, harmonize_predicates, normalize_graph, propagate_properties,
    restrict_to_existing, NormalizationOptions, NormalizeGraphStats, PredicateTable,
    PropertyAssertion,
};
use super::GraphError;

pub const LATEST_VERSION: &str = "latest";
const DEFAULT_BATCH_SIZE: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStrategy {
    /// Contribute all nodes and edges.
    #[default]
    Union,
    /// Contribute only what touches nodes the union sources established.
    RestrictToExistingNodes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub id: String,
    /// A concrete version, or "latest" to reuse the newest ingested one.
    pub version: String,
    /// Raw data to ingest; optional once the version is in the workdir.
    #[serde(default)]
    pub file: Option<PathBuf>,
    pub parser: String,
    #[serde(default)]
    pub merge_strategy: MergeStrategy,
    #[serde(default)]
    pub normalization: NormalizationOptions,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationRule {
    /// Source id whose parsed nodes assert the property.
    pub source: String,
    pub from_property: String,
    /// Defaults to `from_property`.
    #[serde(default)]
    pub to_property: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NormalizerFiles {
    pub compendia: Vec<PathBuf>,
    #[serde(default)]
    pub gene_protein: Option<PathBuf>,
    #[serde(default)]
    pub drug_chemical: Option<PathBuf>,
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub graph_id: String,
    pub normalizer: NormalizerFiles,
    #[serde(default)]
    pub predicate_map: Option<PathBuf>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub property_propagation: Vec<PropagationRule>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

impl GraphSpec {
    /// Reads YAML, resolving relative paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let mut spec: GraphSpec = serde_yaml::from_str(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in spec
            .normalizer
            .compendia
            .iter_mut()
            .chain(&mut spec.normalizer.gene_protein)
            .chain(&mut spec.normalizer.drug_chemical)
            .chain(&mut spec.normalizer.taxonomy)
            .chain(&mut spec.predicate_map)
            .chain(spec.sources.iter_mut().filter_map(|s| s.file.as_mut()))
        {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let invalid = |message: String| Err(GraphError::InvalidSpec(message));
        if self.graph_id.is_empty() {
            return invalid("graph_id is empty".to_string());
        }
        if self.batch_size == 0 {
            return invalid("batch_size must be at least 1".to_string());
        }
        if self.sources.is_empty() {
            return invalid("at least one source is required".to_string());
        }
        let mut ids = BTreeSet::new();
        for source in &self.sources {
            if !ids.insert(source.id.as_str()) {
                return invalid(format!("duplicate source id {:?}", source.id));
            }
            if !registered_parsers().contains(&source.parser.as_str()) {
                return invalid(format!(
                    "source {:?} names unregistered parser {:?}",
                    source.id, source.parser
                ));
            }
            if source.version.is_empty() {
                return invalid(format!("source {:?} has an empty version", source.id));
            }
        }
        if self
            .sources
            .iter()
            .all(|s| s.merge_strategy == MergeStrategy::RestrictToExistingNodes)
        {
            return invalid("every source restricts to existing nodes; none can establish them".to_string());
        }
        for rule in &self.property_propagation {
            if !ids.contains(rule.source.as_str()) {
                return invalid(format!(
                    "propagation rule names unknown source {:?}",
                    rule.source
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceMetadata {
    pub id: String,
    /// Concrete version used ("latest" already resolved).
    pub version: String,
    pub parser: String,
    pub resolved: u64,
    pub unresolved: u64,
    /// resolved / (resolved + unresolved); 1.0 for an empty source.
    pub normalization_success_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub graph_id: String,
    pub build_id: String,
    pub tool_name: String,
    pub tool_version: String,
    pub normalizer_build_id: String,
    pub sources: Vec<SourceMetadata>,
    pub nodes: u64,
    /// Nodes counted by their first (most specific) category.
    pub nodes_by_category: BTreeMap<String, u64>,
    pub edges: u64,
    pub edges_by_predicate: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageExecution {
    pub stage: String,
    pub artifact: String,
    pub executed: bool,
}

#[derive(Debug)]
pub struct BuildOutcome {
    pub node_file: PathBuf,
    pub edge_file: PathBuf,
    pub metadata_file: PathBuf,
    pub metadata: GraphMetadata,
    pub stages: Vec<StageExecution>,
}

impl BuildOutcome {
    pub fn executed_stages(&self) -> Vec<&str> {
        self.stages
            .iter()
            .filter(|s| s.executed)
            .map(|s| s.stage.as_str())
            .collect()
    }
}

fn hash_parts(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    format!("{:x}", hasher.finalize())[..12].to_string()
}

fn hash_file(path: &Path) -> Result<String, GraphError> {
    let mut hasher = Sha256::new();
    let mut file = fs::File::open(path)?;
    std::io::copy(&mut file, &mut hasher)?;
    Ok(format!("{:x}", hasher.finalize())[..16].to_string())
}

struct Stager {
    stages_dir: PathBuf,
    log: Vec<StageExecution>,
}

impl Stager {
    fn new(workdir: &Path) -> Result<Self, GraphError> {
        let stages_dir = workdir.join("stages");
        fs::create_dir_all(&stages_dir)?;
        Ok(Stager {
            stages_dir,
            log: Vec::new(),
        })
    }

    /// Runs `build` into a fresh artifact directory unless the artifact
    /// already exists. Either way returns the artifact path and its hash.
    fn stage(
        &mut self,
        label: String,
        key_parts: &[&str],
        build: impl FnOnce(&Path) -> Result<(), GraphError>,
    ) -> Result<(PathBuf, String), GraphError> {
        let hash = hash_parts(key_parts);
        let dir = self.stages_dir.join(&hash);
        if dir.is_dir() {
            self.log.push(StageExecution {
                stage: label,
                artifact: hash.clone(),
                executed: false,
            });
            return Ok((dir, hash));
        }
        let tmp = self
            .stages_dir
            .join(format!(".tmp-{hash}-{}", std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        build(&tmp)?;
        if let Err(rename_err) = fs::rename(&tmp, &dir) {
            // A concurrent build may have landed the same artifact first.
            if dir.is_dir() {
                fs::remove_dir_all(&tmp)?;
            } else {
                return Err(rename_err.into());
            }
        }
        self.log.push(StageExecution {
            stage: label,
            artifact: hash.clone(),
            executed: true,
        });
        Ok((dir, hash))
    }
}

fn write_stats<T: Serialize>(dir: &Path, stats: &T) -> Result<(), GraphError> {
    fs::write(
        dir.join("stats.json"),
        serde_json::to_vec_pretty(stats).map_err(std::io::Error::from)?,
    )?;
    Ok(())
}

fn read_stats<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<T, GraphError> {
    Ok(serde_json::from_slice(&fs::read(dir.join("stats.json"))?)
        .map_err(std::io::Error::from)?)
}

/// Copies raw data into `workdir/sources/<id>/<version>/raw` when absent
/// and returns the concrete version plus the content hash. "latest" picks
/// the lexicographically greatest ingested version.
fn ingest_source(
    workdir: &Path,
    source: &SourceSpec,
) -> Result<(String, PathBuf, String, bool), GraphError> {
    let source_dir = workdir.join("sources").join(&source.id);
    let version = if source.version == LATEST_VERSION {
        let mut versions: Vec<String> = Vec::new();
        if source_dir.is_dir() {
            for entry in fs::read_dir(&source_dir)? {
                let entry = entry?;
                if entry.file_type()?.is_dir() {
                    versions.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
        }
        versions.sort();
        versions.pop().ok_or_else(|| {
            GraphError::InvalidSpec(format!(
                "source {:?} wants the latest version but none is ingested",
                source.id
            ))
        })?
    } else {
        source.version.clone()
    };

    let raw = source_dir.join(&version).join("raw");
    let mut executed = false;
    if !raw.is_file() {
        let file = source.file.as_ref().ok_or_else(|| {
            GraphError::InvalidSpec(format!(
                "source {:?} version {version:?} is not ingested and no file is given",
                source.id
            ))
        })?;
        fs::create_dir_all(raw.parent().expect("raw has a parent"))?;
        let tmp = raw.with_file_name(".tmp-raw");
        fs::copy(file, &tmp)?;
        fs::rename(&tmp, &raw)?;
        executed = true;
    } else if let Some(file) = &source.file {
        if source.version != LATEST_VERSION && hash_file(file)? != hash_file(&raw)? {
            return Err(GraphError::InvalidSpec(format!(
                "source {:?} version {version:?} is already ingested with different content",
                source.id
            )));
        }
    }
    let hash = hash_file(&raw)?;
    Ok((version, raw, hash, executed))
}

struct SourceArtifacts {
    spec_index: usize,
    version: String,
    nodes: PathBuf,
    edges: PathBuf,
    /// Parsed (pre-normalization) node file, for property propagation.
    parsed_nodes: PathBuf,
    chain_hash: String,
    parse_hash: String,
    normalize_stats: NormalizeGraphStats,
}

/// Runs parse → normalize → harmonize → (restrict) → merge → propagate,
/// returning final artifact paths and metadata. Failed sources fail the
/// build; artifacts staged before the failure stay cached.
pub fn build_from_graphspec(
    spec: &GraphSpec,
    workdir: impl AsRef<Path>,
) -> Result<BuildOutcome, GraphError> {
    spec.validate()?;
    let workdir = workdir.as_ref();
    fs::create_dir_all(workdir)?;
    let mut stager = Stager::new(workdir)?;

    let taxonomy = spec
        .normalizer
        .taxonomy
        .as_deref()
        .map(TypeTaxonomy::load)
        .transpose()
        .map_err(|e| GraphError::InvalidSpec(format!("taxonomy: {e}")))?;
    let index = NormalizerIndex::load(
        &spec.normalizer.compendia,
        spec.normalizer.gene_protein.as_deref(),
        spec.normalizer.drug_chemical.as_deref(),
        taxonomy.as_ref(),
    )?;
    let normalizer_build_id = index.metadata().build_id.clone();

    let predicate_table = spec
        .predicate_map
        .as_deref()
        .map(PredicateTable::load)
        .transpose()?;
    let table_hash = match &spec.predicate_map {
        Some(path) => hash_file(path)?,
        None => "none".to_string(),
    };

    let mut artifacts: Vec<SourceArtifacts> = Vec::new();
    for (spec_index, source) in spec.sources.iter().enumerate() {
        let (version, raw, raw_hash, ingested) = ingest_source(workdir, source)?;
        stager.log.push(StageExecution {
            stage: format!("ingest:{}", source.id),
            artifact: raw_hash.clone(),
            executed: ingested,
        });

        let (parse_dir, parse_hash) = stager.stage(
            format!("parse:{}", source.id),
            &["parse", &source.id, &version, &source.parser, &raw_hash],
            |dir| {
                parse_source(
                    &source.parser,
                    &raw,
                    dir.join("nodes.jsonl"),
                    dir.join("edges.jsonl"),
                )?;
                Ok(())
            },
        )?;

        let options_key =
            serde_json::to_string(&source.normalization).map_err(std::io::Error::from)?;
        let (normalize_dir, normalize_hash) = stager.stage(
            format!("normalize:{}", source.id),
            &[
                "normalize",
                &source.id,
                &version,
                &options_key,
                &normalizer_build_id,
                &parse_hash,
            ],
            |dir| {
                let stats = normalize_graph(
                    parse_dir.join("nodes.jsonl"),
                    parse_dir.join("edges.jsonl"),
                    &index,
                    &source.normalization,
                    dir.join("nodes.jsonl"),
                    dir.join("edges.jsonl"),
                )?;
                write_stats(dir, &stats)
            },
        )?;
        let normalize_stats: NormalizeGraphStats = read_stats(&normalize_dir)?;

        let (nodes, edges, chain_hash) = match &predicate_table {
            None => (
                normalize_dir.join("nodes.jsonl"),
                normalize_dir.join("edges.jsonl"),
                normalize_hash,
            ),
            Some(table) => {
                let (dir, hash) = stager.stage(
                    format!("harmonize:{}", source.id),
                    &[
                        "harmonize",
                        &source.id,
                        &version,
                        &table_hash,
                        &normalize_hash,
                    ],
                    |dir| {
                        let stats = harmonize_predicates(
                            normalize_dir.join("edges.jsonl"),
                            table,
                            dir.join("edges.jsonl"),
                        )?;
                        write_stats(dir, &stats)
                    },
                )?;
                (normalize_dir.join("nodes.jsonl"), dir.join("edges.jsonl"), hash)
            }
        };

        artifacts.push(SourceArtifacts {
            spec_index,
            version,
            nodes,
            edges,
            parsed_nodes: parse_dir.join("nodes.jsonl"),
            chain_hash,
            parse_hash,
            normalize_stats,
        });
    }

    let union: Vec<&SourceArtifacts> = artifacts
        .iter()
        .filter(|a| spec.sources[a.spec_index].merge_strategy == MergeStrategy::Union)
        .collect();
    let restricted: Vec<&SourceArtifacts> = artifacts
        .iter()
        .filter(|a| {
            spec.sources[a.spec_index].merge_strategy == MergeStrategy::RestrictToExistingNodes
        })
        .collect();

    let batch_key = spec.batch_size.to_string();
    let merge_stage = |stager: &mut Stager,
                       label: String,
                       inputs: &[(PathBuf, PathBuf)],
                       upstream: &[&str]|
     -> Result<(PathBuf, String), GraphError> {
        let mut key: Vec<&str> = vec!["merge", &batch_key];
        key.extend_from_slice(upstream);
        stager.stage(label, &key, |dir| {
            let stats = merge_graphs(
                inputs,
                spec.batch_size,
                dir.join("spill"),
                dir.join("nodes.jsonl"),
                dir.join("edges.jsonl"),
            )?;
            fs::remove_dir(dir.join("spill"))?;
            write_stats(dir, &stats)
        })
    };

    let union_inputs: Vec<(PathBuf, PathBuf)> = union
        .iter()
        .map(|a| (a.nodes.clone(), a.edges.clone()))
        .collect();
    let union_hashes: Vec<&str> = union.iter().map(|a| a.chain_hash.as_str()).collect();

    let (merge_dir, merge_hash) = if restricted.is_empty() {
        merge_stage(&mut stager, "merge".to_string(), &union_inputs, &union_hashes)?
    } else {
        let (premerge_dir, premerge_hash) = merge_stage(
            &mut stager,
            "premerge".to_string(),
            &union_inputs,
            &union_hashes,
        )?;
        let mut known: BTreeSet<Curie> = BTreeSet::new();
        for node in read_node_file(premerge_dir.join("nodes.jsonl"))? {
            known.insert(node?.id);
        }
        let mut final_inputs = vec![(
            premerge_dir.join("nodes.jsonl"),
            premerge_dir.join("edges.jsonl"),
        )];
        let mut final_hashes: Vec<String> = vec![premerge_hash.clone()];
        for artifact in &restricted {
            let source_id = &spec.sources[artifact.spec_index].id;
            let (dir, hash) = stager.stage(
                format!("restrict:{source_id}"),
                &["restrict", &artifact.chain_hash, &premerge_hash],
                |dir| {
                    let stats = restrict_to_existing(
                        &artifact.edges,
                        &known,
                        dir.join("edges.jsonl"),
                    )?;
                    let mut nodes = Vec::new();
                    for node in read_node_file(&artifact.nodes)? {
                        let node = node?;
                        if known.contains(&node.id) {
                            nodes.push(node);
                        }
                    }
                    super::records::write_node_file(dir.join("nodes.jsonl"), &nodes)?;
                    write_stats(dir, &stats)
                },
            )?;
            final_inputs.push((dir.join("nodes.jsonl"), dir.join("edges.jsonl")));
            final_hashes.push(hash);
        }
        let upstream: Vec<&str> = final_hashes.iter().map(String::as_str).collect();
        merge_stage(&mut stager, "merge".to_string(), &final_inputs, &upstream)?
    };

    let (final_dir, build_id) = if spec.property_propagation.is_empty() {
        (merge_dir.clone(), merge_hash.clone())
    } else {
        let mut assertions: Vec<PropertyAssertion> = Vec::new();
        let mut rule_keys: Vec<String> = Vec::new();
        for rule in &spec.property_propagation {
            let artifact = artifacts
                .iter()
                .find(|a| spec.sources[a.spec_index].id == rule.source)
                .expect("validated rule source");
            let to_property = rule.to_property.as_deref().unwrap_or(&rule.from_property);
            assertions.extend(collect_assertions(
                &artifact.parsed_nodes,
                &rule.from_property,
                to_property,
            )?);
            rule_keys.push(format!(
                "{}>{}>{}>{}",
                rule.source, rule.from_property, to_property, artifact.parse_hash
            ));
        }
        let merge_edges = merge_dir.join("edges.jsonl");
        let mut key_parts: Vec<&str> = vec!["propagate", &merge_hash];
        key_parts.extend(rule_keys.iter().map(String::as_str));
        let (dir, hash) = stager.stage("propagate".to_string(), &key_parts, |dir| {
            let stats = propagate_properties(
                merge_dir.join("nodes.jsonl"),
                &assertions,
                |id| index.leader_of(id).cloned().unwrap_or_else(|| id.clone()),
                dir.join("nodes.jsonl"),
            )?;
            fs::copy(&merge_edges, dir.join("edges.jsonl"))?;
            write_stats(dir, &stats)
        })?;
        (dir, hash)
    };

    let node_file = final_dir.join("nodes.jsonl");
    let edge_file = final_dir.join("edges.jsonl");
    let sources_metadata = artifacts
        .iter()
        .map(|a| {
            let source = &spec.sources[a.spec_index];
            let stats = &a.normalize_stats;
            let attempted = stats.resolved + stats.unresolved;
            SourceMetadata {
                id: source.id.clone(),
                version: a.version.clone(),
                parser: source.parser.clone(),
                resolved: stats.resolved,
                unresolved: stats.unresolved,
                normalization_success_fraction: if attempted == 0 {
                    1.0
                } else {
                    stats.resolved as f64 / attempted as f64
                },
                provenance: source.provenance.clone(),
            }
        })
        .collect();
    let metadata = emit_metadata(
        &spec.graph_id,
        &build_id,
        &normalizer_build_id,
        sources_metadata,
        &node_file,
        &edge_file,
    )?;
    let metadata_file = final_dir.join("metadata.json");
    fs::write(
        &metadata_file,
        serde_json::to_vec_pretty(&metadata).map_err(std::io::Error::from)?,
    )?;

    Ok(BuildOutcome {
        node_file,
        edge_file,
        metadata_file,
        metadata,
        stages: stager.log,
    })
}

/// Counts straight off the emitted files so every figure is re-derivable
/// by scanning them.
pub fn emit_metadata(
    graph_id: &str,
    build_id: &str,
    normalizer_build_id: &str,
    sources: Vec<SourceMetadata>,
    node_file: &Path,
    edge_file: &Path,
) -> Result<GraphMetadata, GraphError> {
    let mut metadata = GraphMetadata {
        graph_id: graph_id.to_string(),
        build_id: build_id.to_string(),
        tool_name: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        normalizer_build_id: normalizer_build_id.to_string(),
        sources,
        nodes: 0,
        nodes_by_category: BTreeMap::new(),
        edges: 0,
        edges_by_predicate: BTreeMap::new(),
    };
    for node in read_node_file(node_file)? {
        let node = node?;
        metadata.nodes += 1;
        let category = node
            .categories
            .first()
            .cloned()
            .unwrap_or_else(|| "Uncategorized".to_string());
        *metadata.nodes_by_category.entry(category).or_default() += 1;
    }
    for edge in read_edge_file(edge_file)? {
        let edge = edge?;
        metadata.edges += 1;
        *metadata.edges_by_predicate.entry(edge.predicate).or_default() += 1;
    }
    Ok(metadata)
}
