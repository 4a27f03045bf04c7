//! Per-source rewrites between parse and merge: identifier normalization
//! onto clique leaders, predicate harmonization, edge restriction, and
//! clique-closed property propagation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde_json::Value;

use crate::ioutil;
use crate::model::Curie;
use crate::normalizer::{ConflationFlags, NormalizerIndex};

use super::merge::merge_node_into;
use super::records::{
    read_edge_file, read_node_file, write_edge_file, write_node_file, EdgeRecord, NodeRecord,
};
use super::GraphError;

/// Category flagged onto nodes kept despite failing normalization.
pub const UNRESOLVED_CATEGORY: &str = "UnresolvedEntity";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OnUnresolvable {
    /// Remove the node and every incident edge, counting both.
    #[default]
    Drop,
    /// Keep the original identifier and flag it with [`UNRESOLVED_CATEGORY`].
    KeepOriginal,
}

#[derive(Debug, Clone, Copy, Default, serde::Deserialize, serde::Serialize)]
#[serde(default)]
pub struct NormalizationOptions {
    pub conflate_gene_protein: bool,
    pub conflate_drug_chemical: bool,
    pub on_unresolvable: OnUnresolvable,
}

impl NormalizationOptions {
    fn flags(&self) -> ConflationFlags {
        ConflationFlags {
            gene_protein: self.conflate_gene_protein,
            drug_chemical: self.conflate_drug_chemical,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NormalizeGraphStats {
    pub nodes_in: u64,
    pub nodes_out: u64,
    pub edges_in: u64,
    pub edges_out: u64,
    /// Node lines whose id resolved to a clique leader.
    pub resolved: u64,
    pub unresolved: u64,
    pub dropped_nodes: u64,
    pub dropped_edges: u64,
}

/// Rewrites node ids and edge endpoints to clique leaders, filling names
/// and categories from the cliques. Distinct input ids in one clique
/// coalesce into a single node.
pub fn normalize_graph(
    nodes_in: impl AsRef<Path>,
    edges_in: impl AsRef<Path>,
    index: &NormalizerIndex,
    options: &NormalizationOptions,
    nodes_out: impl AsRef<Path>,
    edges_out: impl AsRef<Path>,
) -> Result<NormalizeGraphStats, GraphError> {
    let flags = options.flags();
    let mut stats = NormalizeGraphStats::default();
    let mut merged: BTreeMap<Curie, NodeRecord> = BTreeMap::new();

    for node in read_node_file(&nodes_in)? {
        let node = node?;
        stats.nodes_in += 1;
        let rewritten = match index.normalize(&node.id, flags) {
            Some(result) => {
                stats.resolved += 1;
                let mut categories = result.type_lineage.clone();
                if categories.is_empty() {
                    categories.push(UNRESOLVED_CATEGORY.to_string());
                }
                NodeRecord {
                    id: result.id.identifier,
                    name: result.id.label,
                    categories,
                    properties: node.properties,
                }
            }
            None => {
                stats.unresolved += 1;
                match options.on_unresolvable {
                    OnUnresolvable::Drop => {
                        stats.dropped_nodes += 1;
                        continue;
                    }
                    OnUnresolvable::KeepOriginal => {
                        let mut kept = node;
                        if !kept.categories.iter().any(|c| c == UNRESOLVED_CATEGORY) {
                            kept.categories.push(UNRESOLVED_CATEGORY.to_string());
                        }
                        kept
                    }
                }
            }
        };
        match merged.get_mut(&rewritten.id) {
            Some(existing) => {
                merge_node_into(existing, &rewritten);
            }
            None => {
                merged.insert(rewritten.id.clone(), rewritten);
            }
        }
    }
    stats.nodes_out = write_node_file(&nodes_out, merged.values())?;

    let mut edges: Vec<EdgeRecord> = Vec::new();
    for edge in read_edge_file(&edges_in)? {
        let mut edge = edge?;
        stats.edges_in += 1;
        let subject = index.normalize(&edge.subject, flags);
        let object = index.normalize(&edge.object, flags);
        if (subject.is_none() || object.is_none())
            && options.on_unresolvable == OnUnresolvable::Drop
        {
            stats.dropped_edges += 1;
            continue;
        }
        if let Some(result) = subject {
            edge.subject = result.id.identifier;
        }
        if let Some(result) = object {
            edge.object = result.id.identifier;
        }
        edges.push(edge);
    }
    stats.edges_out = write_edge_file(&edges_out, &edges)?;
    Ok(stats)
}

/// Predicate harmonization table: `source_predicate <TAB>
/// canonical_predicate [<TAB> k=v;k=v]`. The canonical column defines the
/// canonical vocabulary — predicates found there pass through untouched
/// even without a row of their own.
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    mappings: HashMap<String, (String, BTreeMap<String, String>)>,
    canonical: BTreeSet<String>,
}

impl PredicateTable {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let origin = path.as_ref().to_path_buf();
        let mut table = PredicateTable::default();
        for entry in ioutil::data_lines(ioutil::open_text(path.as_ref())?) {
            let (line_no, text) = entry?;
            let malformed = |message: String| GraphError::MalformedTable {
                path: origin.clone(),
                line: line_no,
                message,
            };
            let fields: Vec<&str> = text.split('\t').collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(malformed(format!(
                    "expected 2 or 3 tab-separated fields, found {}",
                    fields.len()
                )));
            }
            let (source, canonical) = (fields[0], fields[1]);
            if source.is_empty() || canonical.is_empty() {
                return Err(malformed("empty predicate name".to_string()));
            }
            let mut qualifiers = BTreeMap::new();
            if let Some(&kvs) = fields.get(2) {
                for pair in kvs.split(';').filter(|p| !p.is_empty()) {
                    let (key, value) = pair
                        .split_once('=')
                        .ok_or_else(|| malformed(format!("qualifier {pair:?} is not k=v")))?;
                    if key.is_empty() || value.is_empty() {
                        return Err(malformed(format!("qualifier {pair:?} is not k=v")));
                    }
                    qualifiers.insert(key.to_string(), value.to_string());
                }
            }
            if table
                .mappings
                .insert(source.to_string(), (canonical.to_string(), qualifiers))
                .is_some()
            {
                return Err(malformed(format!("duplicate mapping for {source:?}")));
            }
            table.canonical.insert(canonical.to_string());
        }
        Ok(table)
    }

    pub fn is_empty(&self) -> bool {
        self.mappings.is_empty() && self.canonical.is_empty()
    }

    /// The canonical form and qualifiers for a predicate, or None when the
    /// predicate is neither mapped nor canonical.
    pub fn resolve<'a>(
        &'a self,
        predicate: &'a str,
    ) -> Option<(&'a str, Option<&'a BTreeMap<String, String>>)> {
        if let Some((canonical, qualifiers)) = self.mappings.get(predicate) {
            return Some((canonical, Some(qualifiers)));
        }
        if self.canonical.contains(predicate) {
            return Some((predicate, None));
        }
        None
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HarmonizeStats {
    pub edges_in: u64,
    pub edges_out: u64,
    /// Edges whose predicate text changed.
    pub rewritten: u64,
    pub dropped_unmapped: u64,
}

/// Rewrites predicates to canonical forms, merging the table's qualifiers
/// over the edge's own (table wins per key). Edges with predicates outside
/// the table's vocabulary are dropped and counted.
pub fn harmonize_predicates(
    edges_in: impl AsRef<Path>,
    table: &PredicateTable,
    edges_out: impl AsRef<Path>,
) -> Result<HarmonizeStats, GraphError> {
    let mut stats = HarmonizeStats::default();
    let mut edges: Vec<EdgeRecord> = Vec::new();
    for edge in read_edge_file(&edges_in)? {
        let mut edge = edge?;
        stats.edges_in += 1;
        let resolved = table
            .resolve(&edge.predicate)
            .map(|(canonical, qualifiers)| (canonical.to_string(), qualifiers.cloned()));
        match resolved {
            None => {
                stats.dropped_unmapped += 1;
            }
            Some((canonical, qualifiers)) => {
                if canonical != edge.predicate {
                    stats.rewritten += 1;
                    edge.predicate = canonical;
                }
                if let Some(qualifiers) = qualifiers {
                    edge.qualifiers.extend(qualifiers);
                }
                edges.push(edge);
            }
        }
    }
    stats.edges_out = write_edge_file(&edges_out, &edges)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RestrictStats {
    pub kept: u64,
    pub dropped: u64,
}

/// Keeps only edges with both endpoints in `node_ids`.
pub fn restrict_to_existing(
    edges_in: impl AsRef<Path>,
    node_ids: &BTreeSet<Curie>,
    edges_out: impl AsRef<Path>,
) -> Result<RestrictStats, GraphError> {
    let mut stats = RestrictStats::default();
    let mut edges: Vec<EdgeRecord> = Vec::new();
    for edge in read_edge_file(&edges_in)? {
        let edge = edge?;
        if node_ids.contains(&edge.subject) && node_ids.contains(&edge.object) {
            stats.kept += 1;
            edges.push(edge);
        } else {
            stats.dropped += 1;
        }
    }
    write_edge_file(&edges_out, &edges)?;
    Ok(stats)
}

/// One source-asserted property value destined for a node property.
pub type PropertyAssertion = (Curie, String, Value);

/// Reads `(id, to_property, value)` assertions from a parsed node file.
pub fn collect_assertions(
    nodes_in: impl AsRef<Path>,
    from_property: &str,
    to_property: &str,
) -> Result<Vec<PropertyAssertion>, GraphError> {
    let mut assertions = Vec::new();
    for node in read_node_file(&nodes_in)? {
        let node = node?;
        if let Some(value) = node.properties.get(from_property) {
            assertions.push((node.id.clone(), to_property.to_string(), value.clone()));
        }
    }
    Ok(assertions)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PropagationStats {
    pub assertions: u64,
    pub nodes_updated: u64,
    /// Scalar assertions that met a different existing value and were kept
    /// out (first-seen wins).
    pub conflicts: u64,
}

/// Applies assertions across cliques: each asserted id is resolved through
/// `leader_of`, so the property lands on the merged node no matter which
/// member id the source used. List values union; scalars fill only absent
/// slots.
pub fn propagate_properties(
    nodes_in: impl AsRef<Path>,
    assertions: &[PropertyAssertion],
    leader_of: impl Fn(&Curie) -> Curie,
    nodes_out: impl AsRef<Path>,
) -> Result<PropagationStats, GraphError> {
    let mut stats = PropagationStats {
        assertions: assertions.len() as u64,
        ..Default::default()
    };
    let mut by_leader: HashMap<Curie, Vec<(&String, &Value)>> = HashMap::new();
    for (id, key, value) in assertions {
        by_leader.entry(leader_of(id)).or_default().push((key, value));
    }

    let mut nodes: Vec<NodeRecord> = Vec::new();
    for node in read_node_file(&nodes_in)? {
        let mut node = node?;
        if let Some(pending) = by_leader.get(&node.id) {
            let mut touched = false;
            for (key, value) in pending {
                match node.properties.get_mut(*key) {
                    None => {
                        node.properties.insert((*key).clone(), (*value).clone());
                        touched = true;
                    }
                    Some(Value::Array(existing)) if value.is_array() => {
                        for item in value.as_array().expect("checked") {
                            if !existing.contains(item) {
                                existing.push(item.clone());
                                touched = true;
                            }
                        }
                    }
                    Some(existing) => {
                        if *existing != **value {
                            stats.conflicts += 1;
                        }
                    }
                }
            }
            if touched {
                stats.nodes_updated += 1;
            }
        }
        nodes.push(node);
    }
    write_node_file(&nodes_out, &nodes)?;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::PathBuf;

    use crate::model::{Clique, CliqueMember};
    use crate::normalizer::NormalizerIndex;

    fn curie(text: &str) -> Curie {
        Curie::parse(text).unwrap()
    }

    fn clique(members: &[&str], label: &str, type_name: &str) -> Clique {
        Clique {
            members: members
                .iter()
                .map(|m| CliqueMember::bare(curie(m)))
                .collect(),
            preferred_label: label.to_string(),
            type_name: type_name.to_string(),
            information_content: None,
        }
    }

    fn water_index() -> NormalizerIndex {
        NormalizerIndex::from_parts(
            [
                clique(
                    &["CHEBI:15377", "MESH:D014867", "PUBCHEM.COMPOUND:962"],
                    "water",
                    "SmallMolecule",
                ),
                clique(&["NCBIGene:100"], "ADA", "Gene"),
            ],
            Vec::new(),
            Vec::new(),
            None,
            "test",
        )
        .unwrap()
    }

    fn write_lines(dir: &Path, name: &str, lines: &[&str]) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }

    #[test]
    fn normalization_rewrites_to_leaders_and_coalesces_members() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_lines(
            dir.path(),
            "nodes.jsonl",
            &[
                r#"{"id":"MESH:D014867","name":"Water"}"#,
                r#"{"id":"PUBCHEM.COMPOUND:962","role":["solvent"]}"#,
                r#"{"id":"NCBIGene:100"}"#,
            ],
        );
        let edges = write_lines(
            dir.path(),
            "edges.jsonl",
            &[
                r#"{"subject":"PUBCHEM.COMPOUND:962","predicate":"affects","object":"NCBIGene:100","primary_knowledge_source":"infores:desk"}"#,
            ],
        );
        let nodes_out = dir.path().join("nodes.norm.jsonl");
        let edges_out = dir.path().join("edges.norm.jsonl");
        let stats = normalize_graph(
            &nodes,
            &edges,
            &water_index(),
            &NormalizationOptions::default(),
            &nodes_out,
            &edges_out,
        )
        .unwrap();
        assert_eq!(stats.nodes_in, 3);
        // Two water members collapse onto one leader node.
        assert_eq!(stats.nodes_out, 2);
        assert_eq!(stats.resolved, 3);
        assert_eq!(stats.unresolved, 0);

        let nodes: Vec<NodeRecord> = read_node_file(&nodes_out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        let water = nodes
            .iter()
            .find(|n| n.id == curie("CHEBI:15377"))
            .unwrap();
        assert_eq!(water.name.as_deref(), Some("water"));
        assert_eq!(water.categories, ["SmallMolecule"]);
        assert_eq!(water.properties.get("role"), Some(&serde_json::json!(["solvent"])));

        let edges: Vec<EdgeRecord> = read_edge_file(&edges_out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(edges[0].subject, curie("CHEBI:15377"));
    }

    #[test]
    fn unresolvable_policy_drop_removes_node_and_incident_edges() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_lines(
            dir.path(),
            "nodes.jsonl",
            &[r#"{"id":"MESH:D014867"}"#, r#"{"id":"UNKNOWN:1"}"#],
        );
        let edges = write_lines(
            dir.path(),
            "edges.jsonl",
            &[
                r#"{"subject":"UNKNOWN:1","predicate":"affects","object":"MESH:D014867","primary_knowledge_source":"infores:desk"}"#,
            ],
        );
        let nodes_out = dir.path().join("n.jsonl");
        let edges_out = dir.path().join("e.jsonl");
        let stats = normalize_graph(
            &nodes,
            &edges,
            &water_index(),
            &NormalizationOptions::default(),
            &nodes_out,
            &edges_out,
        )
        .unwrap();
        assert_eq!(stats.unresolved, 1);
        assert_eq!(stats.dropped_nodes, 1);
        assert_eq!(stats.dropped_edges, 1);
        assert_eq!(stats.edges_in, stats.edges_out + stats.dropped_edges);
    }

    #[test]
    fn unresolvable_policy_keep_flags_the_category() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_lines(dir.path(), "nodes.jsonl", &[r#"{"id":"UNKNOWN:1"}"#]);
        let edges = write_lines(dir.path(), "edges.jsonl", &[]);
        let nodes_out = dir.path().join("n.jsonl");
        let options = NormalizationOptions {
            on_unresolvable: OnUnresolvable::KeepOriginal,
            ..Default::default()
        };
        let stats = normalize_graph(
            &nodes,
            &edges,
            &water_index(),
            &options,
            &nodes_out,
            dir.path().join("e.jsonl"),
        )
        .unwrap();
        assert_eq!(stats.dropped_nodes, 0);
        let nodes: Vec<NodeRecord> = read_node_file(&nodes_out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(nodes[0].id, curie("UNKNOWN:1"));
        assert_eq!(nodes[0].categories, [UNRESOLVED_CATEGORY]);
    }

    fn sample_table(dir: &Path) -> PredicateTable {
        let path = write_lines(
            dir,
            "predicates.tsv",
            &[
                "inhibits\taffects\taspect=activity;direction=decreased",
                "treats\ttreats_or_applied_to_treat",
                "related_to\trelated_to",
            ],
        );
        PredicateTable::load(path).unwrap()
    }

    #[test]
    fn harmonization_maps_predicates_and_attaches_qualifiers() {
        let dir = tempfile::tempdir().unwrap();
        let table = sample_table(dir.path());
        let edges = write_lines(
            dir.path(),
            "edges.jsonl",
            &[
                r#"{"subject":"A:1","predicate":"inhibits","object":"B:2","primary_knowledge_source":"infores:x"}"#,
                r#"{"subject":"A:1","predicate":"affects","object":"B:3","primary_knowledge_source":"infores:x"}"#,
                r#"{"subject":"A:1","predicate":"frobnicates","object":"B:4","primary_knowledge_source":"infores:x"}"#,
            ],
        );
        let out = dir.path().join("out.jsonl");
        let stats = harmonize_predicates(&edges, &table, &out).unwrap();
        assert_eq!(stats.edges_in, 3);
        assert_eq!(stats.edges_out, 2);
        assert_eq!(stats.rewritten, 1);
        assert_eq!(stats.dropped_unmapped, 1);
        assert_eq!(stats.edges_in, stats.edges_out + stats.dropped_unmapped);

        let edges: Vec<EdgeRecord> = read_edge_file(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(edges[0].predicate, "affects");
        assert_eq!(edges[0].qualifiers.get("aspect").unwrap(), "activity");
        assert_eq!(edges[0].qualifiers.get("direction").unwrap(), "decreased");
        // Already canonical: untouched.
        assert_eq!(edges[1].predicate, "affects");
        assert!(edges[1].qualifiers.is_empty());
    }

    #[test]
    fn table_rejects_malformed_qualifier_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_lines(dir.path(), "bad.tsv", &["inhibits\taffects\tnot-a-pair"]);
        assert!(matches!(
            PredicateTable::load(path),
            Err(GraphError::MalformedTable { line: 1, .. })
        ));
    }

    #[test]
    fn restriction_requires_both_endpoints() {
        let dir = tempfile::tempdir().unwrap();
        let edges = write_lines(
            dir.path(),
            "edges.jsonl",
            &[
                r#"{"subject":"A:1","predicate":"subclass_of","object":"A:2","primary_knowledge_source":"infores:x"}"#,
                r#"{"subject":"A:1","predicate":"subclass_of","object":"A:9","primary_knowledge_source":"infores:x"}"#,
            ],
        );
        let known: BTreeSet<Curie> = [curie("A:1"), curie("A:2")].into_iter().collect();
        let out = dir.path().join("out.jsonl");
        let stats = restrict_to_existing(&edges, &known, &out).unwrap();
        assert_eq!(stats, RestrictStats { kept: 1, dropped: 1 });

        let empty: BTreeSet<Curie> = BTreeSet::new();
        let out2 = dir.path().join("out2.jsonl");
        let stats = restrict_to_existing(&edges, &empty, &out2).unwrap();
        assert_eq!(stats, RestrictStats { kept: 0, dropped: 2 });
    }

    #[test]
    fn propagation_reaches_nodes_through_their_cliques() {
        let dir = tempfile::tempdir().unwrap();
        let index = water_index();
        // Merged graph node is the leader; the assertion uses another member.
        let nodes = write_lines(
            dir.path(),
            "nodes.jsonl",
            &[r#"{"id":"CHEBI:15377","name":"water","category":["SmallMolecule"]}"#],
        );
        let assertions = vec![(
            curie("MESH:D014867"),
            "role".to_string(),
            serde_json::json!(["solvent"]),
        )];
        let out = dir.path().join("out.jsonl");
        let stats = propagate_properties(
            &nodes,
            &assertions,
            |id| index.leader_of(id).cloned().unwrap_or_else(|| id.clone()),
            &out,
        )
        .unwrap();
        assert_eq!(stats.nodes_updated, 1);
        let nodes: Vec<NodeRecord> = read_node_file(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(
            nodes[0].properties.get("role"),
            Some(&serde_json::json!(["solvent"]))
        );
    }

    #[test]
    fn propagation_unions_lists_and_keeps_first_scalar() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write_lines(
            dir.path(),
            "nodes.jsonl",
            &[r#"{"id":"A:1","role":["solvent"],"rank":1}"#],
        );
        let assertions = vec![
            (curie("A:1"), "role".to_string(), serde_json::json!(["coolant", "solvent"])),
            (curie("A:1"), "rank".to_string(), serde_json::json!(2)),
        ];
        let out = dir.path().join("out.jsonl");
        let stats =
            propagate_properties(&nodes, &assertions, |id| id.clone(), &out).unwrap();
        assert_eq!(stats.conflicts, 1);
        let nodes: Vec<NodeRecord> = read_node_file(&out)
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(
            nodes[0].properties.get("role"),
            Some(&serde_json::json!(["solvent", "coolant"]))
        );
        assert_eq!(nodes[0].properties.get("rank"), Some(&serde_json::json!(1)));
    }
}
