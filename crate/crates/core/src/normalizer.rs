//! In-memory identifier normalization: loads compendia and conflation
//! files into seven logical tables and answers batch queries that rewrite
//! any identifier to its clique leader, optionally expanded by conflation.
//! The index is immutable after load — share it behind an `Arc` and swap
//! the `Arc` to update.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::compendium::{self, CompendiumError, CompendiumReader};
use crate::model::{Clique, ConflationPolicy, ConflationSet, Curie, TypeTaxonomy};

#[derive(Debug, Error)]
pub enum NormalizerError {
    #[error("leader {0} appears in more than one loaded clique")]
    DuplicateLeader(Curie),
    #[error("conflation set references {0}, which is not a loaded clique leader")]
    UnknownConflationLeader(Curie),
    #[error(transparent)]
    Compendium(#[from] CompendiumError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Clique-level facts keyed by leader. `members` keeps the compendium
/// member order so results render identically to the source artifact.
#[derive(Debug, Clone, Default)]
pub struct LeaderProperties {
    pub preferred_name: String,
    pub information_content: Option<f64>,
    pub descriptions: Vec<String>,
    pub taxa: Vec<Curie>,
    pub members: Vec<Curie>,
}

/// Everything `/status` reports.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct IndexMetadata {
    pub build_id: String,
    pub cliques: u64,
    pub identifiers: u64,
    pub supports_gene_protein: bool,
    pub supports_drug_chemical: bool,
    pub types: Vec<String>,
    /// type name → prefix → member-identifier count.
    pub prefix_distribution: BTreeMap<String, BTreeMap<String, u64>>,
}

/// Which conflations to apply at query time. Both default off; results
/// are then pure clique membership.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConflationFlags {
    pub gene_protein: bool,
    pub drug_chemical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifierAndLabel {
    pub identifier: Curie,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationResult {
    pub id: IdentifierAndLabel,
    pub equivalent_identifiers: Vec<IdentifierAndLabel>,
    /// Most specific first.
    #[serde(rename = "type")]
    pub type_lineage: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub information_content: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub taxa: Vec<Curie>,
}

/// The seven tables: (1) id→label, (2) id→leader, (3) leader→type,
/// (4) leader→properties, (5) metadata, (6) gene_protein leader→set,
/// (7) drug_chemical leader→set. Plus derived type lineages.
#[derive(Debug, Clone)]
pub struct NormalizerIndex {
    id_to_label: HashMap<Curie, String>,
    id_to_leader: HashMap<Curie, Curie>,
    leader_to_type: HashMap<Curie, String>,
    leader_to_props: HashMap<Curie, LeaderProperties>,
    metadata: IndexMetadata,
    gene_protein: HashMap<Curie, Vec<Curie>>,
    drug_chemical: HashMap<Curie, Vec<Curie>>,
    lineages: HashMap<String, Vec<String>>,
}

impl NormalizerIndex {
    /// Builds an index from already-loaded artifacts.
    pub fn from_parts(
        cliques: impl IntoIterator<Item = Clique>,
        gene_protein: Vec<ConflationSet>,
        drug_chemical: Vec<ConflationSet>,
        taxonomy: Option<&TypeTaxonomy>,
        build_id: impl Into<String>,
    ) -> Result<Self, NormalizerError> {
        let mut index = NormalizerIndex {
            id_to_label: HashMap::new(),
            id_to_leader: HashMap::new(),
            leader_to_type: HashMap::new(),
            leader_to_props: HashMap::new(),
            metadata: IndexMetadata {
                build_id: build_id.into(),
                cliques: 0,
                identifiers: 0,
                supports_gene_protein: false,
                supports_drug_chemical: false,
                types: Vec::new(),
                prefix_distribution: BTreeMap::new(),
            },
            gene_protein: HashMap::new(),
            drug_chemical: HashMap::new(),
            lineages: HashMap::new(),
        };
        for clique in cliques {
            index.add_clique(clique)?;
        }
        index.metadata.supports_gene_protein = !gene_protein.is_empty();
        index.metadata.supports_drug_chemical = !drug_chemical.is_empty();
        for set in gene_protein {
            index.add_conflation(set)?;
        }
        for set in drug_chemical {
            index.add_conflation(set)?;
        }
        index.metadata.types = index
            .metadata
            .prefix_distribution
            .keys()
            .cloned()
            .collect();
        for type_name in &index.metadata.types {
            let lineage = match taxonomy {
                Some(tax) if tax.contains(type_name) => tax.lineage(type_name),
                _ => vec![type_name.clone()],
            };
            index.lineages.insert(type_name.clone(), lineage);
        }
        Ok(index)
    }

    /// Loads compendium and conflation files. The build id is a content
    /// hash over every input file, so identical artifacts give identical
    /// ids.
    pub fn load(
        compendia: &[impl AsRef<Path>],
        gene_protein: Option<&Path>,
        drug_chemical: Option<&Path>,
        taxonomy: Option<&TypeTaxonomy>,
    ) -> Result<Self, NormalizerError> {
        let mut hasher = Sha256::new();
        for path in compendia {
            hash_file(&mut hasher, path.as_ref())?;
        }
        for path in [gene_protein, drug_chemical].into_iter().flatten() {
            hash_file(&mut hasher, path)?;
        }
        let build_id = format!("{:x}", hasher.finalize());

        let mut cliques = Vec::new();
        for path in compendia {
            for clique in CompendiumReader::open(path)? {
                cliques.push(clique?);
            }
        }
        let gene_protein = match gene_protein {
            Some(path) => compendium::read_conflation_file(path, ConflationPolicy::GeneProtein)?,
            None => Vec::new(),
        };
        let drug_chemical = match drug_chemical {
            Some(path) => compendium::read_conflation_file(path, ConflationPolicy::DrugChemical)?,
            None => Vec::new(),
        };
        Self::from_parts(
            cliques,
            gene_protein,
            drug_chemical,
            taxonomy,
            &build_id[..16],
        )
    }

    fn add_clique(&mut self, clique: Clique) -> Result<(), NormalizerError> {
        let leader = clique.leader().clone();
        if self.leader_to_type.contains_key(&leader) {
            return Err(NormalizerError::DuplicateLeader(leader));
        }
        let per_prefix = self
            .metadata
            .prefix_distribution
            .entry(clique.type_name.clone())
            .or_default();
        for member in &clique.members {
            if let Some(label) = &member.label {
                self.id_to_label.insert(member.curie.clone(), label.clone());
            }
            self.id_to_leader.insert(member.curie.clone(), leader.clone());
            *per_prefix.entry(member.curie.prefix().to_string()).or_insert(0) += 1;
            self.metadata.identifiers += 1;
        }
        self.leader_to_type.insert(leader.clone(), clique.type_name.clone());
        self.leader_to_props.insert(
            leader,
            LeaderProperties {
                preferred_name: clique.preferred_label.clone(),
                information_content: clique.information_content,
                descriptions: clique.descriptions(),
                taxa: clique.taxa(),
                members: clique.member_curies().cloned().collect(),
            },
        );
        self.metadata.cliques += 1;
        Ok(())
    }

    fn add_conflation(&mut self, set: ConflationSet) -> Result<(), NormalizerError> {
        for leader in &set.leaders {
            if !self.leader_to_type.contains_key(leader) {
                return Err(NormalizerError::UnknownConflationLeader(leader.clone()));
            }
        }
        let table = match set.policy {
            ConflationPolicy::GeneProtein => &mut self.gene_protein,
            ConflationPolicy::DrugChemical => &mut self.drug_chemical,
        };
        for leader in &set.leaders {
            table.insert(leader.clone(), set.leaders.clone());
        }
        Ok(())
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    pub fn leader_of(&self, curie: &Curie) -> Option<&Curie> {
        self.id_to_leader.get(curie)
    }

    pub fn label_of(&self, curie: &Curie) -> Option<&str> {
        self.id_to_label.get(curie).map(String::as_str)
    }

    pub fn properties(&self, leader: &Curie) -> Option<&LeaderProperties> {
        self.leader_to_props.get(leader)
    }

    /// Normalizes one identifier. `None` means the identifier is unknown —
    /// batch callers must preserve that as an explicit null.
    pub fn normalize(&self, query: &Curie, flags: ConflationFlags) -> Option<NormalizationResult> {
        let own_leader = self.id_to_leader.get(query)?;
        // Gene–protein is consulted first when both flags apply; a leader
        // should not belong to both tables in practice.
        let set: &[Curie] = if flags.gene_protein {
            self.gene_protein.get(own_leader).map(Vec::as_slice)
        } else {
            None
        }
        .or_else(|| {
            if flags.drug_chemical {
                self.drug_chemical.get(own_leader).map(Vec::as_slice)
            } else {
                None
            }
        })
        .unwrap_or(std::slice::from_ref(own_leader));

        let first = &set[0];
        let props = &self.leader_to_props[first];
        let type_name = &self.leader_to_type[first];
        let mut equivalent_identifiers = Vec::new();
        for leader in set {
            for member in &self.leader_to_props[leader].members {
                equivalent_identifiers.push(IdentifierAndLabel {
                    identifier: member.clone(),
                    label: self.id_to_label.get(member).cloned(),
                });
            }
        }
        Some(NormalizationResult {
            id: IdentifierAndLabel {
                identifier: first.clone(),
                label: Some(props.preferred_name.clone()),
            },
            equivalent_identifiers,
            type_lineage: self.lineages[type_name].clone(),
            information_content: props.information_content,
            taxa: props.taxa.clone(),
        })
    }

    /// Batch form: results come back in query order, misses as `None`.
    pub fn normalize_batch(
        &self,
        queries: &[Curie],
        flags: ConflationFlags,
    ) -> Vec<(Curie, Option<NormalizationResult>)> {
        queries
            .iter()
            .map(|q| (q.clone(), self.normalize(q, flags)))
            .collect()
    }
}

fn hash_file(hasher: &mut Sha256, path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CliqueMember;

    fn curie(text: &str) -> Curie {
        Curie::parse(text).unwrap()
    }

    fn clique(leader: &str, extra: &[&str], type_name: &str, label: &str) -> Clique {
        let mut members = vec![CliqueMember {
            curie: curie(leader),
            label: Some(label.to_string()),
            descriptions: Vec::new(),
            taxa: Vec::new(),
        }];
        members.extend(extra.iter().map(|c| CliqueMember::bare(curie(c))));
        Clique {
            members,
            preferred_label: label.to_string(),
            type_name: type_name.to_string(),
            information_content: None,
        }
    }

    fn sample_index() -> NormalizerIndex {
        let mut tax = TypeTaxonomy::new();
        tax.insert("Gene", Some("NamedThing")).unwrap();
        tax.insert("Protein", Some("NamedThing")).unwrap();
        tax.insert("SmallMolecule", Some("NamedThing")).unwrap();
        let cliques = vec![
            clique(
                "CHEBI:15377",
                &["PUBCHEM.COMPOUND:962", "MESH:D014867"],
                "SmallMolecule",
                "water",
            ),
            clique("NCBIGene:100", &["ENSEMBL:ENSG1"], "Gene", "ADA"),
            clique("UniProtKB:P00813", &[], "Protein", "ADA_HUMAN"),
        ];
        let gene_protein = vec![ConflationSet::new(
            ConflationPolicy::GeneProtein,
            vec![curie("NCBIGene:100"), curie("UniProtKB:P00813")],
        )
        .unwrap()];
        NormalizerIndex::from_parts(cliques, gene_protein, Vec::new(), Some(&tax), "test")
            .unwrap()
    }

    #[test]
    fn one_leader_entry_per_member() {
        let index = sample_index();
        assert_eq!(index.metadata().identifiers, 6);
        assert_eq!(index.metadata().cliques, 3);
        for member in ["CHEBI:15377", "PUBCHEM.COMPOUND:962", "MESH:D014867"] {
            assert_eq!(index.leader_of(&curie(member)), Some(&curie("CHEBI:15377")));
        }
        // Every leader value resolves to a typed leader.
        for member in ["CHEBI:15377", "NCBIGene:100", "ENSEMBL:ENSG1", "UniProtKB:P00813"] {
            let leader = index.leader_of(&curie(member)).unwrap();
            assert!(index.leader_to_type.contains_key(leader));
        }
    }

    #[test]
    fn unknown_curie_is_none() {
        let index = sample_index();
        assert!(index
            .normalize(&curie("UNKNOWN:1"), ConflationFlags::default())
            .is_none());
        let batch = index.normalize_batch(
            &[curie("UNKNOWN:1"), curie("CHEBI:15377")],
            ConflationFlags::default(),
        );
        assert_eq!(batch[0].1, None);
        assert!(batch[1].1.is_some());
    }

    #[test]
    fn flags_off_returns_plain_clique() {
        let index = sample_index();
        let result = index
            .normalize(&curie("MESH:D014867"), ConflationFlags::default())
            .unwrap();
        assert_eq!(result.id.identifier, curie("CHEBI:15377"));
        assert_eq!(result.id.label.as_deref(), Some("water"));
        let ids: Vec<String> = result
            .equivalent_identifiers
            .iter()
            .map(|e| e.identifier.to_string())
            .collect();
        assert_eq!(
            ids,
            vec!["CHEBI:15377", "PUBCHEM.COMPOUND:962", "MESH:D014867"]
        );
        assert_eq!(result.type_lineage, vec!["SmallMolecule", "NamedThing"]);
    }

    #[test]
    fn gene_protein_conflation_concatenates_cliques() {
        let index = sample_index();
        let flags = ConflationFlags {
            gene_protein: true,
            drug_chemical: false,
        };
        let result = index.normalize(&curie("UniProtKB:P00813"), flags).unwrap();
        assert_eq!(result.id.identifier, curie("NCBIGene:100"));
        assert_eq!(result.type_lineage[0], "Gene");
        let ids: Vec<String> = result
            .equivalent_identifiers
            .iter()
            .map(|e| e.identifier.to_string())
            .collect();
        assert_eq!(ids, vec!["NCBIGene:100", "ENSEMBL:ENSG1", "UniProtKB:P00813"]);

        // Same query without the flag keeps the protein clique alone.
        let plain = index
            .normalize(&curie("UniProtKB:P00813"), ConflationFlags::default())
            .unwrap();
        assert_eq!(plain.id.identifier, curie("UniProtKB:P00813"));
        assert_eq!(plain.equivalent_identifiers.len(), 1);
    }

    #[test]
    fn normalize_of_leader_is_fixed_point() {
        let index = sample_index();
        for flags in [
            ConflationFlags::default(),
            ConflationFlags { gene_protein: true, drug_chemical: false },
            ConflationFlags { gene_protein: false, drug_chemical: true },
            ConflationFlags { gene_protein: true, drug_chemical: true },
        ] {
            for query in ["MESH:D014867", "UniProtKB:P00813", "ENSEMBL:ENSG1"] {
                let first = index.normalize(&curie(query), flags).unwrap();
                let again = index.normalize(&first.id.identifier, flags).unwrap();
                assert_eq!(again.id.identifier, first.id.identifier);
            }
        }
    }

    #[test]
    fn conflation_never_shrinks_equivalents() {
        let index = sample_index();
        for query in ["NCBIGene:100", "UniProtKB:P00813", "CHEBI:15377"] {
            let off = index
                .normalize(&curie(query), ConflationFlags::default())
                .unwrap();
            let on = index
                .normalize(
                    &curie(query),
                    ConflationFlags { gene_protein: true, drug_chemical: true },
                )
                .unwrap();
            assert!(on.equivalent_identifiers.len() >= off.equivalent_identifiers.len());
        }
    }

    #[test]
    fn duplicate_leader_rejected() {
        let cliques = vec![
            clique("A:1", &[], "T", "x"),
            clique("A:1", &["B:2"], "T", "y"),
        ];
        let err =
            NormalizerIndex::from_parts(cliques, Vec::new(), Vec::new(), None, "t").unwrap_err();
        assert!(matches!(err, NormalizerError::DuplicateLeader(_)));
    }

    #[test]
    fn conflation_must_reference_leaders() {
        let cliques = vec![clique("A:1", &["B:2"], "T", "x")];
        let sets = vec![ConflationSet::new(
            ConflationPolicy::GeneProtein,
            vec![curie("A:1"), curie("B:2")], // B:2 is a member, not a leader
        )
        .unwrap()];
        let err = NormalizerIndex::from_parts(cliques, sets, Vec::new(), None, "t").unwrap_err();
        assert!(matches!(err, NormalizerError::UnknownConflationLeader(_)));
    }

    #[test]
    fn empty_index_still_reports_status() {
        let index = NormalizerIndex::from_parts(Vec::new(), Vec::new(), Vec::new(), None, "empty")
            .unwrap();
        assert_eq!(index.metadata().cliques, 0);
        assert!(!index.metadata().supports_gene_protein);
        assert!(index
            .normalize(&curie("A:1"), ConflationFlags::default())
            .is_none());
    }

    #[test]
    fn result_serializes_with_service_field_names() {
        let index = sample_index();
        let result = index
            .normalize(&curie("CHEBI:15377"), ConflationFlags::default())
            .unwrap();
        let json = serde_json::to_value(&result).unwrap();
        assert_eq!(json["id"]["identifier"], "CHEBI:15377");
        assert_eq!(json["id"]["label"], "water");
        assert_eq!(json["type"][0], "SmallMolecule");
        assert!(json.get("information_content").is_none());
        assert!(json["equivalent_identifiers"].is_array());
    }
}
