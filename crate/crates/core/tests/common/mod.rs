//! Shared fixture plumbing: builds the small hand-checked corpus under
//! `fixtures/desk` into compendium, synonym, and conflation artifacts.

#![allow(dead_code)]

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use concord_core::cliques::{CliqueBuilder, TypeHints};
use concord_core::compendium::{write_compendium_file, write_conflation, write_synonyms};
use concord_core::conflation::{build_conflations, CliqueCatalog, ConflationOrdering};
use concord_core::graph::GraphSpec;
use concord_core::ingest::{EnrichmentReader, LabelReader, MappingReader};
use concord_core::model::{Clique, ConflationPolicy, Curie, PrefixPreferences, TypeTaxonomy};

pub fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/desk")
}

/// The raw inputs the desk build consumes, so tests can substitute
/// shuffled or edited copies of individual files.
pub struct DeskInputs {
    pub mappings: PathBuf,
    pub labels: PathBuf,
    pub enrich: PathBuf,
    pub gene_protein: PathBuf,
    pub drug_chemical: PathBuf,
}

impl DeskInputs {
    pub fn standard() -> Self {
        let desk = desk_dir();
        DeskInputs {
            mappings: desk.join("mappings/chemical.tsv"),
            labels: desk.join("labels/names.tsv"),
            enrich: desk.join("enrich/enrich.tsv"),
            gene_protein: desk.join("conflation/gene_protein.tsv"),
            drug_chemical: desk.join("conflation/drug_chemical.tsv"),
        }
    }
}

pub struct DeskArtifacts {
    pub compendium: PathBuf,
    pub synonyms: PathBuf,
    pub gene_protein: PathBuf,
    pub drug_chemical: PathBuf,
    pub taxonomy_file: PathBuf,
    pub taxonomy: TypeTaxonomy,
    pub cliques: Vec<Clique>,
}

pub fn build_desk(out_dir: &Path) -> DeskArtifacts {
    build_desk_inputs(out_dir, &DeskInputs::standard())
}

/// Runs the full compendium pipeline over the given inputs and writes the
/// artifacts into `out_dir`, which must already exist.
pub fn build_desk_inputs(out_dir: &Path, inputs: &DeskInputs) -> DeskArtifacts {
    let desk = desk_dir();
    let taxonomy_file = desk.join("config/types.tsv");
    let taxonomy = TypeTaxonomy::load(&taxonomy_file).expect("taxonomy");
    let hints = TypeHints::load(desk.join("config/hints.tsv")).expect("hints");
    let preferences = PrefixPreferences::load(desk.join("config/prefs.tsv")).expect("prefs");

    let mut builder = CliqueBuilder::new(&taxonomy, &preferences, &hints)
        .expect("builder")
        .include_singletons(true);
    for mapping in MappingReader::open(&inputs.mappings, None).expect("mappings") {
        builder.add_mapping(&mapping.expect("mapping record"));
    }
    for label in LabelReader::open(&inputs.labels).expect("labels") {
        builder.add_label(&label.expect("label record"));
    }
    for record in EnrichmentReader::open(&inputs.enrich).expect("enrichments") {
        builder.add_enrichment(record.expect("enrichment record"));
    }
    let build = builder.build().expect("clique build");

    let compendium = out_dir.join("desk.jsonl");
    write_compendium_file(&build.cliques, &compendium).expect("write compendium");
    let synonyms = out_dir.join("desk-synonyms.jsonl");
    write_synonyms(
        &build.cliques,
        &build.names,
        Some(&taxonomy),
        File::create(&synonyms).expect("create synonyms"),
    )
    .expect("write synonyms");

    let catalog = CliqueCatalog::from_cliques(&build.cliques).expect("catalog");
    let ordering = ConflationOrdering::default();
    let gene_protein = out_dir.join("gene_protein.txt");
    let sets = build_conflations(
        read_pairs(&inputs.gene_protein),
        &catalog,
        ConflationPolicy::GeneProtein,
        &ordering,
    )
    .expect("gene-protein conflation");
    write_conflation(&sets, File::create(&gene_protein).expect("create gp")).expect("write gp");

    let drug_chemical = out_dir.join("drug_chemical.txt");
    let sets = build_conflations(
        read_pairs(&inputs.drug_chemical),
        &catalog,
        ConflationPolicy::DrugChemical,
        &ordering,
    )
    .expect("drug-chemical conflation");
    write_conflation(&sets, File::create(&drug_chemical).expect("create dc")).expect("write dc");

    DeskArtifacts {
        compendium,
        synonyms,
        gene_protein,
        drug_chemical,
        taxonomy_file,
        taxonomy,
        cliques: build.cliques,
    }
}

fn read_pairs(path: &Path) -> Vec<(Curie, Curie)> {
    MappingReader::open(path, None)
        .expect("conflation mappings")
        .map(|m| {
            let m = m.expect("conflation record");
            (m.subject, m.object)
        })
        .collect()
}

/// Lays out compendium artifacts plus a graphspec file in `root` and loads
/// it, leaving fixture inputs referenced by absolute path and artifacts by
/// path relative to the graphspec file.
pub fn desk_graphspec(root: &Path) -> (GraphSpec, PathBuf) {
    let artifact_dir = root.join("desk");
    fs::create_dir_all(&artifact_dir).unwrap();
    build_desk(&artifact_dir);
    let desk = desk_dir();
    let spec_file = root.join("spec.yaml");
    fs::write(
        &spec_file,
        format!(
            r#"graph_id: desk-graph
normalizer:
  compendia:
    - desk/desk.jsonl
  gene_protein: desk/gene_protein.txt
  drug_chemical: desk/drug_chemical.txt
  taxonomy: "{types}"
predicate_map: "{predicates}"
batch_size: 2
sources:
  - id: assoc
    version: "2026-08-01"
    file: "{assoc}"
    parser: association_csv
    provenance: infores:desk-assoc
  - id: rows
    version: "2026-08-01"
    file: "{rows}"
    parser: generic_tsv
  - id: kgx
    version: "2026-08-01"
    file: "{kgx}"
    parser: jsonl_passthrough
    merge_strategy: restrict_to_existing_nodes
property_propagation:
  - source: kgx
    from_property: role
    to_property: chemical_role
"#,
            types = desk.join("config/types.tsv").display(),
            predicates = desk.join("config/predicates.tsv").display(),
            assoc = desk.join("graph/assoc.csv").display(),
            rows = desk.join("graph/rows.tsv").display(),
            kgx = desk.join("graph/kgx.jsonl").display(),
        ),
    )
    .unwrap();
    (GraphSpec::load(&spec_file).unwrap(), spec_file)
}
