//! `concord`: builds compendium artifacts from mapping files, serves the
//! normalization and name-lookup APIs, runs graphspec pipelines, and
//! produces source-overlap reports. Data goes to stdout, progress and
//! summaries to stderr.

use std::fs::{self, File};
use std::io;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use concord_core::analytics::{
    self, build_matrix, compare, OverlapMatrix, SourceIdSet,
};
use concord_core::cliques::{CliqueBuilder, TypeHints};
use concord_core::compendium::{
    detect_duplicates, export_kgx_equivalence, read_compendium_file, write_compendium_file,
    write_conflation, write_report, write_synonyms,
};
use concord_core::conflation::{build_conflations, CliqueCatalog, ConflationOrdering};
use concord_core::graph::{build_from_graphspec, GraphSpec};
use concord_core::ingest::{EnrichmentReader, LabelReader, MappingReader, PrefixPairFilter};
use concord_core::model::{ConflationPolicy, Curie, PrefixPreferences, TypeTaxonomy};
use concord_core::name_lookup::{LookupFilters, SearchIndex};
use concord_core::normalizer::{ConflationFlags, NormalizerIndex};
use concord_service::{
    bind, lookup_hits, name_lookup_router, normalized_nodes_json, normalizer_router, serve, Router,
};

#[derive(Parser)]
#[command(name = "concord", version, about = "Identifier equivalence toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition identifier mappings into cliques and write a compendium
    BuildCliques(BuildCliquesArgs),
    /// Group clique leaders into sets under a conflation policy
    BuildConflations(BuildConflationsArgs),
    /// Report identifiers and labels claimed by more than one clique
    ReportDuplicates(ReportDuplicatesArgs),
    /// Export cliques as KGX equivalence node and edge files
    ExportKgx(ExportKgxArgs),
    /// Resolve curies against a compendium index, printing one JSON object
    Normalize(NormalizeArgs),
    /// Serve the normalization API over HTTP
    ServeNormalizer(ServeArgs),
    /// Query a synonym index, printing scored matches as JSON
    Lookup(LookupArgs),
    /// Serve the name-lookup API over HTTP
    ServeNameLookup(ServeLookupArgs),
    /// Run a graphspec pipeline and collect the merged graph
    BuildGraph(BuildGraphArgs),
    /// Compute pairwise source-overlap matrices and reports
    AnalyzeOverlap(AnalyzeOverlapArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::BuildCliques(args) => run_build_cliques(args),
        Command::BuildConflations(args) => run_build_conflations(args),
        Command::ReportDuplicates(args) => run_report_duplicates(args),
        Command::ExportKgx(args) => run_export_kgx(args),
        Command::Normalize(args) => run_normalize(args),
        Command::ServeNormalizer(args) => run_serve_normalizer(args),
        Command::Lookup(args) => run_lookup(args),
        Command::ServeNameLookup(args) => run_serve_name_lookup(args),
        Command::BuildGraph(args) => run_build_graph(args),
        Command::AnalyzeOverlap(args) => run_analyze_overlap(args),
    };
    if let Err(error) = outcome {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------
// Compendium construction

#[derive(Args)]
struct BuildCliquesArgs {
    /// Identifier equivalence mapping files (TSV)
    #[arg(long, required = true, num_args = 1..)]
    mappings: Vec<PathBuf>,
    /// Label files (TSV: curie, kind, text)
    #[arg(long, num_args = 1..)]
    labels: Vec<PathBuf>,
    /// Enrichment files (TSV: curie, information content, description, taxa)
    #[arg(long, num_args = 1..)]
    enrich: Vec<PathBuf>,
    /// Prefix preference table electing clique leaders
    #[arg(long)]
    prefs: PathBuf,
    /// Type taxonomy table
    #[arg(long)]
    types: PathBuf,
    /// Prefix-to-type hint table
    #[arg(long)]
    hints: PathBuf,
    /// Keep only mappings between these prefix pairs
    #[arg(long)]
    pair_filter: Option<PathBuf>,
    /// Emit singleton cliques for identifiers seen only in labels or enrichments
    #[arg(long)]
    include_singletons: bool,
    /// Also write a synonym document file for the search index
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Output compendium path
    #[arg(long)]
    out: PathBuf,
}

fn run_build_cliques(args: BuildCliquesArgs) -> Result<()> {
    let taxonomy = TypeTaxonomy::load(&args.types)
        .with_context(|| format!("loading {}", args.types.display()))?;
    let preferences = PrefixPreferences::load(&args.prefs)
        .with_context(|| format!("loading {}", args.prefs.display()))?;
    let hints = TypeHints::load(&args.hints)
        .with_context(|| format!("loading {}", args.hints.display()))?;
    let filter = args
        .pair_filter
        .as_ref()
        .map(PrefixPairFilter::load)
        .transpose()
        .context("loading prefix pair filter")?;

    let mut builder = CliqueBuilder::new(&taxonomy, &preferences, &hints)?
        .include_singletons(args.include_singletons);
    for path in &args.mappings {
        let reader = MappingReader::open(path, filter.as_ref())
            .with_context(|| format!("opening {}", path.display()))?;
        for mapping in reader {
            builder.add_mapping(&mapping?);
        }
    }
    for path in &args.labels {
        let reader =
            LabelReader::open(path).with_context(|| format!("opening {}", path.display()))?;
        for label in reader {
            builder.add_label(&label?);
        }
    }
    for path in &args.enrich {
        let reader =
            EnrichmentReader::open(path).with_context(|| format!("opening {}", path.display()))?;
        for record in reader {
            builder.add_enrichment(record?);
        }
    }
    let build = builder.build()?;

    write_compendium_file(&build.cliques, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(path) = &args.synonyms {
        let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_synonyms(&build.cliques, &build.names, Some(&taxonomy), out)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let stats = &build.stats;
    eprintln!(
        "{} identifiers, {} mappings -> {} cliques ({} singletons)",
        stats.identifiers, stats.mappings, stats.cliques, stats.singletons
    );
    Ok(())
}

#[derive(Args)]
struct BuildConflationsArgs {
    /// Which cross-type grouping to build: gene-protein or drug-chemical
    #[arg(long)]
    policy: ConflationPolicy,
    /// Cross-type mapping file (TSV)
    #[arg(long)]
    mappings: PathBuf,
    /// Compendia holding the cliques the mappings refer to
    #[arg(long, required = true, num_args = 1..)]
    compendia: Vec<PathBuf>,
    /// Output conflation file
    #[arg(long)]
    out: PathBuf,
}

fn run_build_conflations(args: BuildConflationsArgs) -> Result<()> {
    let cliques = read_cliques(&args.compendia)?;
    let catalog = CliqueCatalog::from_cliques(&cliques)?;
    let mut pairs = Vec::new();
    let reader = MappingReader::open(&args.mappings, None)
        .with_context(|| format!("opening {}", args.mappings.display()))?;
    for mapping in reader {
        let mapping = mapping?;
        pairs.push((mapping.subject, mapping.object));
    }
    let sets = build_conflations(pairs, &catalog, args.policy, &ConflationOrdering::default())?;
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_conflation(&sets, out)?;
    eprintln!("{} {} sets", sets.len(), args.policy);
    Ok(())
}

fn read_cliques(compendia: &[PathBuf]) -> Result<Vec<concord_core::model::Clique>> {
    let mut cliques = Vec::new();
    for path in compendia {
        cliques.extend(
            read_compendium_file(path).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    Ok(cliques)
}

#[derive(Args)]
struct ReportDuplicatesArgs {
    /// Compendia to scan
    #[arg(long, required = true, num_args = 1..)]
    compendia: Vec<PathBuf>,
    /// Report path; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_report_duplicates(args: ReportDuplicatesArgs) -> Result<()> {
    let report = detect_duplicates(&args.compendia)?;
    match &args.out {
        Some(path) => {
            let out = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_report(&report, out)?;
        }
        None => write_report(&report, io::stdout().lock())?,
    }
    eprintln!(
        "{} identifiers in multiple cliques, {} labels shared across cliques",
        report.multi_clique_curies.len(),
        report.duplicate_labels.len()
    );
    Ok(())
}

#[derive(Args)]
struct ExportKgxArgs {
    /// Compendia to export
    #[arg(long, required = true, num_args = 1..)]
    compendia: Vec<PathBuf>,
    /// Output node file
    #[arg(long)]
    nodes: PathBuf,
    /// Output edge file
    #[arg(long)]
    edges: PathBuf,
}

fn run_export_kgx(args: ExportKgxArgs) -> Result<()> {
    let cliques = read_cliques(&args.compendia)?;
    let node_out =
        File::create(&args.nodes).with_context(|| format!("creating {}", args.nodes.display()))?;
    let edge_out =
        File::create(&args.edges).with_context(|| format!("creating {}", args.edges.display()))?;
    let (nodes, edges) = export_kgx_equivalence(&cliques, node_out, edge_out)?;
    eprintln!("{nodes} nodes, {edges} edges");
    Ok(())
}

// ---------------------------------------------------------------------
// Normalization

/// `policy=path` as accepted by `--conflations`, e.g.
/// `--conflations gene-protein=gp.txt`.
#[derive(Clone, Debug)]
struct ConflationFile {
    policy: ConflationPolicy,
    path: PathBuf,
}

impl FromStr for ConflationFile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (policy, path) = s
            .split_once('=')
            .ok_or_else(|| format!("expected policy=path, got {s:?}"))?;
        let policy = policy.parse().map_err(|e| format!("{e}"))?;
        Ok(ConflationFile { policy, path: PathBuf::from(path) })
    }
}

/// Inputs shared by every command that loads a normalizer index.
#[derive(Args)]
struct NormalizerSource {
    /// Compendium files to index
    #[arg(long, num_args = 1..)]
    compendia: Vec<PathBuf>,
    /// Conflation files, given as policy=path
    #[arg(long)]
    conflations: Vec<ConflationFile>,
    /// Type taxonomy table for type-lineage expansion
    #[arg(long)]
    types: Option<PathBuf>,
}

impl NormalizerSource {
    fn load(&self) -> Result<NormalizerIndex> {
        match self.load_optional()? {
            Some(index) => Ok(index),
            None => bail!("at least one --compendia file is required"),
        }
    }

    fn load_optional(&self) -> Result<Option<NormalizerIndex>> {
        if self.compendia.is_empty() {
            if !self.conflations.is_empty() || self.types.is_some() {
                bail!("--conflations and --types require --compendia");
            }
            return Ok(None);
        }
        let mut gene_protein = None;
        let mut drug_chemical = None;
        for file in &self.conflations {
            let slot = match file.policy {
                ConflationPolicy::GeneProtein => &mut gene_protein,
                ConflationPolicy::DrugChemical => &mut drug_chemical,
            };
            if slot.replace(file.path.clone()).is_some() {
                bail!("--conflations names {} twice", file.policy);
            }
        }
        let taxonomy = self
            .types
            .as_deref()
            .map(TypeTaxonomy::load)
            .transpose()
            .context("loading type table")?;
        let index = NormalizerIndex::load(
            &self.compendia,
            gene_protein.as_deref(),
            drug_chemical.as_deref(),
            taxonomy.as_ref(),
        )
        .context("loading compendium index")?;
        Ok(Some(index))
    }
}

#[derive(Args)]
struct NormalizeArgs {
    #[command(flatten)]
    source: NormalizerSource,
    /// Curie to resolve; repeatable, output keys keep this order
    #[arg(long, required = true, num_args = 1..)]
    curie: Vec<String>,
    /// Apply gene-protein conflation
    #[arg(long)]
    conflate: bool,
    /// Apply drug-chemical conflation
    #[arg(long)]
    drug_chemical_conflate: bool,
}

fn run_normalize(args: NormalizeArgs) -> Result<()> {
    let index = args.source.load()?;
    let flags = ConflationFlags {
        gene_protein: args.conflate,
        drug_chemical: args.drug_chemical_conflate,
    };
    println!("{}", normalized_nodes_json(&index, &args.curie, flags));
    Ok(())
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    source: NormalizerSource,
    /// Address to bind
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Port to bind; 0 picks a free one
    #[arg(long)]
    port: u16,
}

fn run_serve_normalizer(args: ServeArgs) -> Result<()> {
    let index = args.source.load()?;
    let metadata = index.metadata();
    eprintln!(
        "serving {} cliques ({} identifiers), build {}",
        metadata.cliques, metadata.identifiers, metadata.build_id
    );
    serve_blocking(args.host, args.port, normalizer_router(Arc::new(index)))
}

fn serve_blocking(host: IpAddr, port: u16, router: Router) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let (listener, addr) = bind(SocketAddr::new(host, port)).await?;
        eprintln!("listening on http://{addr}");
        serve(listener, router).await
    })?;
    Ok(())
}

// ---------------------------------------------------------------------
// Name lookup

#[derive(Args)]
struct SearchSource {
    /// Synonym document files to index
    #[arg(long, required = true, num_args = 1..)]
    synonyms: Vec<PathBuf>,
}

impl SearchSource {
    fn load(&self) -> Result<SearchIndex> {
        SearchIndex::load(&self.synonyms).context("loading synonym index")
    }
}

#[derive(Args)]
struct LookupArgs {
    #[command(flatten)]
    source: SearchSource,
    /// Query text
    #[arg(long)]
    string: String,
    /// Treat the final token as a prefix
    #[arg(long)]
    autocomplete: bool,
    /// Maximum number of hits
    #[arg(long, default_value_t = 10)]
    limit: usize,
    /// Keep only cliques of this type
    #[arg(long)]
    biolink_type: Option<String>,
    /// Comma-separated curie prefixes to keep
    #[arg(long)]
    only_prefixes: Option<String>,
    /// Comma-separated taxon curies to keep
    #[arg(long)]
    only_taxa: Option<String>,
}

fn run_lookup(args: LookupArgs) -> Result<()> {
    let index = args.source.load()?;
    let mut taxa = Vec::new();
    for raw in split_csv(&args.only_taxa) {
        taxa.push(Curie::parse(&raw).map_err(|e| anyhow::anyhow!("--only-taxa: {e}"))?);
    }
    let filters = LookupFilters {
        type_name: args.biolink_type,
        prefixes: split_csv(&args.only_prefixes),
        taxa,
    };
    let hits = lookup_hits(&index, &args.string, args.autocomplete, args.limit, &filters);
    println!("{}", serde_json::to_string(&hits)?);
    Ok(())
}

fn split_csv(raw: &Option<String>) -> Vec<String> {
    raw.iter()
        .flat_map(|s| s.split(','))
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Args)]
struct ServeLookupArgs {
    #[command(flatten)]
    source: SearchSource,
    /// Address to bind
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Port to bind; 0 picks a free one
    #[arg(long)]
    port: u16,
}

fn run_serve_name_lookup(args: ServeLookupArgs) -> Result<()> {
    let index = args.source.load()?;
    eprintln!("serving {} synonym documents", index.len());
    serve_blocking(args.host, args.port, name_lookup_router(Arc::new(index)))
}

// ---------------------------------------------------------------------
// Graph pipeline

#[derive(Args)]
struct BuildGraphArgs {
    /// Graphspec YAML file
    #[arg(long)]
    spec: PathBuf,
    /// Stage cache directory; reruns skip stages already built here
    #[arg(long)]
    workdir: PathBuf,
    /// Directory receiving nodes.jsonl, edges.jsonl, and metadata.json
    #[arg(long)]
    out: PathBuf,
}

fn run_build_graph(args: BuildGraphArgs) -> Result<()> {
    let spec =
        GraphSpec::load(&args.spec).with_context(|| format!("loading {}", args.spec.display()))?;
    let outcome = build_from_graphspec(&spec, &args.workdir)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    for artifact in [&outcome.node_file, &outcome.edge_file, &outcome.metadata_file] {
        let name = artifact
            .file_name()
            .with_context(|| format!("artifact path {} has no file name", artifact.display()))?;
        fs::copy(artifact, args.out.join(name))
            .with_context(|| format!("collecting {}", artifact.display()))?;
    }
    eprintln!(
        "{}: {} nodes, {} edges; executed {} of {} stages",
        outcome.metadata.graph_id,
        outcome.metadata.nodes,
        outcome.metadata.edges,
        outcome.executed_stages().len(),
        outcome.stages.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// Overlap analytics

#[derive(Args)]
struct AnalyzeOverlapArgs {
    /// Directory of id-list files, one per source; the file stem names it
    #[arg(long)]
    sets: PathBuf,
    /// Optional normalizer inputs; when given, a normalized matrix and a
    /// pre/post comparison are written as well
    #[command(flatten)]
    source: NormalizerSource,
    /// Directory receiving the TSV matrices, SVG heatmaps, and JSON report
    #[arg(long)]
    out: PathBuf,
}

fn run_analyze_overlap(args: AnalyzeOverlapArgs) -> Result<()> {
    let mut files = Vec::new();
    for entry in
        fs::read_dir(&args.sets).with_context(|| format!("reading {}", args.sets.display()))?
    {
        let path = entry?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    let mut sets = Vec::new();
    for path in &files {
        sets.push(
            SourceIdSet::load(path).with_context(|| format!("loading {}", path.display()))?,
        );
    }

    let raw = build_matrix(&sets, None)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_matrix_files(&raw, &args.out, "")?;

    match args.source.load_optional()? {
        Some(index) => {
            let normalized = build_matrix(&sets, Some(&index))?;
            write_matrix_files(&normalized, &args.out, "normalized_")?;
            let report = compare(&raw, &normalized);
            let mut rendered = serde_json::to_string_pretty(&report)?;
            rendered.push('\n');
            fs::write(args.out.join("report.json"), rendered)?;
            eprintln!(
                "{} sources; connected pairs {} -> {} after normalization",
                raw.sources.len(),
                report.pre_connections,
                report.post_connections
            );
        }
        None => {
            eprintln!(
                "{} sources, {} connected pairs",
                raw.sources.len(),
                raw.connection_count()
            );
        }
    }
    Ok(())
}

fn write_matrix_files(matrix: &OverlapMatrix, dir: &Path, prefix: &str) -> Result<()> {
    let create = |name: &str| {
        let path = dir.join(format!("{prefix}{name}"));
        File::create(&path).with_context(|| format!("creating {}", path.display()))
    };
    analytics::write_counts_tsv(matrix, create("counts.tsv")?)?;
    analytics::write_densities_tsv(matrix, create("densities.tsv")?)?;
    analytics::write_heatmap_svg(matrix, create("heatmap.svg")?)?;
    Ok(())
}
