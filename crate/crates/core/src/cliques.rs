//! Clique construction: connected components over equivalence mappings,
//! leader election by prefix preference, preferred-label election with
//! long-label demotion, semantic-type assignment from prefix hints, and
//! enrichment attachment.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::ingest::{EnrichmentRecord, LabelKind, LabelRecord, RawMapping};
use crate::ioutil;
use crate::model::{
    Clique, CliqueMember, Curie, ModelError, PrefixPreference, PrefixPreferences, TypeTaxonomy,
};

#[derive(Debug, Error)]
pub enum CliqueError {
    #[error("no semantic type available for clique containing {0} (no hint, no default)")]
    NoTypeAvailable(Curie),
    #[error("hinted type {0:?} is not in the taxonomy")]
    UnknownHintedType(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone, Default)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn make(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        self.size.push(1);
        id
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two sets were previously disjoint.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Prefix → semantic-type hints used to assign each clique a type. A `*`
/// prefix configures the default for unhinted prefixes.
#[derive(Debug, Clone, Default)]
pub struct TypeHints {
    by_prefix: HashMap<String, String>,
    default_type: Option<String>,
}

impl TypeHints {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: &str, type_name: &str) {
        if prefix == "*" {
            self.default_type = Some(type_name.to_string());
        } else {
            self.by_prefix.insert(prefix.to_string(), type_name.to_string());
        }
    }

    pub fn hint(&self, prefix: &str) -> Option<&str> {
        self.by_prefix
            .get(prefix)
            .map(String::as_str)
            .or(self.default_type.as_deref())
    }

    /// Loads `prefix<TAB>type_name` lines; prefix `*` sets the default.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        Self::from_reader(ioutil::open_text(path)?, &path.display().to_string())
    }

    pub fn from_reader(reader: impl BufRead, origin: &str) -> Result<Self, ModelError> {
        let mut hints = TypeHints::new();
        for item in ioutil::data_lines(reader) {
            let (line_no, line) = item?;
            let (prefix, type_name) =
                line.split_once('\t').ok_or_else(|| ModelError::Config {
                    path: origin.to_string(),
                    line: line_no,
                    message: "expected `prefix<TAB>type_name`".to_string(),
                })?;
            hints.insert(prefix.trim(), type_name.trim());
        }
        Ok(hints)
    }

    /// Every hinted type (and the default) must exist in the taxonomy.
    pub fn validate_against(&self, taxonomy: &TypeTaxonomy) -> Result<(), CliqueError> {
        for type_name in self.by_prefix.values().chain(self.default_type.iter()) {
            if !taxonomy.contains(type_name) {
                return Err(CliqueError::UnknownHintedType(type_name.clone()));
            }
        }
        Ok(())
    }
}

/// All names recorded for one identifier. Labels keep file order (first one
/// is the identifier's display label); every entry competes in
/// preferred-label election.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameSet {
    pub labels: Vec<String>,
    pub synonyms: Vec<String>,
}

impl NameSet {
    pub fn record(&mut self, kind: LabelKind, text: &str) {
        let list = match kind {
            LabelKind::Label => &mut self.labels,
            LabelKind::Synonym => &mut self.synonyms,
        };
        if !list.iter().any(|t| t == text) {
            list.push(text.to_string());
        }
    }

    pub fn primary_label(&self) -> Option<&str> {
        self.labels.first().map(String::as_str)
    }

    pub fn all_names(&self) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .chain(self.synonyms.iter())
            .map(String::as_str)
    }
}

pub type NameTable = HashMap<Curie, NameSet>;

/// The member ordering used everywhere a clique is rendered: preference
/// rank of the prefix, then canonical identifier order. The elected leader
/// is the minimum under this ordering.
pub fn member_order(a: &Curie, b: &Curie, prefs: &PrefixPreference) -> std::cmp::Ordering {
    prefs
        .rank(a.prefix())
        .cmp(&prefs.rank(b.prefix()))
        .then_with(|| a.cmp(b))
}

/// Elects the leader: lowest preference rank, ties broken by prefix string
/// then numeric-aware suffix order. Unlisted prefixes rank after all listed
/// ones.
pub fn elect_leader<'a>(members: &'a [Curie], prefs: &PrefixPreference) -> &'a Curie {
    members
        .iter()
        .min_by(|a, b| member_order(a, b, prefs))
        .expect("elect_leader on empty member list")
}

/// Elects the preferred label. Candidates are every label and synonym of
/// every member, ranked by (over-length demotion, labels before synonyms,
/// member prefix-preference rank, shorter first, lexicographic). Falls back
/// to the rendered leader when no names exist at all.
pub fn choose_label(
    members: &[Curie],
    names: &NameTable,
    prefs: &PrefixPreference,
    max_len: usize,
) -> String {
    let mut best: Option<((bool, u8, usize, usize, &str), &str)> = None;
    for member in members {
        let Some(set) = names.get(member) else {
            continue;
        };
        let rank = prefs.rank(member.prefix());
        let candidates = set
            .labels
            .iter()
            .map(|t| (0u8, t))
            .chain(set.synonyms.iter().map(|t| (1u8, t)));
        for (kind, text) in candidates {
            let len = text.chars().count();
            let key = (len > max_len, kind, rank, len, text.as_str());
            if best.as_ref().is_none_or(|(k, _)| key < *k) {
                best = Some((key, text));
            }
        }
    }
    match best {
        Some((_, text)) => text.to_string(),
        None => elect_leader(members, prefs).to_string(),
    }
}

/// Assigns the clique's semantic type from its members' prefix hints: if
/// all hinted types agree, that type; otherwise the most specific one
/// (deepest in the taxonomy, depth ties broken by taxonomy-file order).
pub fn assign_type(
    members: &[Curie],
    hints: &TypeHints,
    taxonomy: &TypeTaxonomy,
) -> Result<String, CliqueError> {
    let mut candidates = BTreeSet::new();
    for member in members {
        if let Some(type_name) = hints.hint(member.prefix()) {
            if !taxonomy.contains(type_name) {
                return Err(CliqueError::UnknownHintedType(type_name.to_string()));
            }
            candidates.insert(type_name);
        }
    }
    if candidates.is_empty() {
        return Err(CliqueError::NoTypeAvailable(members[0].clone()));
    }
    if candidates.len() == 1 {
        return Ok(candidates.into_iter().next().unwrap().to_string());
    }
    taxonomy
        .most_specific(candidates.iter().copied())
        .ok_or_else(|| CliqueError::NoTypeAvailable(members[0].clone()))
}

/// Applies per-identifier enrichments to a built clique: information
/// content becomes the minimum over members that have one; each member
/// carries its own sorted taxa.
pub fn attach_enrichments(clique: &mut Clique, enrich: &HashMap<Curie, EnrichmentRecord>) {
    let mut ic: Option<f64> = None;
    for member in &mut clique.members {
        if let Some(record) = enrich.get(&member.curie) {
            if let Some(value) = record.information_content {
                ic = Some(match ic {
                    None => value,
                    Some(current) => current.min(value),
                });
            }
            let taxa: BTreeSet<Curie> = record.taxa.iter().cloned().collect();
            member.taxa = taxa.into_iter().collect();
        }
    }
    clique.information_content = ic;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub identifiers: usize,
    pub mappings: u64,
    pub cliques: usize,
    pub singletons: usize,
    pub duplicate_enrichments: u64,
}

/// Everything one pipeline run produces: the cliques (leader-sorted) plus
/// the name table needed for synonym output and search indexing.
#[derive(Debug, Clone)]
pub struct CompendiumBuild {
    pub cliques: Vec<Clique>,
    pub names: NameTable,
    pub stats: BuildStats,
}

/// Accumulates mappings, names, and enrichments, then partitions
/// identifiers into cliques. Identifiers seen only in label or enrichment
/// inputs become singleton cliques only when `include_singletons` is set.
pub struct CliqueBuilder<'a> {
    taxonomy: &'a TypeTaxonomy,
    preferences: &'a PrefixPreferences,
    hints: &'a TypeHints,
    max_label_length: usize,
    include_singletons: bool,
    index: HashMap<Curie, usize>,
    curies: Vec<Curie>,
    uf: UnionFind,
    names: NameTable,
    enrichments: HashMap<Curie, EnrichmentRecord>,
    stats: BuildStats,
}

impl<'a> CliqueBuilder<'a> {
    pub fn new(
        taxonomy: &'a TypeTaxonomy,
        preferences: &'a PrefixPreferences,
        hints: &'a TypeHints,
    ) -> Result<Self, CliqueError> {
        hints.validate_against(taxonomy)?;
        Ok(CliqueBuilder {
            taxonomy,
            preferences,
            hints,
            max_label_length: 100,
            include_singletons: false,
            index: HashMap::new(),
            curies: Vec::new(),
            uf: UnionFind::new(),
            names: NameTable::new(),
            enrichments: HashMap::new(),
            stats: BuildStats::default(),
        })
    }

    pub fn max_label_length(mut self, max_len: usize) -> Self {
        self.max_label_length = max_len;
        self
    }

    pub fn include_singletons(mut self, include: bool) -> Self {
        self.include_singletons = include;
        self
    }

    fn intern(&mut self, curie: &Curie) -> usize {
        if let Some(&id) = self.index.get(curie) {
            return id;
        }
        let id = self.uf.make();
        self.index.insert(curie.clone(), id);
        self.curies.push(curie.clone());
        id
    }

    pub fn add_mapping(&mut self, mapping: &RawMapping) {
        self.add_edge(&mapping.subject, &mapping.object);
    }

    pub fn add_edge(&mut self, subject: &Curie, object: &Curie) {
        let a = self.intern(subject);
        let b = self.intern(object);
        self.uf.union(a, b);
        self.stats.mappings += 1;
    }

    pub fn add_label(&mut self, record: &LabelRecord) {
        if self.include_singletons {
            self.intern(&record.curie);
        }
        self.names
            .entry(record.curie.clone())
            .or_default()
            .record(record.kind, &record.text);
    }

    pub fn add_enrichment(&mut self, record: EnrichmentRecord) {
        if self.include_singletons {
            self.intern(&record.curie);
        }
        if self
            .enrichments
            .insert(record.curie.clone(), record)
            .is_some()
        {
            self.stats.duplicate_enrichments += 1;
        }
    }

    /// Raw connected components over everything interned so far, each
    /// sorted canonically, the list sorted by first member. This is the
    /// partition before any election or typing.
    pub fn components(&mut self) -> Vec<Vec<Curie>> {
        let mut groups: BTreeMap<usize, Vec<Curie>> = BTreeMap::new();
        for i in 0..self.curies.len() {
            let root = self.uf.find(i);
            groups.entry(root).or_default().push(self.curies[i].clone());
        }
        let mut out: Vec<Vec<Curie>> = groups.into_values().collect();
        for group in &mut out {
            group.sort();
        }
        out.sort_by(|a, b| a[0].cmp(&b[0]));
        out
    }

    pub fn build(mut self) -> Result<CompendiumBuild, CliqueError> {
        let empty_prefs = PrefixPreference {
            type_name: String::new(),
            ordered_prefixes: Vec::new(),
        };
        let components = self.components();
        let mut cliques = Vec::with_capacity(components.len());
        let mut stats = self.stats;
        stats.identifiers = self.curies.len();
        for mut members in components {
            if members.len() == 1 {
                stats.singletons += 1;
            }
            let type_name = assign_type(&members, self.hints, self.taxonomy)?;
            let prefs = self
                .preferences
                .resolve(&type_name, self.taxonomy)
                .unwrap_or(&empty_prefs);
            members.sort_by(|a, b| member_order(a, b, prefs));
            let preferred_label =
                choose_label(&members, &self.names, prefs, self.max_label_length);
            let mut clique = Clique {
                members: members
                    .into_iter()
                    .map(|curie| {
                        let label = self
                            .names
                            .get(&curie)
                            .and_then(|n| n.primary_label())
                            .map(str::to_string);
                        CliqueMember {
                            curie,
                            label,
                            descriptions: Vec::new(),
                            taxa: Vec::new(),
                        }
                    })
                    .collect(),
                preferred_label,
                type_name,
                information_content: None,
            };
            attach_enrichments(&mut clique, &self.enrichments);
            clique.validate()?;
            cliques.push(clique);
        }
        cliques.sort_by(|a, b| a.leader().cmp(b.leader()));
        stats.cliques = cliques.len();
        Ok(CompendiumBuild {
            cliques,
            names: self.names,
            stats,
        })
    }
}
