//! Shared vocabulary of the toolkit: compact identifiers (CURIEs), the
//! semantic-type taxonomy, prefix preference orders, cliques, and conflation
//! sets. Everything in this module is immutable after construction and safe
//! to share across threads.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ioutil;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed curie {text:?}: {reason}")]
    MalformedCurie { text: String, reason: &'static str },
    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },
    #[error("type taxonomy cycle involving {0:?}")]
    TaxonomyCycle(String),
    #[error("type taxonomy conflict: {0}")]
    TaxonomyConflict(String),
    #[error("invalid prefix preference: {0}")]
    InvalidPreference(String),
    #[error("invalid clique: {0}")]
    InvalidClique(String),
    #[error("invalid conflation set: {0}")]
    InvalidConflationSet(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A compact prefixed identifier. The rendered form is `prefix:suffix`;
/// parsing splits on the first `:` only, so suffixes may themselves
/// contain colons.
///
/// Prefixes are case-sensitive and compared exactly. The `Ord` impl is the
/// canonical identifier order used for all deterministic output: prefix
/// first, then [`SuffixKey`] order within a prefix.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Curie {
    prefix: String,
    suffix: String,
}

impl Curie {
    pub fn new(prefix: impl Into<String>, suffix: impl Into<String>) -> Result<Self, ModelError> {
        let prefix = prefix.into();
        let suffix = suffix.into();
        if prefix.is_empty() {
            return Err(ModelError::MalformedCurie {
                text: format!("{prefix}:{suffix}"),
                reason: "empty prefix",
            });
        }
        if prefix.contains(':') {
            return Err(ModelError::MalformedCurie {
                text: format!("{prefix}:{suffix}"),
                reason: "prefix contains ':'",
            });
        }
        if suffix.is_empty() {
            return Err(ModelError::MalformedCurie {
                text: format!("{prefix}:{suffix}"),
                reason: "empty suffix",
            });
        }
        Ok(Curie { prefix, suffix })
    }

    /// Parses the rendered `prefix:suffix` form, splitting on the first `:`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        match text.split_once(':') {
            None => Err(ModelError::MalformedCurie {
                text: text.to_string(),
                reason: "no ':' separator",
            }),
            Some((prefix, suffix)) => Curie::new(prefix, suffix),
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn suffix(&self) -> &str {
        &self.suffix
    }

    /// The ordering key for this identifier's suffix: all-digit suffixes
    /// sort numerically before non-numeric suffixes, which sort
    /// lexicographically among themselves.
    pub fn suffix_key(&self) -> SuffixKey {
        SuffixKey::of(&self.suffix)
    }
}

impl fmt::Display for Curie {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.prefix, self.suffix)
    }
}

impl FromStr for Curie {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Curie::parse(s)
    }
}

impl Ord for Curie {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prefix
            .cmp(&other.prefix)
            .then_with(|| cmp_suffixes(&self.suffix, &other.suffix))
    }
}

impl PartialOrd for Curie {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for Curie {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Curie {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Curie::parse(&text).map_err(D::Error::custom)
    }
}

/// Materialized suffix ordering key. Numeric suffixes (all ASCII digits)
/// sort before non-numeric ones and compare by value; the raw text is kept
/// as a final tiebreak so distinct suffixes never compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SuffixKey {
    Numeric {
        magnitude: usize,
        digits: String,
        raw: String,
    },
    Text {
        raw: String,
    },
}

impl SuffixKey {
    pub fn of(suffix: &str) -> SuffixKey {
        if !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
            let mut digits = suffix.trim_start_matches('0');
            if digits.is_empty() {
                digits = "0";
            }
            SuffixKey::Numeric {
                magnitude: digits.len(),
                digits: digits.to_string(),
                raw: suffix.to_string(),
            }
        } else {
            SuffixKey::Text {
                raw: suffix.to_string(),
            }
        }
    }
}

/// Allocation-free equivalent of `SuffixKey::of(a).cmp(&SuffixKey::of(b))`.
pub(crate) fn cmp_suffixes(a: &str, b: &str) -> Ordering {
    let a_num = !a.is_empty() && a.bytes().all(|c| c.is_ascii_digit());
    let b_num = !b.is_empty() && b.bytes().all(|c| c.is_ascii_digit());
    match (a_num, b_num) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (false, false) => a.cmp(b),
        (true, true) => {
            let da = strip_zeros(a);
            let db = strip_zeros(b);
            da.len()
                .cmp(&db.len())
                .then_with(|| da.cmp(db))
                .then_with(|| a.cmp(b))
        }
    }
}

fn strip_zeros(digits: &str) -> &str {
    let stripped = digits.trim_start_matches('0');
    if stripped.is_empty() {
        "0"
    } else {
        stripped
    }
}

/// The semantic-type taxonomy, loaded from configuration rather than
/// compiled in. Each type has at most one parent; chains are acyclic.
/// First-mention order in the file breaks depth ties when choosing the
/// most specific of several types.
#[derive(Debug, Clone, Default)]
pub struct TypeTaxonomy {
    parents: HashMap<String, Option<String>>,
    order: Vec<String>,
}

impl TypeTaxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `child` under `parent` (`None` declares a root). Names
    /// seen only as parents become roots implicitly. Fails without mutating
    /// on a conflicting re-parent or an edge that would close a cycle.
    pub fn insert(&mut self, child: &str, parent: Option<&str>) -> Result<(), ModelError> {
        if let Some(p) = parent {
            // The edge child -> p closes a cycle iff child is already an
            // ancestor of p (or its own parent).
            let mut cursor = p;
            loop {
                if cursor == child {
                    return Err(ModelError::TaxonomyCycle(child.to_string()));
                }
                match self.parents.get(cursor).and_then(|x| x.as_deref()) {
                    Some(next) => cursor = next,
                    None => break,
                }
            }
        }
        match self.parents.get(child) {
            Some(Some(existing)) if parent != Some(existing.as_str()) => {
                return Err(ModelError::TaxonomyConflict(format!(
                    "type {child:?} assigned two parents: {existing:?} and {parent:?}"
                )))
            }
            Some(None) if parent.is_some() => {
                // Upgrade an implicit root to a child.
                self.parents
                    .insert(child.to_string(), parent.map(str::to_string));
            }
            Some(_) => {}
            None => {
                self.parents
                    .insert(child.to_string(), parent.map(str::to_string));
                self.order.push(child.to_string());
            }
        }
        if let Some(p) = parent {
            if !self.parents.contains_key(p) {
                self.parents.insert(p.to_string(), None);
                self.order.push(p.to_string());
            }
        }
        Ok(())
    }

    /// Loads a taxonomy from `child<TAB>parent` lines. A parent of `-`
    /// declares a root. `#` comments and blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let reader = ioutil::open_text(path)?;
        Self::from_reader(reader, &path.display().to_string())
    }

    pub fn from_reader(reader: impl BufRead, origin: &str) -> Result<Self, ModelError> {
        let mut taxonomy = TypeTaxonomy::new();
        for item in ioutil::data_lines(reader) {
            let (line_no, line) = item?;
            let mut fields = line.split('\t');
            let child = fields.next().unwrap_or("").trim();
            let parent = fields.next().map(str::trim);
            if child.is_empty() {
                return Err(ModelError::Config {
                    path: origin.to_string(),
                    line: line_no,
                    message: "empty type name".to_string(),
                });
            }
            let parent = match parent {
                None | Some("-") | Some("") => None,
                Some(p) => Some(p),
            };
            taxonomy.insert(child, parent).map_err(|e| ModelError::Config {
                path: origin.to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(taxonomy)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.parents.contains_key(name)
    }

    pub fn parent_of(&self, name: &str) -> Option<&str> {
        self.parents.get(name).and_then(|p| p.as_deref())
    }

    /// Distance from the root; roots have depth 0. `None` for unknown types.
    pub fn depth(&self, name: &str) -> Option<usize> {
        if !self.parents.contains_key(name) {
            return None;
        }
        let mut depth = 0;
        let mut cursor = name;
        while let Some(parent) = self.parent_of(cursor) {
            depth += 1;
            cursor = parent;
        }
        Some(depth)
    }

    /// Ancestry chain, most specific first: `[name, parent, ..., root]`.
    /// Unknown names yield just themselves.
    pub fn lineage(&self, name: &str) -> Vec<String> {
        let mut chain = vec![name.to_string()];
        let mut cursor = name;
        while let Some(parent) = self.parent_of(cursor) {
            chain.push(parent.to_string());
            cursor = parent;
        }
        chain
    }

    pub fn is_ancestor(&self, ancestor: &str, descendant: &str) -> bool {
        self.lineage(descendant).iter().any(|t| t == ancestor)
    }

    /// First-mention position in the taxonomy file, used to break depth ties.
    pub fn file_order(&self, name: &str) -> Option<usize> {
        self.order.iter().position(|n| n == name)
    }

    /// The deepest of the given types; depth ties go to the type mentioned
    /// earliest in the taxonomy file.
    pub fn most_specific<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Option<String> {
        let mut best: Option<(usize, usize, &str)> = None;
        for name in names {
            let depth = self.depth(name)?;
            let order = self.file_order(name).unwrap_or(usize::MAX);
            let candidate = (depth, order, name);
            best = Some(match best {
                None => candidate,
                Some(current) => {
                    let (cd, co, _) = current;
                    if depth > cd || (depth == cd && order < co) {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
        best.map(|(_, _, name)| name.to_string())
    }

    /// Type names in first-mention order.
    pub fn names(&self) -> &[String] {
        &self.order
    }
}

/// Ordered prefix list for one semantic type, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixPreference {
    pub type_name: String,
    pub ordered_prefixes: Vec<String>,
}

impl PrefixPreference {
    pub fn new(type_name: impl Into<String>, prefixes: Vec<String>) -> Result<Self, ModelError> {
        let type_name = type_name.into();
        let mut seen = BTreeSet::new();
        for prefix in &prefixes {
            if !seen.insert(prefix.clone()) {
                return Err(ModelError::InvalidPreference(format!(
                    "duplicate prefix {prefix:?} in preference list for {type_name:?}"
                )));
            }
        }
        Ok(PrefixPreference {
            type_name,
            ordered_prefixes: prefixes,
        })
    }

    /// Rank of a prefix in this list; unlisted prefixes rank after all
    /// listed ones.
    pub fn rank(&self, prefix: &str) -> usize {
        self.ordered_prefixes
            .iter()
            .position(|p| p == prefix)
            .unwrap_or(usize::MAX)
    }
}

/// All configured prefix preferences, keyed by type name. Lookup walks the
/// taxonomy toward the root so subtypes inherit their ancestors' orders.
#[derive(Debug, Clone, Default)]
pub struct PrefixPreferences {
    by_type: HashMap<String, PrefixPreference>,
}

impl PrefixPreferences {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pref: PrefixPreference) {
        self.by_type.insert(pref.type_name.clone(), pref);
    }

    /// Loads `type_name<TAB>prefix1,prefix2,...` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let reader = ioutil::open_text(path)?;
        Self::from_reader(reader, &path.display().to_string())
    }

    pub fn from_reader(reader: impl BufRead, origin: &str) -> Result<Self, ModelError> {
        let mut prefs = PrefixPreferences::new();
        for item in ioutil::data_lines(reader) {
            let (line_no, line) = item?;
            let (type_name, list) = line.split_once('\t').ok_or_else(|| ModelError::Config {
                path: origin.to_string(),
                line: line_no,
                message: "expected `type<TAB>prefix1,prefix2,...`".to_string(),
            })?;
            let prefixes: Vec<String> = list
                .split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect();
            let pref = PrefixPreference::new(type_name.trim(), prefixes).map_err(|e| {
                ModelError::Config {
                    path: origin.to_string(),
                    line: line_no,
                    message: e.to_string(),
                }
            })?;
            prefs.insert(pref);
        }
        Ok(prefs)
    }

    pub fn get(&self, type_name: &str) -> Option<&PrefixPreference> {
        self.by_type.get(type_name)
    }

    /// Preference for a type, falling back to the nearest ancestor that has
    /// one. Returns `None` when neither the type nor any ancestor is
    /// configured.
    pub fn resolve(&self, type_name: &str, taxonomy: &TypeTaxonomy) -> Option<&PrefixPreference> {
        for name in taxonomy.lineage(type_name) {
            if let Some(pref) = self.by_type.get(&name) {
                return Some(pref);
            }
        }
        None
    }
}

/// One identifier inside a clique, with whatever per-identifier metadata
/// the sources supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueMember {
    pub curie: Curie,
    pub label: Option<String>,
    pub descriptions: Vec<String>,
    pub taxa: Vec<Curie>,
}

impl CliqueMember {
    pub fn bare(curie: Curie) -> Self {
        CliqueMember {
            curie,
            label: None,
            descriptions: Vec::new(),
            taxa: Vec::new(),
        }
    }
}

/// An equivalence class of identifiers with an elected leader (always
/// `members[0]`), a preferred label, a semantic type, and optional
/// enrichments.
#[derive(Debug, Clone, PartialEq)]
pub struct Clique {
    pub members: Vec<CliqueMember>,
    pub preferred_label: String,
    pub type_name: String,
    pub information_content: Option<f64>,
}

impl Clique {
    pub fn leader(&self) -> &Curie {
        &self.members[0].curie
    }

    pub fn member_curies(&self) -> impl Iterator<Item = &Curie> {
        self.members.iter().map(|m| &m.curie)
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Sorted union of the members' taxa.
    pub fn taxa(&self) -> Vec<Curie> {
        let set: BTreeSet<Curie> = self
            .members
            .iter()
            .flat_map(|m| m.taxa.iter().cloned())
            .collect();
        set.into_iter().collect()
    }

    /// Union of the members' descriptions, member order preserved.
    pub fn descriptions(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for member in &self.members {
            for d in &member.descriptions {
                if seen.insert(d.clone()) {
                    out.push(d.clone());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.members.is_empty() {
            return Err(ModelError::InvalidClique("no members".to_string()));
        }
        let mut seen = BTreeSet::new();
        for member in &self.members {
            if !seen.insert(&member.curie) {
                return Err(ModelError::InvalidClique(format!(
                    "duplicate member {}",
                    member.curie
                )));
            }
        }
        if let Some(ic) = self.information_content {
            if !(0.0..=100.0).contains(&ic) {
                return Err(ModelError::InvalidClique(format!(
                    "information content {ic} outside [0,100]"
                )));
            }
        }
        Ok(())
    }
}

/// Named policy under which distinct cliques are grouped at query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflationPolicy {
    GeneProtein,
    DrugChemical,
}

impl fmt::Display for ConflationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConflationPolicy::GeneProtein => write!(f, "gene-protein"),
            ConflationPolicy::DrugChemical => write!(f, "drug-chemical"),
        }
    }
}

impl FromStr for ConflationPolicy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gene-protein" | "GeneProtein" => Ok(ConflationPolicy::GeneProtein),
            "drug-chemical" | "DrugChemical" => Ok(ConflationPolicy::DrugChemical),
            other => Err(ModelError::InvalidConflationSet(format!(
                "unknown conflation policy {other:?}"
            ))),
        }
    }
}

/// An ordered list of clique leaders to be treated as one concept under a
/// named policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflationSet {
    pub policy: ConflationPolicy,
    pub leaders: Vec<Curie>,
}

impl ConflationSet {
    pub fn new(policy: ConflationPolicy, leaders: Vec<Curie>) -> Result<Self, ModelError> {
        if leaders.len() < 2 {
            return Err(ModelError::InvalidConflationSet(format!(
                "{} leaders, need at least 2",
                leaders.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for leader in &leaders {
            if !seen.insert(leader) {
                return Err(ModelError::InvalidConflationSet(format!(
                    "duplicate leader {leader}"
                )));
            }
        }
        Ok(ConflationSet { policy, leaders })
    }
}
