//! Cross-type conflation: connects distinct cliques (gene↔protein,
//! drug↔chemical) through dedicated mappings and orders each resulting set
//! by the policy's rules. Conflation never rewrites cliques — it only
//! groups their leaders for query-time expansion.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::cliques::UnionFind;
use crate::model::{cmp_suffixes, Clique, ConflationPolicy, ConflationSet, Curie, ModelError};

#[derive(Debug, Error)]
pub enum ConflationError {
    #[error("curie {0} does not belong to any loaded clique")]
    UnresolvableCurie(Curie),
    #[error("leader {0} appears in more than one loaded clique")]
    DuplicateLeader(Curie),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// What the ordering rules need to know about one clique.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueFacts {
    pub type_name: String,
    pub information_content: Option<f64>,
    pub size: usize,
}

/// Leader-keyed digest of loaded compendia: resolves any member to its
/// leader and exposes per-clique facts.
#[derive(Debug, Clone, Default)]
pub struct CliqueCatalog {
    leader_of: HashMap<Curie, Curie>,
    facts: HashMap<Curie, CliqueFacts>,
}

impl CliqueCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_clique(&mut self, clique: &Clique) -> Result<(), ConflationError> {
        let leader = clique.leader().clone();
        if self.facts.contains_key(&leader) {
            return Err(ConflationError::DuplicateLeader(leader));
        }
        self.facts.insert(
            leader.clone(),
            CliqueFacts {
                type_name: clique.type_name.clone(),
                information_content: clique.information_content,
                size: clique.size(),
            },
        );
        for member in clique.member_curies() {
            self.leader_of.insert(member.clone(), leader.clone());
        }
        Ok(())
    }

    pub fn from_cliques<'a>(
        cliques: impl IntoIterator<Item = &'a Clique>,
    ) -> Result<Self, ConflationError> {
        let mut catalog = CliqueCatalog::new();
        for clique in cliques {
            catalog.add_clique(clique)?;
        }
        Ok(catalog)
    }

    pub fn leader(&self, curie: &Curie) -> Option<&Curie> {
        self.leader_of.get(curie)
    }

    pub fn facts(&self, leader: &Curie) -> Option<&CliqueFacts> {
        self.facts.get(leader)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

/// Ordering configuration. The gene-before-protein rule and the
/// DrugChemical key sequence (type preference, IC, clique size, suffix)
/// are fixed; only the sort directions for IC and size are configurable,
/// since either direction yields a defensible canonical order.
#[derive(Debug, Clone)]
pub struct ConflationOrdering {
    /// Type name that sorts first under GeneProtein.
    pub gene_type: String,
    /// DrugChemical type preference, most preferred first.
    pub type_order: Vec<String>,
    /// Ascending IC puts more general concepts first (default).
    pub ic_ascending: bool,
    /// Descending size puts better-attested cliques first (default).
    pub size_descending: bool,
}

impl Default for ConflationOrdering {
    fn default() -> Self {
        ConflationOrdering {
            gene_type: "Gene".to_string(),
            type_order: Vec::new(),
            ic_ascending: true,
            size_descending: true,
        }
    }
}

/// Builds conflation sets: resolves every mapped curie to its clique
/// leader, takes connected components over the leader graph, and emits
/// each component with ≥2 leaders as one ordered set. Output is sorted by
/// first leader for file determinism.
pub fn build_conflations(
    mappings: impl IntoIterator<Item = (Curie, Curie)>,
    catalog: &CliqueCatalog,
    policy: ConflationPolicy,
    ordering: &ConflationOrdering,
) -> Result<Vec<ConflationSet>, ConflationError> {
    let mut index: HashMap<Curie, usize> = HashMap::new();
    let mut leaders: Vec<Curie> = Vec::new();
    let mut uf = UnionFind::new();
    let mut intern = |leader: &Curie, uf: &mut UnionFind, leaders: &mut Vec<Curie>| -> usize {
        if let Some(&id) = index.get(leader) {
            return id;
        }
        let id = uf.make();
        index.insert(leader.clone(), id);
        leaders.push(leader.clone());
        id
    };
    for (left, right) in mappings {
        let left_leader = catalog
            .leader(&left)
            .ok_or_else(|| ConflationError::UnresolvableCurie(left.clone()))?
            .clone();
        let right_leader = catalog
            .leader(&right)
            .ok_or_else(|| ConflationError::UnresolvableCurie(right.clone()))?
            .clone();
        let a = intern(&left_leader, &mut uf, &mut leaders);
        let b = intern(&right_leader, &mut uf, &mut leaders);
        uf.union(a, b);
    }

    let mut groups: BTreeMap<usize, Vec<Curie>> = BTreeMap::new();
    for i in 0..leaders.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(leaders[i].clone());
    }
    let mut sets = Vec::new();
    for members in groups.into_values() {
        if members.len() < 2 {
            // A mapping whose endpoints share a clique collapses to one
            // leader; nothing to conflate.
            continue;
        }
        let ordered = match policy {
            ConflationPolicy::GeneProtein => {
                order_gene_protein(members, catalog, &ordering.gene_type)
            }
            ConflationPolicy::DrugChemical => order_drug_chemical(members, catalog, ordering),
        };
        sets.push(ConflationSet::new(policy, ordered)?);
    }
    sets.sort_by(|a, b| a.leaders[0].cmp(&b.leaders[0]));
    Ok(sets)
}

/// Genes first, then everything else; numeric-aware suffix order within
/// each block (full identifier as final tiebreak).
pub fn order_gene_protein(
    mut leaders: Vec<Curie>,
    catalog: &CliqueCatalog,
    gene_type: &str,
) -> Vec<Curie> {
    leaders.sort_by(|a, b| {
        let a_gene = catalog.facts(a).map(|f| f.type_name == gene_type) == Some(true);
        let b_gene = catalog.facts(b).map(|f| f.type_name == gene_type) == Some(true);
        b_gene
            .cmp(&a_gene) // true (gene) first
            .then_with(|| cmp_suffixes(a.suffix(), b.suffix()))
            .then_with(|| a.cmp(b))
    });
    leaders
}

/// Four-key DrugChemical order: type preference, information content
/// (missing always last), clique size, numeric-aware suffix (full
/// identifier as final tiebreak).
pub fn order_drug_chemical(
    mut leaders: Vec<Curie>,
    catalog: &CliqueCatalog,
    ordering: &ConflationOrdering,
) -> Vec<Curie> {
    leaders.sort_by(|a, b| drug_chemical_cmp(a, b, catalog, ordering));
    leaders
}

pub fn drug_chemical_cmp(
    a: &Curie,
    b: &Curie,
    catalog: &CliqueCatalog,
    ordering: &ConflationOrdering,
) -> Ordering {
    let fa = catalog.facts(a);
    let fb = catalog.facts(b);
    let type_rank = |f: Option<&CliqueFacts>| {
        f.and_then(|f| ordering.type_order.iter().position(|t| *t == f.type_name))
            .unwrap_or(usize::MAX)
    };
    let ic_cmp = {
        let ia = fa.and_then(|f| f.information_content);
        let ib = fb.and_then(|f| f.information_content);
        match (ia, ib) {
            (None, None) => Ordering::Equal,
            (None, Some(_)) => Ordering::Greater, // missing sorts last
            (Some(_), None) => Ordering::Less,
            (Some(x), Some(y)) => {
                let cmp = x.total_cmp(&y);
                if ordering.ic_ascending {
                    cmp
                } else {
                    cmp.reverse()
                }
            }
        }
    };
    let size_cmp = {
        let sa = fa.map_or(0, |f| f.size);
        let sb = fb.map_or(0, |f| f.size);
        let cmp = sa.cmp(&sb);
        if ordering.size_descending {
            cmp.reverse()
        } else {
            cmp
        }
    };
    type_rank(fa)
        .cmp(&type_rank(fb))
        .then(ic_cmp)
        .then(size_cmp)
        .then_with(|| cmp_suffixes(a.suffix(), b.suffix()))
        .then_with(|| a.cmp(b))
}
