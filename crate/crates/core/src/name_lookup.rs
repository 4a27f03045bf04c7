//! String-to-clique search over synonym files. Every name is indexed two
//! ways: word-tokenized (split on non-alphanumerics, lowercased) and as one
//! lowercased whole-string keyword for case-insensitive exact matching.
//! Ranking is banded — exact label, exact synonym, label token, synonym
//! token — with the matched fraction of query tokens breaking ties inside
//! a band and leader order breaking exact ties.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::compendium::{self, CompendiumError, SynonymDocument};
use crate::model::Curie;

#[derive(Debug, Error)]
pub enum NameLookupError {
    #[error("unknown leader {0}")]
    NotFound(Curie),
    #[error("leader {0} appears in more than one synonym document")]
    DuplicateLeader(Curie),
    #[error(transparent)]
    Compendium(#[from] CompendiumError),
}

/// Score bands, most specific first. Band order is fixed; the numeric
/// values are local convention (see `BAND_SCORES`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchedField {
    LabelExact,
    SynonymExact,
    LabelToken,
    SynonymToken,
}

/// Base score per band: exact label 1000, exact synonym 500, label token
/// 10, synonym token 5. The matched token fraction (0..=1] is added on top,
/// so bands never interleave.
pub const BAND_SCORES: [(MatchedField, f64); 4] = [
    (MatchedField::LabelExact, 1000.0),
    (MatchedField::SynonymExact, 500.0),
    (MatchedField::LabelToken, 10.0),
    (MatchedField::SynonymToken, 5.0),
];

fn band_score(field: MatchedField) -> f64 {
    BAND_SCORES
        .iter()
        .find(|(f, _)| *f == field)
        .map(|(_, s)| *s)
        .expect("band listed")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMatch {
    #[serde(flatten)]
    pub document: SynonymDocument,
    pub score: f64,
    pub matched_field: MatchedField,
    pub matched_text: String,
}

/// Optional result filters, all conjunctive.
#[derive(Debug, Clone, Default)]
pub struct LookupFilters {
    /// Keep documents whose `types` list contains this name.
    pub type_name: Option<String>,
    /// Keep documents whose leader prefix is one of these.
    pub prefixes: Vec<String>,
    /// Keep documents whose taxa intersect these.
    pub taxa: Vec<Curie>,
}

impl LookupFilters {
    fn admits(&self, document: &SynonymDocument) -> bool {
        if let Some(type_name) = &self.type_name {
            if !document.types.iter().any(|t| t == type_name) {
                return false;
            }
        }
        if !self.prefixes.is_empty()
            && !self
                .prefixes
                .iter()
                .any(|p| p == document.curie.prefix())
        {
            return false;
        }
        if !self.taxa.is_empty() && !self.taxa.iter().any(|t| document.taxa.contains(t)) {
            return false;
        }
        true
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Immutable inverted index over synonym documents.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    documents: Vec<SynonymDocument>,
    token_postings: BTreeMap<String, Vec<u32>>,
    keyword_postings: BTreeMap<String, Vec<u32>>,
    by_leader: HashMap<Curie, u32>,
}

impl SearchIndex {
    pub fn build(documents: Vec<SynonymDocument>) -> Result<Self, NameLookupError> {
        let mut index = SearchIndex {
            documents: Vec::with_capacity(documents.len()),
            token_postings: BTreeMap::new(),
            keyword_postings: BTreeMap::new(),
            by_leader: HashMap::new(),
        };
        for document in documents {
            let doc_id = index.documents.len() as u32;
            if index
                .by_leader
                .insert(document.curie.clone(), doc_id)
                .is_some()
            {
                return Err(NameLookupError::DuplicateLeader(document.curie));
            }
            for name in document.names.iter().chain([&document.preferred_name]) {
                let keyword = name.to_lowercase();
                push_posting(index.keyword_postings.entry(keyword).or_default(), doc_id);
                for token in tokenize(name) {
                    push_posting(index.token_postings.entry(token).or_default(), doc_id);
                }
            }
            index.documents.push(document);
        }
        Ok(index)
    }

    /// Builds from synonym files (gzip accepted by `.gz` name).
    pub fn load(paths: &[impl AsRef<Path>]) -> Result<Self, NameLookupError> {
        let mut documents = Vec::new();
        for path in paths {
            documents.extend(compendium::read_synonyms_file(path)?);
        }
        Self::build(documents)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// All names of a leader's clique, preferred label included.
    pub fn synonyms_of(&self, leader: &Curie) -> Result<&[String], NameLookupError> {
        self.by_leader
            .get(leader)
            .map(|&id| self.documents[id as usize].names.as_slice())
            .ok_or_else(|| NameLookupError::NotFound(leader.clone()))
    }

    /// Ranked search. Candidates match any query token (the final token as
    /// a prefix under autocomplete) or the whole lowercased query; filters
    /// apply before ranking; results sort by score descending with leader
    /// order breaking ties.
    pub fn lookup(
        &self,
        query: &str,
        autocomplete: bool,
        limit: usize,
        filters: &LookupFilters,
    ) -> Vec<ScoredMatch> {
        let query = query.trim();
        if query.is_empty() || limit == 0 {
            return Vec::new();
        }
        let query_lower = query.to_lowercase();
        let query_tokens = tokenize(query);

        let mut candidates: BTreeSet<u32> = BTreeSet::new();
        if let Some(ids) = self.keyword_postings.get(&query_lower) {
            candidates.extend(ids.iter().copied());
        }
        for (i, token) in query_tokens.iter().enumerate() {
            if let Some(ids) = self.token_postings.get(token) {
                candidates.extend(ids.iter().copied());
            }
            let is_final = i + 1 == query_tokens.len();
            if autocomplete && is_final {
                for (key, ids) in self.token_postings.range(token.clone()..) {
                    if !key.starts_with(token.as_str()) {
                        break;
                    }
                    candidates.extend(ids.iter().copied());
                }
            }
        }

        let mut matches: Vec<ScoredMatch> = Vec::new();
        for doc_id in candidates {
            let document = &self.documents[doc_id as usize];
            if !filters.admits(document) {
                continue;
            }
            if let Some(m) = self.evaluate(document, &query_lower, &query_tokens, autocomplete) {
                matches.push(m);
            }
        }
        matches.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.document.curie.cmp(&b.document.curie))
        });
        matches.truncate(limit);
        matches
    }

    fn evaluate(
        &self,
        document: &SynonymDocument,
        query_lower: &str,
        query_tokens: &[String],
        autocomplete: bool,
    ) -> Option<ScoredMatch> {
        let token_hits = |text: &str| -> usize {
            let text_tokens = tokenize(text);
            query_tokens
                .iter()
                .enumerate()
                .filter(|(i, qt)| {
                    let is_final = *i + 1 == query_tokens.len();
                    text_tokens.iter().any(|tt| {
                        tt == *qt || (autocomplete && is_final && tt.starts_with(qt.as_str()))
                    })
                })
                .count()
        };

        let label = &document.preferred_name;
        let label_exact = label.to_lowercase() == query_lower;
        let synonym_exact = document
            .names
            .iter()
            .find(|n| !label_exact && n.to_lowercase() == query_lower);
        let label_hits = token_hits(label);
        // Best token-matching synonym: most hits, then sorted-name order.
        let mut best_synonym: Option<(usize, &String)> = None;
        let mut matched_any: BTreeSet<usize> = BTreeSet::new();
        for name in &document.names {
            let hits = token_hits(name);
            if hits > 0 && best_synonym.is_none_or(|(h, _)| hits > h) {
                best_synonym = Some((hits, name));
            }
            for (i, qt) in query_tokens.iter().enumerate() {
                let is_final = i + 1 == query_tokens.len();
                let text_tokens = tokenize(name);
                if text_tokens.iter().any(|tt| {
                    tt == qt || (autocomplete && is_final && tt.starts_with(qt.as_str()))
                }) {
                    matched_any.insert(i);
                }
            }
        }
        for (i, qt) in query_tokens.iter().enumerate() {
            let is_final = i + 1 == query_tokens.len();
            let text_tokens = tokenize(label);
            if text_tokens.iter().any(|tt| {
                tt == qt || (autocomplete && is_final && tt.starts_with(qt.as_str()))
            }) {
                matched_any.insert(i);
            }
        }

        let (field, matched_text) = if label_exact {
            (MatchedField::LabelExact, label.clone())
        } else if let Some(name) = synonym_exact {
            (MatchedField::SynonymExact, name.clone())
        } else if label_hits > 0 {
            (MatchedField::LabelToken, label.clone())
        } else if let Some((_, name)) = best_synonym {
            (MatchedField::SynonymToken, name.clone())
        } else {
            return None;
        };

        let fraction = if query_tokens.is_empty() {
            1.0
        } else {
            matched_any.len() as f64 / query_tokens.len() as f64
        };
        Some(ScoredMatch {
            document: document.clone(),
            score: band_score(field) + fraction,
            matched_field: field,
            matched_text,
        })
    }
}

fn push_posting(postings: &mut Vec<u32>, doc_id: u32) {
    if postings.last() != Some(&doc_id) {
        postings.push(doc_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curie(text: &str) -> Curie {
        Curie::parse(text).unwrap()
    }

    fn document(leader: &str, preferred: &str, names: &[&str], types: &[&str]) -> SynonymDocument {
        let mut all: BTreeSet<String> = names.iter().map(|s| s.to_string()).collect();
        all.insert(preferred.to_string());
        SynonymDocument {
            curie: curie(leader),
            preferred_name: preferred.to_string(),
            names: all.into_iter().collect(),
            types: types.iter().map(|s| s.to_string()).collect(),
            taxa: Vec::new(),
        }
    }

    fn sample_index() -> SearchIndex {
        SearchIndex::build(vec![
            document(
                "CHEBI:15365",
                "acetylsalicylic acid",
                &["aspirin", "2-acetoxybenzoic acid"],
                &["SmallMolecule"],
            ),
            document("PUBCHEM.COMPOUND:2244", "Aspirin", &[], &["SmallMolecule"]),
            document("NCBIGene:100", "ADA", &["adenosine deaminase"], &["Gene"]),
            document(
                "MONDO:0011130",
                "ADA-SCID",
                &["ADA deficiency", "severe combined immunodeficiency"],
                &["Disease"],
            ),
            document("NCBITaxon:125078", "Ada", &[], &["OrganismTaxon"]),
            document("CHEBI:15377", "water", &["oxidane"], &["SmallMolecule"]),
        ])
        .unwrap()
    }

    #[test]
    fn aspirin_query_finds_both_cliques() {
        let index = sample_index();
        let results = index.lookup("aspirin", false, 10, &LookupFilters::default());
        let leaders: Vec<String> = results
            .iter()
            .map(|m| m.document.curie.to_string())
            .collect();
        assert!(leaders.contains(&"CHEBI:15365".to_string()));
        assert!(leaders.contains(&"PUBCHEM.COMPOUND:2244".to_string()));
        // Case-insensitive exact label beats exact synonym.
        assert_eq!(results[0].document.curie, curie("PUBCHEM.COMPOUND:2244"));
        assert_eq!(results[0].matched_field, MatchedField::LabelExact);
        assert_eq!(results[1].matched_field, MatchedField::SynonymExact);
    }

    #[test]
    fn ada_query_returns_three_type_distinguishable_results() {
        let index = sample_index();
        let results = index.lookup("ADA", false, 10, &LookupFilters::default());
        let types: BTreeSet<&str> = results
            .iter()
            .flat_map(|m| m.document.types.iter().map(String::as_str))
            .collect();
        assert!(types.contains("Gene"));
        assert!(types.contains("Disease"));
        assert!(types.contains("OrganismTaxon"));

        let gene_only = index.lookup(
            "ADA",
            false,
            10,
            &LookupFilters {
                type_name: Some("Gene".to_string()),
                ..Default::default()
            },
        );
        assert_eq!(gene_only.len(), 1);
        assert_eq!(gene_only[0].document.curie, curie("NCBIGene:100"));
    }

    #[test]
    fn autocomplete_expands_the_final_token_only() {
        let index = sample_index();
        let without = index.lookup("acetylsal", false, 10, &LookupFilters::default());
        assert!(without.is_empty());
        let with = index.lookup("acetylsal", true, 10, &LookupFilters::default());
        assert_eq!(with.len(), 1);
        assert_eq!(with[0].document.curie, curie("CHEBI:15365"));
    }

    #[test]
    fn case_folding_applies_to_exact_matches() {
        let index = sample_index();
        let results = index.lookup("WATER", false, 10, &LookupFilters::default());
        assert_eq!(results[0].document.curie, curie("CHEBI:15377"));
        assert_eq!(results[0].matched_field, MatchedField::LabelExact);
    }

    #[test]
    fn token_fraction_orders_within_band() {
        let index = SearchIndex::build(vec![
            document("A:1", "alpha beta", &[], &["T"]),
            document("A:2", "alpha gamma", &[], &["T"]),
        ])
        .unwrap();
        let results = index.lookup("alpha beta", false, 10, &LookupFilters::default());
        // A:1 matches exactly; A:2 matches 1/2 tokens.
        assert_eq!(results[0].document.curie, curie("A:1"));
        assert_eq!(results[0].matched_field, MatchedField::LabelExact);
        assert_eq!(results[1].document.curie, curie("A:2"));
        assert!((results[1].score - 10.5).abs() < 1e-12);
    }

    #[test]
    fn equal_scores_break_by_leader_order() {
        let index = SearchIndex::build(vec![
            document("B:2", "shared name", &[], &["T"]),
            document("B:10", "shared name", &[], &["T"]),
        ])
        .unwrap();
        let results = index.lookup("shared name", false, 10, &LookupFilters::default());
        assert_eq!(results[0].document.curie, curie("B:2"));
        assert_eq!(results[1].document.curie, curie("B:10"));
        assert_eq!(results[0].score, results[1].score);
    }

    #[test]
    fn synonyms_of_includes_preferred_label() {
        let index = sample_index();
        let names = index.synonyms_of(&curie("CHEBI:15365")).unwrap();
        assert!(names.contains(&"aspirin".to_string()));
        assert!(names.contains(&"acetylsalicylic acid".to_string()));

        let singleton = index.synonyms_of(&curie("NCBITaxon:125078")).unwrap();
        assert_eq!(singleton, ["Ada"]);

        assert!(matches!(
            index.synonyms_of(&curie("UNKNOWN:1")),
            Err(NameLookupError::NotFound(_))
        ));
    }

    #[test]
    fn empty_query_returns_nothing() {
        let index = sample_index();
        assert!(index.lookup("", false, 10, &LookupFilters::default()).is_empty());
        assert!(index.lookup("   ", true, 10, &LookupFilters::default()).is_empty());
    }

    #[test]
    fn exact_label_outranks_everything_else() {
        let index = sample_index();
        for document_query in ["acetylsalicylic acid", "ADA-SCID", "water"] {
            let results = index.lookup(document_query, false, 50, &LookupFilters::default());
            assert_eq!(
                results[0].matched_field,
                MatchedField::LabelExact,
                "query {document_query:?}"
            );
            for later in &results[1..] {
                assert!(later.score <= results[0].score);
            }
        }
    }

    proptest! {
        #[test]
        fn autocomplete_superset_and_filter_soundness(
            query in "[a-z]{1,10}( [a-z]{1,4})?",
            type_filter in proptest::option::of(prop_oneof![
                Just("Gene".to_string()),
                Just("Disease".to_string()),
                Just("SmallMolecule".to_string()),
            ]),
        ) {
            let index = sample_index();
            let filters = LookupFilters {
                type_name: type_filter.clone(),
                ..Default::default()
            };
            let plain = index.lookup(&query, false, usize::MAX, &filters);
            let auto = index.lookup(&query, true, usize::MAX, &filters);
            let plain_ids: BTreeSet<Curie> =
                plain.iter().map(|m| m.document.curie.clone()).collect();
            let auto_ids: BTreeSet<Curie> =
                auto.iter().map(|m| m.document.curie.clone()).collect();
            prop_assert!(plain_ids.is_subset(&auto_ids));
            for m in plain.iter().chain(auto.iter()) {
                if let Some(t) = &type_filter {
                    prop_assert!(m.document.types.contains(t));
                }
            }
            // Scores are non-increasing.
            for results in [&plain, &auto] {
                for pair in results.windows(2) {
                    prop_assert!(pair[0].score >= pair[1].score);
                }
            }
        }
    }
}
