//! Interoperation measurement: pairwise shared-identifier counts, the
//! normalized overlap density |A∩B| / √(|A|·|B|), connection sets, and the
//! pre- versus post-normalization comparison that shows what identifier
//! resolution buys.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::ioutil;
use crate::model::Curie;
use crate::normalizer::NormalizerIndex;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("source {0:?} has no identifiers")]
    EmptySource(String),
    #[error("need at least two sources, found {0}")]
    TooFewSources(usize),
    #[error("{path}:{line}: {message}")]
    MalformedInput {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceIdSet {
    pub source_id: String,
    pub ids: BTreeSet<Curie>,
}

impl SourceIdSet {
    pub fn new(source_id: impl Into<String>, ids: impl IntoIterator<Item = Curie>) -> Self {
        SourceIdSet {
            source_id: source_id.into(),
            ids: ids.into_iter().collect(),
        }
    }

    /// Reads one identifier per line; the file stem names the source.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnalyticsError> {
        let path = path.as_ref();
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut ids = BTreeSet::new();
        for entry in ioutil::data_lines(ioutil::open_text(path)?) {
            let (line, text) = entry?;
            let curie = Curie::parse(text.trim()).map_err(|e| AnalyticsError::MalformedInput {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
            ids.insert(curie);
        }
        Ok(SourceIdSet { source_id, ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Maps every id to its clique leader (unknown ids stay themselves)
    /// and re-deduplicates.
    pub fn normalized(&self, index: &NormalizerIndex) -> SourceIdSet {
        SourceIdSet {
            source_id: self.source_id.clone(),
            ids: self
                .ids
                .iter()
                .map(|id| index.leader_of(id).unwrap_or(id).clone())
                .collect(),
        }
    }
}

/// |a ∩ b| / √(|a| · |b|), exact to floating point.
pub fn overlap_density(a: &SourceIdSet, b: &SourceIdSet) -> Result<f64, AnalyticsError> {
    for set in [a, b] {
        if set.is_empty() {
            return Err(AnalyticsError::EmptySource(set.source_id.clone()));
        }
    }
    let shared = a.ids.intersection(&b.ids).count();
    Ok(shared as f64 / ((a.len() as f64) * (b.len() as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapMatrix {
    pub sources: Vec<String>,
    /// counts[i][j] = shared ids; the diagonal holds set sizes.
    pub counts: Vec<Vec<u64>>,
    /// densities[i][j] per the overlap formula; 1.0 on the non-empty
    /// diagonal, 0.0 wherever a side is empty.
    pub densities: Vec<Vec<f64>>,
    /// Distinct source pairs sharing at least one id, in source order.
    pub connections: BTreeSet<(String, String)>,
}

impl OverlapMatrix {
    pub fn connection_count(&self) -> usize {
        self.connections.len()
    }

    /// Mean number of connected partners per source; equals
    /// 2·|connections| / |sources| because each connection has two ends.
    pub fn average_degree(&self) -> f64 {
        if self.sources.is_empty() {
            return 0.0;
        }
        2.0 * self.connections.len() as f64 / self.sources.len() as f64
    }
}

/// Builds the pairwise matrix, normalizing ids to clique leaders first
/// when an index is supplied.
pub fn build_matrix(
    sets: &[SourceIdSet],
    normalizer: Option<&NormalizerIndex>,
) -> Result<OverlapMatrix, AnalyticsError> {
    if sets.len() < 2 {
        return Err(AnalyticsError::TooFewSources(sets.len()));
    }
    let sets: Vec<SourceIdSet> = match normalizer {
        Some(index) => sets.iter().map(|s| s.normalized(index)).collect(),
        None => sets.to_vec(),
    };
    let n = sets.len();
    let mut matrix = OverlapMatrix {
        sources: sets.iter().map(|s| s.source_id.clone()).collect(),
        counts: vec![vec![0; n]; n],
        densities: vec![vec![0.0; n]; n],
        connections: BTreeSet::new(),
    };
    for i in 0..n {
        matrix.counts[i][i] = sets[i].len() as u64;
        if !sets[i].is_empty() {
            matrix.densities[i][i] = 1.0;
        }
        for j in i + 1..n {
            let shared = sets[i].ids.intersection(&sets[j].ids).count() as u64;
            matrix.counts[i][j] = shared;
            matrix.counts[j][i] = shared;
            let density = if sets[i].is_empty() || sets[j].is_empty() {
                0.0
            } else {
                shared as f64 / ((sets[i].len() as f64) * (sets[j].len() as f64)).sqrt()
            };
            matrix.densities[i][j] = density;
            matrix.densities[j][i] = density;
            if shared > 0 {
                matrix
                    .connections
                    .insert((sets[i].source_id.clone(), sets[j].source_id.clone()));
            }
        }
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub pre_connections: usize,
    pub post_connections: usize,
    pub new_connections: Vec<(String, String)>,
    /// (post − pre) / pre · 100; absent when pre has no connections.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percent_increase: Option<f64>,
    pub pre_average_degree: f64,
    pub post_average_degree: f64,
}

pub fn percent_increase(pre: u64, post: u64) -> Option<f64> {
    if pre == 0 {
        return None;
    }
    Some((post as f64 - pre as f64) / pre as f64 * 100.0)
}

pub fn compare(pre: &OverlapMatrix, post: &OverlapMatrix) -> OverlapReport {
    OverlapReport {
        pre_connections: pre.connection_count(),
        post_connections: post.connection_count(),
        new_connections: post.connections.difference(&pre.connections).cloned().collect(),
        percent_increase: percent_increase(
            pre.connection_count() as u64,
            post.connection_count() as u64,
        ),
        pre_average_degree: pre.average_degree(),
        post_average_degree: post.average_degree(),
    }
}

/// Tab-separated matrix with source names on both axes. `cell` picks the
/// rendered value, so counts and densities share one shape.
fn write_matrix_tsv<T: std::fmt::Display>(
    matrix: &OverlapMatrix,
    cell: impl Fn(usize, usize) -> T,
    mut out: impl Write,
) -> Result<(), AnalyticsError> {
    write!(out, "source")?;
    for name in &matrix.sources {
        write!(out, "\t{name}")?;
    }
    writeln!(out)?;
    for (i, name) in matrix.sources.iter().enumerate() {
        write!(out, "{name}")?;
        for j in 0..matrix.sources.len() {
            write!(out, "\t{}", cell(i, j))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_counts_tsv(matrix: &OverlapMatrix, out: impl Write) -> Result<(), AnalyticsError> {
    write_matrix_tsv(matrix, |i, j| matrix.counts[i][j], out)
}

pub fn write_densities_tsv(matrix: &OverlapMatrix, out: impl Write) -> Result<(), AnalyticsError> {
    write_matrix_tsv(matrix, |i, j| format!("{:.6}", matrix.densities[i][j]), out)
}

/// Minimal density heatmap: one SVG rect per cell, darker means denser.
pub fn write_heatmap_svg(matrix: &OverlapMatrix, mut out: impl Write) -> Result<(), AnalyticsError> {
    const CELL: usize = 28;
    const MARGIN: usize = 120;
    let n = matrix.sources.len();
    let size = MARGIN + n * CELL + 8;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="monospace" font-size="10">"#
    )?;
    for (i, name) in matrix.sources.iter().enumerate() {
        let y = MARGIN + i * CELL + CELL / 2 + 3;
        writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="end">{name}</text>"#,
            x = MARGIN - 6
        )?;
        let x = MARGIN + i * CELL + CELL / 2;
        writeln!(
            out,
            r#"<text x="{x}" y="{y}" text-anchor="start" transform="rotate(-60 {x} {y})">{name}</text>"#,
            y = MARGIN - 6
        )?;
    }
    for i in 0..n {
        for j in 0..n {
            let density = matrix.densities[i][j].clamp(0.0, 1.0);
            let shade = 255 - (density * 205.0).round() as u8;
            writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{c}" height="{c}" fill="rgb({shade},{shade},255)" stroke="#ccc"><title>{a} / {b}: {density:.4}</title></rect>"##,
                x = MARGIN + j * CELL,
                y = MARGIN + i * CELL,
                c = CELL,
                a = matrix.sources[i],
                b = matrix.sources[j],
            )?;
        }
    }
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use proptest::prelude::*;

    use crate::model::{Clique, CliqueMember};

    fn curie(text: &str) -> Curie {
        Curie::parse(text).unwrap()
    }

    fn set(id: &str, members: &[&str]) -> SourceIdSet {
        SourceIdSet::new(id, members.iter().map(|m| curie(m)))
    }

    fn index_of(groups: &[Vec<String>]) -> NormalizerIndex {
        let cliques = groups.iter().map(|group| Clique {
            members: group
                .iter()
                .map(|id| CliqueMember::bare(curie(id)))
                .collect(),
            preferred_label: group[0].clone(),
            type_name: "Thing".to_string(),
            information_content: None,
        });
        NormalizerIndex::from_parts(cliques, Vec::new(), Vec::new(), None, "test").unwrap()
    }

    #[test]
    fn density_is_the_scaled_overlap() {
        // |a|=4, |b|=9, overlap 3 → 3/6.
        let a = set("a", &["X:1", "X:2", "X:3", "X:4"]);
        let b = set(
            "b",
            &["X:1", "X:2", "X:3", "Y:1", "Y:2", "Y:3", "Y:4", "Y:5", "Y:6"],
        );
        assert_eq!(overlap_density(&a, &b).unwrap(), 0.5);
        assert_eq!(overlap_density(&a, &a).unwrap(), 1.0);

        let disjoint = set("c", &["Z:1"]);
        assert_eq!(overlap_density(&a, &disjoint).unwrap(), 0.0);
    }

    #[test]
    fn empty_sources_are_rejected() {
        let a = set("a", &["X:1"]);
        let empty = set("empty", &[]);
        assert!(matches!(
            overlap_density(&a, &empty),
            Err(AnalyticsError::EmptySource(name)) if name == "empty"
        ));
    }

    #[test]
    fn matrix_is_symmetric_with_sizes_on_the_diagonal() {
        let sets = [
            set("a", &["X:1", "X:2"]),
            set("b", &["X:2", "X:3", "X:4"]),
            set("c", &["Z:9"]),
        ];
        let matrix = build_matrix(&sets, None).unwrap();
        assert_eq!(matrix.counts[0][0], 2);
        assert_eq!(matrix.counts[1][1], 3);
        assert_eq!(matrix.densities[2][2], 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(matrix.counts[i][j], matrix.counts[j][i]);
                assert_eq!(matrix.densities[i][j], matrix.densities[j][i]);
                assert!((0.0..=1.0).contains(&matrix.densities[i][j]));
            }
        }
        assert_eq!(matrix.counts[0][1], 1);
        assert_eq!(
            matrix.connections,
            [("a".to_string(), "b".to_string())].into_iter().collect()
        );
    }

    #[test]
    fn normalization_connects_sources_through_cliques() {
        // Three sources each hold a different member of one clique.
        let sets = [
            set("chebi", &["CHEBI:15377"]),
            set("mesh", &["MESH:D014867"]),
            set("pubchem", &["PUBCHEM.COMPOUND:962"]),
        ];
        let index = index_of(&[vec![
            "CHEBI:15377".to_string(),
            "MESH:D014867".to_string(),
            "PUBCHEM.COMPOUND:962".to_string(),
        ]]);
        let pre = build_matrix(&sets, None).unwrap();
        assert!(pre.connections.is_empty());
        let post = build_matrix(&sets, Some(&index)).unwrap();
        assert_eq!(post.connection_count(), 3);
        assert_eq!(post.densities[0][1], 1.0);

        // Leaders are fixed points, so normalizing twice changes nothing.
        let renormalized: Vec<SourceIdSet> = sets.iter().map(|s| s.normalized(&index)).collect();
        let twice = build_matrix(&renormalized, Some(&index)).unwrap();
        assert_eq!(post, twice);
    }

    #[test]
    fn comparison_reports_new_connections_and_percent_increase() {
        let sets = [
            set("chebi", &["CHEBI:15377"]),
            set("mesh", &["MESH:D014867"]),
        ];
        let index = index_of(&[vec!["CHEBI:15377".to_string(), "MESH:D014867".to_string()]]);
        let pre = build_matrix(&sets, None).unwrap();
        let post = build_matrix(&sets, Some(&index)).unwrap();
        let report = compare(&pre, &post);
        assert_eq!(report.pre_connections, 0);
        assert_eq!(report.post_connections, 1);
        assert_eq!(report.new_connections, [("chebi".to_string(), "mesh".to_string())]);
        assert_eq!(report.percent_increase, None);
        assert_eq!(report.post_average_degree, 1.0);

        let same = compare(&post, &post);
        assert!(same.new_connections.is_empty());
        assert_eq!(same.percent_increase, Some(0.0));
    }

    #[test]
    fn percent_increase_matches_the_headline_figure() {
        let increase = percent_increase(138, 267).unwrap();
        assert!((increase - 93.5).abs() < 0.05, "got {increase}");
    }

    #[test]
    fn tsv_and_svg_render() {
        let sets = [set("a", &["X:1", "X:2"]), set("b", &["X:2"])];
        let matrix = build_matrix(&sets, None).unwrap();
        let mut counts = Vec::new();
        write_counts_tsv(&matrix, &mut counts).unwrap();
        assert_eq!(
            String::from_utf8(counts).unwrap(),
            "source\ta\tb\na\t2\t1\nb\t1\t1\n"
        );
        let mut densities = Vec::new();
        write_densities_tsv(&matrix, &mut densities).unwrap();
        assert!(String::from_utf8(densities)
            .unwrap()
            .contains("0.707107"));
        let mut svg = Vec::new();
        write_heatmap_svg(&matrix, &mut svg).unwrap();
        let svg = String::from_utf8(svg).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<rect").count(), 4);
    }

    #[test]
    fn id_set_files_load_with_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.txt");
        std::fs::write(&path, "# ids\nX:1\nX:2\nX:1\n").unwrap();
        let set = SourceIdSet::load(&path).unwrap();
        assert_eq!(set.source_id, "alpha");
        assert_eq!(set.len(), 2);

        std::fs::write(&path, "not a curie\n").unwrap();
        assert!(matches!(
            SourceIdSet::load(&path),
            Err(AnalyticsError::MalformedInput { line: 1, .. })
        ));
    }

    proptest! {
        /// Mapping ids onto leaders can merge shared ids but never
        /// disconnect sources that already share one.
        #[test]
        fn connections_are_monotone_under_normalization(
            raw_sets in proptest::collection::vec(
                proptest::collection::btree_set(0u8..30, 1..12),
                2..6,
            ),
            grouping in proptest::collection::vec(0u8..8, 30),
        ) {
            let sets: Vec<SourceIdSet> = raw_sets
                .iter()
                .enumerate()
                .map(|(i, ids)| {
                    SourceIdSet::new(
                        format!("s{i}"),
                        ids.iter().map(|n| curie(&format!("X:{n}"))),
                    )
                })
                .collect();
            let mut groups: BTreeMap<u8, Vec<String>> = BTreeMap::new();
            for (n, g) in grouping.iter().enumerate() {
                groups.entry(*g).or_default().push(format!("X:{n}"));
            }
            let index = index_of(&groups.into_values().collect::<Vec<_>>());
            let pre = build_matrix(&sets, None).unwrap();
            let post = build_matrix(&sets, Some(&index)).unwrap();
            prop_assert!(pre.connections.is_subset(&post.connections));
            // Degree identity holds exactly on both sides.
            for matrix in [&pre, &post] {
                let expected = 2.0 * matrix.connection_count() as f64 / matrix.sources.len() as f64;
                prop_assert_eq!(matrix.average_degree(), expected);
            }
        }
    }
}
