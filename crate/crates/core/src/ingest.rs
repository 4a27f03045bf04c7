//! Streaming readers for the three tab-separated input shapes: equivalence
//! mappings, label/synonym records, and per-identifier enrichments
//! (information content, taxa). Readers yield records one line at a time —
//! memory stays bounded by line length, never file size — and keep counts
//! that must reconcile: every data line is either emitted or rejected by
//! the prefix-pair filter.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::ioutil::{self, DataLines};
use crate::model::{Curie, ModelError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}:{line}: {source}")]
    BadCurie {
        path: String,
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("{path}:{line}: {message}")]
    MalformedRecord {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One cross-reference assertion: two identifiers claimed equivalent,
/// optionally with the asserting source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMapping {
    pub subject: Curie,
    pub object: Curie,
    pub source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    Label,
    Synonym,
}

/// A human-readable name attached to one identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub curie: Curie,
    pub kind: LabelKind,
    pub text: String,
}

/// Optional per-identifier extras: information content in [0,100] and
/// taxon identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentRecord {
    pub curie: Curie,
    pub information_content: Option<f64>,
    pub taxa: Vec<Curie>,
}

/// Unordered prefix pairs allowed through mapping ingestion. Mappings whose
/// prefix pair is absent are counted as filtered, not errors.
#[derive(Debug, Clone, Default)]
pub struct PrefixPairFilter {
    pairs: HashSet<(String, String)>,
}

impl PrefixPairFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str) {
        self.pairs.insert(Self::key(a, b));
    }

    pub fn allows(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&Self::key(a, b))
    }

    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Loads `prefixA<TAB>prefixB` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        Self::from_reader(ioutil::open_text(path)?, &path.display().to_string())
    }

    pub fn from_reader(reader: impl BufRead, origin: &str) -> Result<Self, IngestError> {
        let mut filter = PrefixPairFilter::new();
        for item in ioutil::data_lines(reader) {
            let (line_no, line) = item?;
            let (a, b) = line
                .split_once('\t')
                .ok_or_else(|| IngestError::MalformedRecord {
                    path: origin.to_string(),
                    line: line_no,
                    message: "expected `prefixA<TAB>prefixB`".to_string(),
                })?;
            filter.insert(a.trim(), b.trim());
        }
        Ok(filter)
    }
}

/// Counters kept by every reader. For any fully consumed input,
/// `emitted + filtered == data_lines`; a malformed line aborts the read
/// instead of being counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub data_lines: u64,
    pub emitted: u64,
    pub filtered: u64,
}

impl LoadStats {
    pub fn consistent(&self) -> bool {
        self.emitted + self.filtered == self.data_lines
    }

    pub fn absorb(&mut self, other: &LoadStats) {
        self.data_lines += other.data_lines;
        self.emitted += other.emitted;
        self.filtered += other.filtered;
    }
}

/// Streams `subject<TAB>object[<TAB>source]` mapping lines.
pub struct MappingReader<'f, R> {
    lines: DataLines<R>,
    origin: String,
    filter: Option<&'f PrefixPairFilter>,
    stats: LoadStats,
}

impl<'f, R: BufRead> MappingReader<'f, R> {
    pub fn new(reader: R, origin: &str, filter: Option<&'f PrefixPairFilter>) -> Self {
        MappingReader {
            lines: ioutil::data_lines(reader),
            origin: origin.to_string(),
            filter,
            stats: LoadStats::default(),
        }
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    fn parse(&self, line_no: usize, line: &str) -> Result<RawMapping, IngestError> {
        let mut fields = line.split('\t');
        let subject = fields.next().unwrap_or("");
        let object = fields.next().ok_or_else(|| IngestError::MalformedRecord {
            path: self.origin.clone(),
            line: line_no,
            message: "expected `subject<TAB>object[<TAB>source]`".to_string(),
        })?;
        let source = fields.next().map(str::to_string);
        if fields.next().is_some() {
            return Err(IngestError::MalformedRecord {
                path: self.origin.clone(),
                line: line_no,
                message: "too many fields".to_string(),
            });
        }
        let subject = Curie::parse(subject.trim()).map_err(|e| self.bad_curie(line_no, e))?;
        let object = Curie::parse(object.trim()).map_err(|e| self.bad_curie(line_no, e))?;
        if subject == object {
            return Err(IngestError::MalformedRecord {
                path: self.origin.clone(),
                line: line_no,
                message: format!("self-mapping {subject} asserts nothing"),
            });
        }
        Ok(RawMapping {
            subject,
            object,
            source,
        })
    }

    fn bad_curie(&self, line_no: usize, source: ModelError) -> IngestError {
        IngestError::BadCurie {
            path: self.origin.clone(),
            line: line_no,
            source,
        }
    }
}

impl<'f> MappingReader<'f, Box<dyn BufRead + Send>> {
    pub fn open(
        path: impl AsRef<Path>,
        filter: Option<&'f PrefixPairFilter>,
    ) -> Result<Self, IngestError> {
        let path = path.as_ref();
        Ok(MappingReader::new(
            ioutil::open_text(path)?,
            &path.display().to_string(),
            filter,
        ))
    }
}

impl<'f, R: BufRead> Iterator for MappingReader<'f, R> {
    type Item = Result<RawMapping, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line_no, line) = match self.lines.next()? {
                Ok(x) => x,
                Err(e) => return Some(Err(e.into())),
            };
            self.stats.data_lines += 1;
            let mapping = match self.parse(line_no, &line) {
                Ok(m) => m,
                Err(e) => return Some(Err(e)),
            };
            if let Some(filter) = self.filter {
                if !filter.allows(mapping.subject.prefix(), mapping.object.prefix()) {
                    self.stats.filtered += 1;
                    continue;
                }
            }
            self.stats.emitted += 1;
            return Some(Ok(mapping));
        }
    }
}

/// Streams `curie<TAB>label|synonym<TAB>text` lines.
pub struct LabelReader<R> {
    lines: DataLines<R>,
    origin: String,
    stats: LoadStats,
}

impl<R: BufRead> LabelReader<R> {
    pub fn new(reader: R, origin: &str) -> Self {
        LabelReader {
            lines: ioutil::data_lines(reader),
            origin: origin.to_string(),
            stats: LoadStats::default(),
        }
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    fn parse(&self, line_no: usize, line: &str) -> Result<LabelRecord, IngestError> {
        let malformed = |message: String| IngestError::MalformedRecord {
            path: self.origin.clone(),
            line: line_no,
            message,
        };
        let mut fields = line.split('\t');
        let curie = fields.next().unwrap_or("");
        let kind = fields
            .next()
            .ok_or_else(|| malformed("expected `curie<TAB>kind<TAB>text`".to_string()))?;
        let text = fields
            .next()
            .ok_or_else(|| malformed("expected `curie<TAB>kind<TAB>text`".to_string()))?
            .trim();
        if fields.next().is_some() {
            return Err(malformed("too many fields".to_string()));
        }
        let kind = match kind.trim() {
            k if k.eq_ignore_ascii_case("label") => LabelKind::Label,
            k if k.eq_ignore_ascii_case("synonym") => LabelKind::Synonym,
            other => return Err(malformed(format!("unknown name kind {other:?}"))),
        };
        if text.is_empty() {
            return Err(malformed("empty name text".to_string()));
        }
        let curie = Curie::parse(curie.trim()).map_err(|e| IngestError::BadCurie {
            path: self.origin.clone(),
            line: line_no,
            source: e,
        })?;
        Ok(LabelRecord {
            curie,
            kind,
            text: text.to_string(),
        })
    }
}

impl LabelReader<Box<dyn BufRead + Send>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        Ok(LabelReader::new(
            ioutil::open_text(path)?,
            &path.display().to_string(),
        ))
    }
}

impl<R: BufRead> Iterator for LabelReader<R> {
    type Item = Result<LabelRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = match self.lines.next()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e.into())),
        };
        self.stats.data_lines += 1;
        let record = self.parse(line_no, &line);
        if record.is_ok() {
            self.stats.emitted += 1;
        }
        Some(record)
    }
}

/// Streams `curie<TAB>ic<TAB>taxa` lines, where `ic` is a number in
/// [0,100] or `-`, and `taxa` is a comma-separated curie list or `-`.
/// At least one of the two must be present.
pub struct EnrichmentReader<R> {
    lines: DataLines<R>,
    origin: String,
    stats: LoadStats,
}

impl<R: BufRead> EnrichmentReader<R> {
    pub fn new(reader: R, origin: &str) -> Self {
        EnrichmentReader {
            lines: ioutil::data_lines(reader),
            origin: origin.to_string(),
            stats: LoadStats::default(),
        }
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    fn parse(&self, line_no: usize, line: &str) -> Result<EnrichmentRecord, IngestError> {
        let malformed = |message: String| IngestError::MalformedRecord {
            path: self.origin.clone(),
            line: line_no,
            message,
        };
        let mut fields = line.split('\t');
        let curie = fields.next().unwrap_or("");
        let ic = fields
            .next()
            .ok_or_else(|| malformed("expected `curie<TAB>ic<TAB>taxa`".to_string()))?
            .trim();
        let taxa = fields
            .next()
            .ok_or_else(|| malformed("expected `curie<TAB>ic<TAB>taxa`".to_string()))?
            .trim();
        if fields.next().is_some() {
            return Err(malformed("too many fields".to_string()));
        }
        let information_content = match ic {
            "-" => None,
            text => {
                let value: f64 = text
                    .parse()
                    .map_err(|_| malformed(format!("information content {text:?} is not a number")))?;
                if !(0.0..=100.0).contains(&value) {
                    return Err(malformed(format!(
                        "information content {value} outside [0,100]"
                    )));
                }
                Some(value)
            }
        };
        let taxa: Vec<Curie> = match taxa {
            "-" => Vec::new(),
            list => list
                .split(',')
                .map(|t| {
                    Curie::parse(t.trim()).map_err(|e| IngestError::BadCurie {
                        path: self.origin.clone(),
                        line: line_no,
                        source: e,
                    })
                })
                .collect::<Result<_, _>>()?,
        };
        if information_content.is_none() && taxa.is_empty() {
            return Err(malformed("record asserts nothing (both fields `-`)".to_string()));
        }
        let curie = Curie::parse(curie.trim()).map_err(|e| IngestError::BadCurie {
            path: self.origin.clone(),
            line: line_no,
            source: e,
        })?;
        Ok(EnrichmentRecord {
            curie,
            information_content,
            taxa,
        })
    }
}

impl EnrichmentReader<Box<dyn BufRead + Send>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let path = path.as_ref();
        Ok(EnrichmentReader::new(
            ioutil::open_text(path)?,
            &path.display().to_string(),
        ))
    }
}

impl<R: BufRead> Iterator for EnrichmentReader<R> {
    type Item = Result<EnrichmentRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = match self.lines.next()? {
            Ok(x) => x,
            Err(e) => return Some(Err(e.into())),
        };
        self.stats.data_lines += 1;
        let record = self.parse(line_no, &line);
        if record.is_ok() {
            self.stats.emitted += 1;
        }
        Some(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::{Cursor, Read};

    #[test]
    fn mappings_parse_with_and_without_source() {
        let input = "CHEBI:15377\tMESH:D014867\nCHEBI:15377\tPUBCHEM.COMPOUND:962\twikidata\n";
        let mut reader = MappingReader::new(input.as_bytes(), "test", None);
        let first = reader.next().unwrap().unwrap();
        assert_eq!(first.subject, Curie::parse("CHEBI:15377").unwrap());
        assert_eq!(first.source, None);
        let second = reader.next().unwrap().unwrap();
        assert_eq!(second.source.as_deref(), Some("wikidata"));
        assert!(reader.next().is_none());
        let stats = reader.stats();
        assert_eq!(stats.data_lines, 2);
        assert_eq!(stats.emitted, 2);
        assert!(stats.consistent());
    }

    #[test]
    fn filter_drops_unlisted_pairs_in_both_orders() {
        let mut filter = PrefixPairFilter::new();
        filter.insert("CHEBI", "MESH");
        let input = "\
CHEBI:1\tMESH:2\n\
MESH:2\tCHEBI:1\n\
CHEBI:1\tCAS:50-00-0\n";
        let mut reader = MappingReader::new(input.as_bytes(), "test", Some(&filter));
        let emitted: Vec<RawMapping> = (&mut reader).map(|r| r.unwrap()).collect();
        assert_eq!(emitted.len(), 2);
        let stats = reader.stats();
        assert_eq!(stats.data_lines, 3);
        assert_eq!(stats.emitted, 2);
        assert_eq!(stats.filtered, 1);
        assert!(stats.consistent());
    }

    #[test]
    fn malformed_curie_aborts_instead_of_counting() {
        let input = "CHEBI:1\tMESH:2\nnot-a-curie\tMESH:3\n";
        let mut reader = MappingReader::new(input.as_bytes(), "test", None);
        assert!(reader.next().unwrap().is_ok());
        assert!(matches!(
            reader.next().unwrap(),
            Err(IngestError::BadCurie { line: 2, .. })
        ));
    }

    #[test]
    fn self_mappings_are_malformed() {
        let mut reader = MappingReader::new("CHEBI:1\tCHEBI:1\n".as_bytes(), "test", None);
        assert!(matches!(
            reader.next().unwrap(),
            Err(IngestError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn labels_distinguish_kinds_and_reject_empties() {
        let input = "CHEBI:15365\tlabel\tacetylsalicylic acid\nCHEBI:15365\tsynonym\taspirin\n";
        let records: Vec<LabelRecord> = LabelReader::new(input.as_bytes(), "test")
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(records[0].kind, LabelKind::Label);
        assert_eq!(records[1].kind, LabelKind::Synonym);
        assert_eq!(records[1].text, "aspirin");

        let mut bad = LabelReader::new("CHEBI:1\tlabel\t \n".as_bytes(), "test");
        assert!(matches!(
            bad.next().unwrap(),
            Err(IngestError::MalformedRecord { .. })
        ));

        let mut bad = LabelReader::new("CHEBI:1\tnickname\tx\n".as_bytes(), "test");
        assert!(matches!(
            bad.next().unwrap(),
            Err(IngestError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn enrichments_validate_ic_and_taxa() {
        let input = "GO:0008150\t0\t-\nNCBIGene:100\t-\tNCBITaxon:9606\nCHEBI:15377\t42.5\tNCBITaxon:9606,NCBITaxon:10090\n";
        let records: Vec<EnrichmentRecord> = EnrichmentReader::new(input.as_bytes(), "test")
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(records[0].information_content, Some(0.0));
        assert!(records[0].taxa.is_empty());
        assert_eq!(records[1].information_content, None);
        assert_eq!(records[1].taxa.len(), 1);
        assert_eq!(records[2].taxa.len(), 2);

        for bad_line in [
            "CHEBI:1\t-1\t-\n",
            "CHEBI:1\t100.5\t-\n",
            "CHEBI:1\tabc\t-\n",
            "CHEBI:1\t-\t-\n",
        ] {
            let mut reader = EnrichmentReader::new(bad_line.as_bytes(), "test");
            assert!(
                matches!(
                    reader.next().unwrap(),
                    Err(IngestError::MalformedRecord { .. })
                ),
                "expected rejection for {bad_line:?}"
            );
        }
    }

    /// Read wrapper that records how many bytes have been pulled from the
    /// underlying source.
    struct CountingReader<R> {
        inner: R,
        read: std::rc::Rc<std::cell::Cell<usize>>,
    }

    impl<R: Read> Read for CountingReader<R> {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            let n = self.inner.read(buf)?;
            self.read.set(self.read.get() + n);
            Ok(n)
        }
    }

    #[test]
    fn reading_is_streaming_not_slurping() {
        // 1M mapping lines (~25 MB). Pulling the first record must not
        // consume more than one buffer's worth of input.
        let mut big = String::new();
        for i in 0..1_000_000 {
            big.push_str(&format!("A:{i}\tB:{i}\n"));
        }
        let counter = std::rc::Rc::new(std::cell::Cell::new(0));
        let counting = CountingReader {
            inner: Cursor::new(big),
            read: counter.clone(),
        };
        let mut reader =
            MappingReader::new(std::io::BufReader::new(counting), "test", None);
        let first = reader.next().unwrap().unwrap();
        assert_eq!(first.subject, Curie::parse("A:0").unwrap());
        assert!(
            counter.get() <= 64 * 1024,
            "consumed {} bytes for one record",
            counter.get()
        );
    }

    proptest! {
        #[test]
        fn counting_invariant_holds_under_any_filter(
            pairs in proptest::collection::vec(
                // Disjoint prefix alphabets keep subject != object.
                ("[A-B]", "[C-D]", "[1-9][0-9]{0,3}", "[1-9][0-9]{0,3}"),
                0..40,
            ),
            allowed in proptest::collection::vec(("[A-D]", "[A-D]"), 0..6),
        ) {
            let mut input = String::new();
            for (pa, pb, sa, sb) in &pairs {
                input.push_str(&format!("{pa}:{sa}\t{pb}:{sb}\n"));
            }
            let mut filter = PrefixPairFilter::new();
            for (a, b) in &allowed {
                filter.insert(a, b);
            }
            let mut reader = MappingReader::new(input.as_bytes(), "prop", Some(&filter));
            let emitted: Vec<RawMapping> = (&mut reader).map(|r| r.unwrap()).collect();
            let stats = reader.stats();
            prop_assert!(stats.consistent());
            prop_assert_eq!(stats.data_lines as usize, pairs.len());
            prop_assert_eq!(stats.emitted as usize, emitted.len());
            for m in &emitted {
                prop_assert!(filter.allows(m.subject.prefix(), m.object.prefix()));
            }
        }
    }
}
