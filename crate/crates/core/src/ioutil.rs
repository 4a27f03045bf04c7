//! Line-oriented input helpers shared by every loader: transparent gzip
//! handling (by file name), and comment/blank-line skipping with stable
//! line numbers for error reporting.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use flate2::read::MultiGzDecoder;

/// Opens a text file for buffered reading, decompressing on the fly when
/// the file name ends in `.gz`.
pub fn open_text(path: impl AsRef<Path>) -> io::Result<Box<dyn BufRead + Send>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Iterator over the data lines of a reader: skips blank lines and `#`
/// comments, strips trailing `\r`, and reports 1-based line numbers that
/// count every physical line (so errors point at the real file location).
pub fn data_lines<R: BufRead>(reader: R) -> DataLines<R> {
    DataLines {
        lines: reader.lines(),
        line_no: 0,
    }
}

pub struct DataLines<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Iterator for DataLines<R> {
    type Item = io::Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            let line = line.strip_suffix('\r').unwrap_or(&line).to_string();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Some(Ok((self.line_no, line)));
        }
    }
}
