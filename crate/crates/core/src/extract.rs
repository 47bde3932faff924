//! Turning tables and externally extracted text relations into triples.
//!
//! Structured rows become `key:value - column:attribute - cell:value` triples
//! keyed by a guessed key column. Free-text relations are not extracted here;
//! they arrive as a tab-separated triple file produced by an external tool.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SourceKind {
    Structured,
    Unstructured,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub source_id: String,
    pub source_kind: SourceKind,
}

impl Triple {
    /// Builds a triple from trimmed fields, or `None` if any field is blank.
    pub fn new(
        subject: &str,
        predicate: &str,
        object: &str,
        source_id: &str,
        source_kind: SourceKind,
    ) -> Option<Self> {
        let (s, p, o) = (subject.trim(), predicate.trim(), object.trim());
        if s.is_empty() || p.is_empty() || o.is_empty() {
            return None;
        }
        Some(Triple {
            subject: s.to_string(),
            predicate: p.to_string(),
            object: o.to_string(),
            source_id: source_id.to_string(),
            source_kind,
        })
    }

    pub fn elements(&self) -> [&str; 3] {
        [&self.subject, &self.predicate, &self.object]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        let name = name.into();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::RaggedRow {
                    table: name,
                    row: i,
                    found: row.len(),
                    expected: columns.len(),
                });
            }
        }
        Ok(Table { name, columns, rows })
    }

    /// Reads a CSV file with a header row. The table is named after the file stem.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(file);
        let columns: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Table::new(name, columns, rows)
    }
}

/// Multiset of lowercase word tokens, in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BagOfWords {
    pub tokens: Vec<String>,
}

impl BagOfWords {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(s: &str) -> BagOfWords {
    let tokens = s
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|frag| !frag.is_empty())
        .map(str::to_string)
        .collect();
    BagOfWords { tokens }
}

/// Index of the column with the highest distinct/rows ratio; leftmost wins ties.
pub fn guess_key(table: &Table) -> Result<usize> {
    if table.columns.is_empty() || table.rows.is_empty() {
        return Err(Error::EmptyTable(table.name.clone()));
    }
    let mut best = 0;
    let mut best_distinct = 0;
    for col in 0..table.columns.len() {
        let distinct = table
            .rows
            .iter()
            .map(|row| row[col].as_str())
            .collect::<HashSet<_>>()
            .len();
        // Every column shares the same row count, so comparing counts compares ratios.
        if distinct > best_distinct {
            best = col;
            best_distinct = distinct;
        }
    }
    Ok(best)
}

pub fn relational_to_triples(table: &Table) -> Result<Vec<Triple>> {
    let key = guess_key(table)?;
    let mut out = Vec::new();
    for row in &table.rows {
        let key_cell = row[key].trim();
        if key_cell.is_empty() {
            continue;
        }
        for (col, cell) in row.iter().enumerate() {
            if col == key || cell.trim().is_empty() {
                continue;
            }
            let triple = Triple::new(
                &format!("{key_cell}:value"),
                &format!("{}:attribute", table.columns[col].trim()),
                &format!("{}:value", cell.trim()),
                &table.name,
                SourceKind::Structured,
            );
            out.extend(triple);
        }
    }
    Ok(out)
}

/// Result of reading a triple file.
#[derive(Debug, Clone, Default)]
pub struct IngestedTriples {
    pub triples: Vec<Triple>,
    /// Lines dropped because one of the three fields was blank.
    pub skipped: usize,
}

/// Reads `subject<TAB>predicate<TAB>object[<TAB>source_id]` lines.
///
/// The source id defaults to the file name. Blank lines are ignored.
pub fn ingest_triples(path: &Path) -> Result<IngestedTriples> {
    read_triple_file(path, SourceKind::Unstructured)
}

pub(crate) fn read_triple_file(path: &Path, kind: SourceKind) -> Result<IngestedTriples> {
    let default_source = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = IngestedTriples::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected at least 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let source = fields
            .get(3)
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .unwrap_or(&default_source);
        match Triple::new(fields[0], fields[1], fields[2], source, kind) {
            Some(t) => out.triples.push(t),
            None => out.skipped += 1,
        }
    }
    if out.skipped > 0 {
        log::warn!("{}: skipped {} lines with empty fields", path.display(), out.skipped);
    }
    Ok(out)
}

pub fn write_triples(path: &Path, triples: &[Triple]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triples {
        writeln!(w, "{}\t{}\t{}\t{}", t.subject, t.predicate, t.object, t.source_id)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Distinct triple elements in order of first appearance.
pub fn entities_of(triples: &[Triple]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for t in triples {
        for e in t.elements() {
            if seen.insert(e) {
                out.push(e.to_string());
            }
        }
    }
    out
}
