//! Paragraph-level corpus model.
//!
//! A [`Corpus`] is an ordered list of text [`Unit`]s, each identified by a
//! document id and an ordinal reference inside that document. Units are kept
//! sorted by `(doc_id, reference)` and references inside a document always
//! run contiguously from zero, so a document can be reconstructed in its
//! original order from the unit list alone.
//!
//! The tabular interchange format (one unit per row) lives in the `table`
//! half of this module: [`export_table`] and [`import_table`] are exact
//! inverses for any corpus whose codes do not collide with the chosen
//! separator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Metadata column that marks whether a unit has been read by a human coder.
///
/// Values `no`, `false` and `0` mark a unit as uncoded; anything else (or a
/// missing value) counts as human-coded.
pub const CODED_FLAG_KEY: &str = "Coded";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed filename `{0}`: expected <id>_<YYYYMMDD>_<initials>.<ext>")]
    MalformedFilename(String),
    #[error("invalid date `{date}` in `{name}`")]
    InvalidDate { name: String, date: String },
    #[error("file `{}` is not valid UTF-8", .0.display())]
    Encoding(PathBuf),
    #[error("code `{code}` contains the separator {separator:?}")]
    SeparatorCollision { code: String, separator: char },
    #[error("table schema: {0}")]
    Schema(String),
    #[error("duplicate unit {0}")]
    DuplicateUnit(UnitKey),
    #[error("references of document `{0}` are not contiguous from 0")]
    NonContiguous(String),
    #[error("unit {0} has empty text")]
    EmptyText(UnitKey),
    #[error("invalid code name {0:?}")]
    InvalidCode(String),
    #[error("unit references unknown document `{0}`")]
    UnknownDocument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Identity of a unit: its document and its ordinal position in it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitKey {
    pub doc_id: String,
    pub reference: usize,
}

impl UnitKey {
    pub fn new(doc_id: impl Into<String>, reference: usize) -> Self {
        UnitKey {
            doc_id: doc_id.into(),
            reference,
        }
    }
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.doc_id, self.reference)
    }
}

impl std::str::FromStr for UnitKey {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        let (doc, reference) = s
            .rsplit_once('#')
            .ok_or_else(|| CorpusError::NotFound(format!("unit key `{s}`")))?;
        let reference = reference
            .parse()
            .map_err(|_| CorpusError::NotFound(format!("unit key `{s}`")))?;
        Ok(UnitKey::new(doc, reference))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Interview,
    Fieldnote,
    Other,
}

impl SourceKind {
    fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "interview" | "int" => Some(SourceKind::Interview),
            "fieldnote" | "fieldnotes" | "fn" => Some(SourceKind::Fieldnote),
            _ => None,
        }
    }
}

/// Per-document metadata recovered from the `<id>_<YYYYMMDD>_<initials>` name.
///
/// Documents imported from a table whose ids do not follow the naming
/// convention keep the raw id as participant and leave date and collector
/// empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub participant_id: String,
    pub collection_date: Option<NaiveDate>,
    pub collector: Option<String>,
    pub source_kind: SourceKind,
}

impl DocumentMeta {
    /// Metadata for a document id, falling back to the bare id when it does
    /// not follow the naming convention.
    pub fn from_doc_id(doc_id: &str) -> Self {
        parse_stem(doc_id, doc_id).unwrap_or_else(|_| DocumentMeta {
            participant_id: doc_id.to_string(),
            collection_date: None,
            collector: None,
            source_kind: SourceKind::Other,
        })
    }
}

/// Parses `4020_20110408_DD.txt` into participant, date and collector.
///
/// An optional fourth component naming the source kind (`interview`,
/// `fieldnote`) is recognised; other trailing components are ignored.
pub fn parse_filename(name: &str) -> Result<DocumentMeta> {
    let stem = match name.rsplit_once('.') {
        Some((stem, _ext)) if !stem.is_empty() => stem,
        _ => name,
    };
    parse_stem(stem, name)
}

fn parse_stem(stem: &str, name: &str) -> Result<DocumentMeta> {
    let parts: Vec<&str> = stem.split('_').collect();
    if parts.len() < 3 || parts[..3].iter().any(|p| p.is_empty()) {
        return Err(CorpusError::MalformedFilename(name.to_string()));
    }
    let date_str = parts[1];
    let date = if date_str.len() == 8 && date_str.bytes().all(|b| b.is_ascii_digit()) {
        NaiveDate::parse_from_str(date_str, "%Y%m%d").ok()
    } else {
        None
    };
    let date = date.ok_or_else(|| CorpusError::InvalidDate {
        name: name.to_string(),
        date: date_str.to_string(),
    })?;
    let source_kind = parts
        .get(3)
        .and_then(|s| SourceKind::parse(s))
        .unwrap_or(SourceKind::Other);
    Ok(DocumentMeta {
        participant_id: parts[0].to_string(),
        collection_date: Some(date),
        collector: Some(parts[2].to_string()),
        source_kind,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub doc_id: String,
    pub reference: usize,
    pub speaker: Option<String>,
    pub section: Option<String>,
    pub text: String,
    pub codes: BTreeSet<String>,
    pub extra_metadata: BTreeMap<String, String>,
}

impl Unit {
    pub fn new(doc_id: impl Into<String>, reference: usize, text: impl Into<String>) -> Self {
        Unit {
            doc_id: doc_id.into(),
            reference,
            speaker: None,
            section: None,
            text: text.into(),
            codes: BTreeSet::new(),
            extra_metadata: BTreeMap::new(),
        }
    }

    pub fn key(&self) -> UnitKey {
        UnitKey::new(self.doc_id.clone(), self.reference)
    }

    pub fn with_codes<I, S>(mut self, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.codes = codes.into_iter().map(Into::into).collect();
        self
    }

    /// Whether a human coder has read this unit.
    pub fn is_human_coded(&self) -> bool {
        !matches!(
            self.extra_metadata
                .get(CODED_FLAG_KEY)
                .map(|v| v.trim().to_ascii_lowercase())
                .as_deref(),
            Some("no" | "false" | "0")
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeOrigin {
    Human,
    Machine,
    Review,
}

/// Canonical corpus. Construct through [`Corpus::new`] so invariants hold.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    units: Vec<Unit>,
    documents: BTreeMap<String, DocumentMeta>,
    codebook: BTreeSet<String>,
    // Only non-human assignments are recorded; absence means human origin.
    origins: BTreeMap<(UnitKey, String), CodeOrigin>,
    negatives: BTreeSet<(UnitKey, String)>,
}

impl Corpus {
    /// Builds a corpus, sorting units by `(doc_id, reference)` and checking
    /// uniqueness, contiguity, non-empty text and document membership. Codes
    /// used by units are added to `codebook`.
    pub fn new(
        documents: BTreeMap<String, DocumentMeta>,
        mut units: Vec<Unit>,
        codebook: BTreeSet<String>,
    ) -> Result<Self> {
        units.sort_by(|a, b| {
            (a.doc_id.as_str(), a.reference).cmp(&(b.doc_id.as_str(), b.reference))
        });
        let mut codebook = codebook;
        let mut expected: Option<(&str, usize)> = None;
        for unit in &units {
            if !documents.contains_key(&unit.doc_id) {
                return Err(CorpusError::UnknownDocument(unit.doc_id.clone()));
            }
            if unit.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(unit.key()));
            }
            let next = match expected {
                Some((doc, next)) if doc == unit.doc_id => next,
                _ => 0,
            };
            if unit.reference < next {
                return Err(CorpusError::DuplicateUnit(unit.key()));
            }
            if unit.reference != next {
                return Err(CorpusError::NonContiguous(unit.doc_id.clone()));
            }
            expected = Some((unit.doc_id.as_str(), next + 1));
            for code in &unit.codes {
                if code.is_empty() || code.trim() != code {
                    return Err(CorpusError::InvalidCode(code.clone()));
                }
                codebook.insert(code.clone());
            }
        }
        Ok(Corpus {
            units,
            documents,
            codebook,
            origins: BTreeMap::new(),
            negatives: BTreeSet::new(),
        })
    }

    pub fn empty() -> Self {
        Corpus::default()
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn documents(&self) -> &BTreeMap<String, DocumentMeta> {
        &self.documents
    }

    pub fn codebook(&self) -> &BTreeSet<String> {
        &self.codebook
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn position(&self, key: &UnitKey) -> Option<usize> {
        self.units
            .binary_search_by(|u| {
                (u.doc_id.as_str(), u.reference).cmp(&(key.doc_id.as_str(), key.reference))
            })
            .ok()
    }

    pub fn unit(&self, key: &UnitKey) -> Option<&Unit> {
        self.position(key).map(|i| &self.units[i])
    }

    /// Units of one document in reference order.
    pub fn document_units(&self, doc_id: &str) -> &[Unit] {
        let start = self.units.partition_point(|u| u.doc_id.as_str() < doc_id);
        let end = self.units.partition_point(|u| u.doc_id.as_str() <= doc_id);
        &self.units[start..end]
    }

    /// Joins a document's units with blank lines, in reference order.
    pub fn reconstruct_document(&self, doc_id: &str) -> Result<String> {
        if !self.documents.contains_key(doc_id) {
            return Err(CorpusError::NotFound(format!("document `{doc_id}`")));
        }
        let texts: Vec<&str> = self
            .document_units(doc_id)
            .iter()
            .map(|u| u.text.as_str())
            .collect();
        Ok(texts.join("\n\n"))
    }

    /// Units within `radius` references of the given unit, clipped to the
    /// document.
    pub fn context_window(&self, key: &UnitKey, radius: usize) -> Result<&[Unit]> {
        if self.position(key).is_none() {
            return Err(CorpusError::NotFound(format!("unit {key}")));
        }
        let doc = self.document_units(&key.doc_id);
        let lo = key.reference.saturating_sub(radius);
        let hi = (key.reference + radius + 1).min(doc.len());
        Ok(&doc[lo..hi])
    }

    /// Origin of a code on a unit, or `None` when the unit lacks the code.
    pub fn code_origin(&self, key: &UnitKey, code: &str) -> Option<CodeOrigin> {
        let unit = self.unit(key)?;
        if !unit.codes.contains(code) {
            return None;
        }
        Some(
            self.origins
                .get(&(key.clone(), code.to_string()))
                .copied()
                .unwrap_or(CodeOrigin::Human),
        )
    }

    /// Adds a code to a unit. An existing assignment keeps its origin, so
    /// human codes can never be relabelled as machine output.
    pub fn assign_code(&mut self, key: &UnitKey, code: &str, origin: CodeOrigin) -> Result<bool> {
        let idx = self
            .position(key)
            .ok_or_else(|| CorpusError::NotFound(format!("unit {key}")))?;
        if code.is_empty() || code.trim() != code {
            return Err(CorpusError::InvalidCode(code.to_string()));
        }
        if !self.units[idx].codes.insert(code.to_string()) {
            let k = (key.clone(), code.to_string());
            // a reviewed machine code is promoted; nothing else changes origin
            if origin == CodeOrigin::Review && self.origins.get(&k) == Some(&CodeOrigin::Machine) {
                self.origins.insert(k, CodeOrigin::Review);
                return Ok(true);
            }
            return Ok(false);
        }
        self.codebook.insert(code.to_string());
        if origin != CodeOrigin::Human {
            self.origins.insert((key.clone(), code.to_string()), origin);
        }
        self.negatives.remove(&(key.clone(), code.to_string()));
        Ok(true)
    }

    /// Removes a machine or review assignment. Human codes are kept and
    /// `Ok(false)` is returned.
    pub fn remove_code(&mut self, key: &UnitKey, code: &str) -> Result<bool> {
        let idx = self
            .position(key)
            .ok_or_else(|| CorpusError::NotFound(format!("unit {key}")))?;
        let k = (key.clone(), code.to_string());
        match self.origins.get(&k) {
            Some(CodeOrigin::Machine | CodeOrigin::Review) => {
                self.origins.remove(&k);
                self.units[idx].codes.remove(code);
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Records that a reviewer rejected `code` for this unit.
    pub fn mark_negative(&mut self, key: &UnitKey, code: &str) -> Result<()> {
        if self.position(key).is_none() {
            return Err(CorpusError::NotFound(format!("unit {key}")));
        }
        self.negatives.insert((key.clone(), code.to_string()));
        Ok(())
    }

    pub fn is_explicit_negative(&self, key: &UnitKey, code: &str) -> bool {
        self.negatives.contains(&(key.clone(), code.to_string()))
    }

    pub fn explicit_negatives(&self) -> impl Iterator<Item = &(UnitKey, String)> {
        self.negatives.iter()
    }

    /// Number of assignments of `code` per origin.
    pub fn origin_counts(&self, code: &str) -> BTreeMap<CodeOrigin, usize> {
        let mut counts = BTreeMap::new();
        for unit in &self.units {
            if let Some(origin) = self.code_origin(&unit.key(), code) {
                *counts.entry(origin).or_insert(0) += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    #[default]
    Paragraph,
    Document,
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

/// Splits text into paragraphs separated by one or more blank lines.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let text = normalize_newlines(text);
    let mut paragraphs = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.split('\n') {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n").trim_end().to_string());
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n").trim_end().to_string());
    }
    paragraphs
}

/// Reads every `.txt` file in `dir` (sorted by name) as one document.
pub fn ingest_directory(dir: &Path, granularity: Granularity) -> Result<Corpus> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|e| e.eq_ignore_ascii_case("txt"))
                    .unwrap_or(false)
        })
        .collect();
    entries.sort();

    let mut documents = BTreeMap::new();
    let mut units = Vec::new();
    for path in entries {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| CorpusError::Encoding(path.clone()))?
            .to_string();
        let meta = parse_filename(&name)?;
        let doc_id = name
            .rsplit_once('.')
            .map(|(stem, _)| stem.to_string())
            .unwrap_or_else(|| name.clone());
        let mut bytes = Vec::new();
        fs::File::open(&path)?.read_to_end(&mut bytes)?;
        let text = String::from_utf8(bytes).map_err(|_| CorpusError::Encoding(path.clone()))?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        let pieces = match granularity {
            Granularity::Paragraph => split_paragraphs(text),
            Granularity::Document => {
                let whole = normalize_newlines(text).trim_end().to_string();
                if whole.trim().is_empty() {
                    Vec::new()
                } else {
                    vec![whole]
                }
            }
        };
        for (reference, piece) in pieces.into_iter().enumerate() {
            units.push(Unit::new(doc_id.clone(), reference, piece));
        }
        documents.insert(doc_id, meta);
    }
    Corpus::new(documents, units, BTreeSet::new())
}

/// How several codes share one cell of the Codes column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeSeparator {
    #[serde(rename = "newline")]
    #[default]
    NewlineInCell,
    Comma,
    Colon,
}

impl CodeSeparator {
    pub fn as_char(self) -> char {
        match self {
            CodeSeparator::NewlineInCell => '\n',
            CodeSeparator::Comma => ',',
            CodeSeparator::Colon => ':',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodeSeparator::NewlineInCell => "newline",
            CodeSeparator::Comma => "comma",
            CodeSeparator::Colon => "colon",
        }
    }

    pub fn all() -> [CodeSeparator; 3] {
        [
            CodeSeparator::NewlineInCell,
            CodeSeparator::Comma,
            CodeSeparator::Colon,
        ]
    }
}

impl std::str::FromStr for CodeSeparator {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newline" | "\n" => Ok(CodeSeparator::NewlineInCell),
            "comma" | "," => Ok(CodeSeparator::Comma),
            "colon" | ":" => Ok(CodeSeparator::Colon),
            _ => Err(CorpusError::Schema(format!("unknown code separator `{s}`"))),
        }
    }
}

/// Header names of the unit table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnNames {
    pub document: String,
    pub reference: String,
    pub speaker: String,
    pub section: String,
    pub codes: String,
    pub text: String,
}

impl Default for ColumnNames {
    fn default() -> Self {
        ColumnNames {
            document: "Document".into(),
            reference: "Reference".into(),
            speaker: "Speaker".into(),
            section: "Section".into(),
            codes: "Codes".into(),
            text: "Quotation Content".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    pub separator: CodeSeparator,
    pub columns: ColumnNames,
}

impl TableConfig {
    pub fn with_separator(separator: CodeSeparator) -> Self {
        TableConfig {
            separator,
            columns: ColumnNames::default(),
        }
    }
}

/// In-memory rows of the unit table, independent of the file dialect.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Csv,
    Tsv,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Csv => b',',
            Delimiter::Tsv => b'\t',
        }
    }

    /// TSV for `.tsv`/`.tab` paths, CSV otherwise.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => {
                Delimiter::Tsv
            }
            _ => Delimiter::Csv,
        }
    }
}

impl Table {
    pub fn write<W: Write>(&self, writer: W, delimiter: Delimiter) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter.byte())
            .terminator(csv::Terminator::CRLF)
            .from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R, delimiter: Delimiter) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .delimiter(delimiter.byte())
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            rows.push(record?.iter().map(str::to_string).collect());
        }
        Ok(Table { headers, rows })
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file), Delimiter::for_path(path))
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Table::read(std::io::BufReader::new(file), Delimiter::for_path(path))
    }
}

/// Serialises a corpus as one row per unit, ordered by `(doc_id, reference)`.
pub fn export_table(corpus: &Corpus, config: &TableConfig) -> Result<Table> {
    let sep = config.separator.as_char();
    if let Some(code) = corpus.codebook.iter().find(|c| c.contains(sep)) {
        return Err(CorpusError::SeparatorCollision {
            code: code.clone(),
            separator: sep,
        });
    }
    let cols = &config.columns;
    let extra_keys: BTreeSet<&String> = corpus
        .units
        .iter()
        .flat_map(|u| u.extra_metadata.keys())
        .collect();
    let mut headers = vec![
        cols.document.clone(),
        cols.reference.clone(),
        cols.speaker.clone(),
        cols.section.clone(),
        cols.codes.clone(),
        cols.text.clone(),
    ];
    headers.extend(extra_keys.iter().map(|k| (*k).clone()));

    let joiner = sep.to_string();
    let rows = corpus
        .units
        .iter()
        .map(|u| {
            let mut row = vec![
                u.doc_id.clone(),
                u.reference.to_string(),
                u.speaker.clone().unwrap_or_default(),
                u.section.clone().unwrap_or_default(),
                u.codes.iter().cloned().collect::<Vec<_>>().join(&joiner),
                u.text.clone(),
            ];
            row.extend(
                extra_keys
                    .iter()
                    .map(|k| u.extra_metadata.get(*k).cloned().unwrap_or_default()),
            );
            row
        })
        .collect();
    Ok(Table { headers, rows })
}

fn parse_codes(cell: &str, separator: CodeSeparator) -> BTreeSet<String> {
    cell.split(separator.as_char())
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::to_string)
        .collect()
}

/// Inverse of [`export_table`]. Unrecognised columns become extra metadata.
pub fn import_table(table: &Table, config: &TableConfig) -> Result<Corpus> {
    let cols = &config.columns;
    let find = |name: &str| table.headers.iter().position(|h| h == name);
    let required = |name: &str| {
        find(name).ok_or_else(|| CorpusError::Schema(format!("missing required column `{name}`")))
    };
    let doc_col = required(&cols.document)?;
    let ref_col = required(&cols.reference)?;
    let text_col = required(&cols.text)?;
    let speaker_col = find(&cols.speaker);
    let section_col = find(&cols.section);
    let codes_col = find(&cols.codes);
    let known: BTreeSet<usize> = [
        Some(doc_col),
        Some(ref_col),
        Some(text_col),
        speaker_col,
        section_col,
        codes_col,
    ]
    .into_iter()
    .flatten()
    .collect();

    let optional = |row: &[String], col: Option<usize>| {
        col.and_then(|c| row.get(c))
            .filter(|v| !v.is_empty())
            .cloned()
    };

    let mut documents = BTreeMap::new();
    let mut units = Vec::with_capacity(table.rows.len());
    let mut seen = BTreeSet::new();
    for (line, row) in table.rows.iter().enumerate() {
        if row.len() != table.headers.len() {
            return Err(CorpusError::Schema(format!(
                "row {} has {} cells, expected {}",
                line + 1,
                row.len(),
                table.headers.len()
            )));
        }
        let doc_id = row[doc_col].clone();
        if doc_id.is_empty() {
            return Err(CorpusError::Schema(format!("row {} has no document id", line + 1)));
        }
        let reference: usize = row[ref_col].trim().parse().map_err(|_| {
            CorpusError::Schema(format!(
                "row {}: reference `{}` is not a non-negative integer",
                line + 1,
                row[ref_col]
            ))
        })?;
        let key = UnitKey::new(doc_id.clone(), reference);
        if !seen.insert(key.clone()) {
            return Err(CorpusError::DuplicateUnit(key));
        }
        documents
            .entry(doc_id.clone())
            .or_insert_with(|| DocumentMeta::from_doc_id(&doc_id));
        let extra_metadata = table
            .headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !known.contains(i))
            .filter(|(i, _)| !row[*i].is_empty())
            .map(|(i, h)| (h.clone(), row[i].clone()))
            .collect();
        units.push(Unit {
            doc_id,
            reference,
            speaker: optional(row, speaker_col),
            section: optional(row, section_col),
            text: row[text_col].clone(),
            codes: codes_col
                .map(|c| parse_codes(&row[c], config.separator))
                .unwrap_or_default(),
            extra_metadata,
        });
    }
    Corpus::new(documents, units, BTreeSet::new())
}

/// Convenience: read a table file and import it.
pub fn load_corpus(path: &Path, config: &TableConfig) -> Result<Corpus> {
    import_table(&Table::read_path(path)?, config)
}

/// Convenience: export a corpus and write it to a file.
pub fn save_corpus(corpus: &Corpus, path: &Path, config: &TableConfig) -> Result<()> {
    export_table(corpus, config)?.write_path(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str) -> (String, DocumentMeta) {
        (id.to_string(), DocumentMeta::from_doc_id(id))
    }

    fn three_unit_corpus() -> Corpus {
        let docs = BTreeMap::from([doc("4020_20110408_DD")]);
        let units = vec![
            Unit::new("4020_20110408_DD", 0, "first"),
            Unit::new("4020_20110408_DD", 1, "second").with_codes(["Background"]),
            Unit::new("4020_20110408_DD", 2, "third").with_codes(["B", "A"]),
        ];
        Corpus::new(docs, units, BTreeSet::new()).unwrap()
    }

    #[test]
    fn filenames_from_figure() {
        let m = parse_filename("4020_20110408_DD.txt").unwrap();
        assert_eq!(m.participant_id, "4020");
        assert_eq!(m.collection_date, NaiveDate::from_ymd_opt(2011, 4, 8));
        assert_eq!(m.collector.as_deref(), Some("DD"));
        let m = parse_filename("4023_20110513_DD.txt").unwrap();
        assert_eq!(m.participant_id, "4023");
        assert_eq!(m.collection_date, NaiveDate::from_ymd_opt(2011, 5, 13));
        assert_eq!(m.source_kind, SourceKind::Other);
        let m = parse_filename("4023_20110513_DD_fieldnote.txt").unwrap();
        assert_eq!(m.source_kind, SourceKind::Fieldnote);
    }

    #[test]
    fn malformed_filenames() {
        assert!(matches!(
            parse_filename("notes.txt"),
            Err(CorpusError::MalformedFilename(_))
        ));
        assert!(matches!(
            parse_filename("4020_DD.txt"),
            Err(CorpusError::MalformedFilename(_))
        ));
        assert!(matches!(
            parse_filename("4020_20111332_DD.txt"),
            Err(CorpusError::InvalidDate { .. })
        ));
        assert!(matches!(
            parse_filename("4020_2011048_DD.txt"),
            Err(CorpusError::InvalidDate { .. })
        ));
    }

    #[test]
    fn paragraph_splitting_handles_crlf_and_runs() {
        let p = split_paragraphs("one\r\nstill one\r\n\r\n\r\n  two  \n \nthree\n\n");
        assert_eq!(p, vec!["one\nstill one", "  two", "three"]);
        assert!(split_paragraphs("").is_empty());
        assert!(split_paragraphs("\n\n  \n").is_empty());
    }

    #[test]
    fn codes_cell_contents() {
        let c = three_unit_corpus();
        let t = export_table(&c, &TableConfig::default()).unwrap();
        assert_eq!(
            t.headers,
            ["Document", "Reference", "Speaker", "Section", "Codes", "Quotation Content"]
        );
        assert_eq!(t.rows[0][4], "");
        assert_eq!(t.rows[1][4], "Background");
        assert_eq!(t.rows[2][4], "A\nB");
        let t = export_table(&c, &TableConfig::with_separator(CodeSeparator::Colon)).unwrap();
        assert_eq!(t.rows[2][4], "A:B");
    }

    #[test]
    fn separator_collision_is_reported() {
        let docs = BTreeMap::from([doc("d")]);
        let units = vec![Unit::new("d", 0, "x").with_codes(["a,b"])];
        let c = Corpus::new(docs, units, BTreeSet::new()).unwrap();
        match export_table(&c, &TableConfig::with_separator(CodeSeparator::Comma)) {
            Err(CorpusError::SeparatorCollision { code, .. }) => assert_eq!(code, "a,b"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(export_table(&c, &TableConfig::with_separator(CodeSeparator::Colon)).is_ok());
    }

    #[test]
    fn import_schema_errors() {
        let table = Table {
            headers: vec!["Document".into(), "Quotation Content".into()],
            rows: vec![],
        };
        assert!(matches!(
            import_table(&table, &TableConfig::default()),
            Err(CorpusError::Schema(_))
        ));
        let table = Table {
            headers: vec!["Document".into(), "Reference".into(), "Quotation Content".into()],
            rows: vec![],
        };
        assert!(import_table(&table, &TableConfig::default()).unwrap().is_empty());
        let table = Table {
            headers: table.headers.clone(),
            rows: vec![
                vec!["d".into(), "0".into(), "a".into()],
                vec!["d".into(), "0".into(), "b".into()],
            ],
        };
        assert!(matches!(
            import_table(&table, &TableConfig::default()),
            Err(CorpusError::DuplicateUnit(_))
        ));
    }

    #[test]
    fn import_rejects_reference_gaps() {
        let table = Table {
            headers: vec!["Document".into(), "Reference".into(), "Quotation Content".into()],
            rows: vec![
                vec!["d".into(), "0".into(), "a".into()],
                vec!["d".into(), "2".into(), "b".into()],
            ],
        };
        assert!(matches!(
            import_table(&table, &TableConfig::default()),
            Err(CorpusError::NonContiguous(_))
        ));
    }

    #[test]
    fn unknown_columns_become_metadata() {
        let table = Table {
            headers: vec![
                "Quotation Content".into(),
                "Document".into(),
                "Reference".into(),
                "Location".into(),
            ],
            rows: vec![vec!["hi".into(), "d".into(), "0".into(), "clinic".into()]],
        };
        let c = import_table(&table, &TableConfig::default()).unwrap();
        assert_eq!(c.units()[0].extra_metadata["Location"], "clinic");
    }

    #[test]
    fn reconstruct_and_context() {
        let c = three_unit_corpus();
        assert_eq!(
            c.reconstruct_document("4020_20110408_DD").unwrap(),
            "first\n\nsecond\n\nthird"
        );
        assert!(matches!(
            c.reconstruct_document("nope"),
            Err(CorpusError::NotFound(_))
        ));
        let key = |r| UnitKey::new("4020_20110408_DD", r);
        assert_eq!(c.context_window(&key(1), 1).unwrap().len(), 3);
        let w = c.context_window(&key(0), 2).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].reference, 0);
        let w = c.context_window(&key(2), 0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].text, "third");
        assert!(c.context_window(&key(3), 1).is_err());
    }

    #[test]
    fn human_codes_keep_their_origin() {
        let mut c = three_unit_corpus();
        let key = UnitKey::new("4020_20110408_DD", 1);
        assert!(!c.assign_code(&key, "Background", CodeOrigin::Machine).unwrap());
        assert_eq!(c.code_origin(&key, "Background"), Some(CodeOrigin::Human));
        assert!(c.assign_code(&key, "Pain", CodeOrigin::Review).unwrap());
        assert_eq!(c.code_origin(&key, "Pain"), Some(CodeOrigin::Review));
        assert!(c.codebook().contains("Pain"));
    }

    #[test]
    fn coded_flag() {
        let mut u = Unit::new("d", 0, "x");
        assert!(u.is_human_coded());
        u.extra_metadata.insert(CODED_FLAG_KEY.into(), "No".into());
        assert!(!u.is_human_coded());
    }

    #[test]
    fn unit_key_parses_back() {
        let k: UnitKey = "4020_20110408_DD#12".parse().unwrap();
        assert_eq!(k, UnitKey::new("4020_20110408_DD", 12));
        assert_eq!(k.to_string(), "4020_20110408_DD#12");
    }
}
