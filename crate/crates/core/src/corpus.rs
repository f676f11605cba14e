//! JSONL corpus ingestion.
//!
//! One object per line with a required string `text` and an optional string
//! `id`. Missing ids become `<file>:<line>` (1-based). Lines that fail to
//! parse are counted and skipped unless the reader is strict.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

#[derive(Deserialize)]
struct Record {
    #[serde(default)]
    id: Option<String>,
    text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: u64,
    pub documents: u64,
    pub malformed: u64,
    pub blank: u64,
    pub duplicate_ids: u64,
}

/// Check that every path can be opened, before any work starts.
pub fn ensure_readable<P: AsRef<Path>>(paths: &[P]) -> Result<()> {
    for p in paths {
        let p = p.as_ref();
        File::open(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

/// Streaming reader over one or more JSONL files, in order.
pub struct CorpusReader {
    paths: Vec<PathBuf>,
    next_path: usize,
    current: Option<(String, Lines<BufReader<File>>)>,
    line_no: u64,
    strict: bool,
    seen: HashSet<String>,
    stats: IngestStats,
    failed: bool,
}

impl CorpusReader {
    pub fn new<P: AsRef<Path>>(paths: &[P], strict: bool) -> Self {
        CorpusReader {
            paths: paths.iter().map(|p| p.as_ref().to_path_buf()).collect(),
            next_path: 0,
            current: None,
            line_no: 0,
            strict,
            seen: HashSet::new(),
            stats: IngestStats::default(),
            failed: false,
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    fn parse(&mut self, name: &str, line: &str) -> Result<Option<Document>> {
        if line.trim().is_empty() {
            self.stats.blank += 1;
            return Ok(None);
        }
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                self.stats.malformed += 1;
                if self.strict {
                    return Err(Error::input(name, format!("line {}: {e}", self.line_no)));
                }
                log::debug!("{name}:{}: skipping malformed line: {e}", self.line_no);
                return Ok(None);
            }
        };
        let id = record.id.unwrap_or_else(|| format!("{name}:{}", self.line_no));
        if !self.seen.insert(id.clone()) {
            self.stats.duplicate_ids += 1;
            if self.strict {
                return Err(Error::input(
                    name,
                    format!("line {}: duplicate id {id:?}", self.line_no),
                ));
            }
            log::warn!("{name}:{}: skipping duplicate id {id:?}", self.line_no);
            return Ok(None);
        }
        self.stats.documents += 1;
        Ok(Some(Document { id, text: record.text }))
    }
}

impl Iterator for CorpusReader {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            if self.current.is_none() {
                let path = self.paths.get(self.next_path)?.clone();
                self.next_path += 1;
                self.line_no = 0;
                let file = match File::open(&path) {
                    Ok(f) => f,
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(Error::io(path, e)));
                    }
                };
                self.current = Some((path.display().to_string(), BufReader::new(file).lines()));
            }
            let (name, lines) = self.current.as_mut().unwrap();
            let name = name.clone();
            match lines.next() {
                None => self.current = None,
                Some(Err(e)) => {
                    self.failed = true;
                    return Some(Err(Error::io(name, e)));
                }
                Some(Ok(line)) => {
                    self.line_no += 1;
                    self.stats.lines += 1;
                    match self.parse(&name, &line) {
                        Ok(Some(doc)) => return Some(Ok(doc)),
                        Ok(None) => continue,
                        Err(e) => {
                            self.failed = true;
                            return Some(Err(e));
                        }
                    }
                }
            }
        }
    }
}

/// Read every document of `paths` into memory.
pub fn read_all<P: AsRef<Path>>(paths: &[P], strict: bool) -> Result<(Vec<Document>, IngestStats)> {
    let mut reader = CorpusReader::new(paths, strict);
    let docs = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((docs, reader.stats()))
}
