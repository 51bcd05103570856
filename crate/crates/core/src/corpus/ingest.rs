use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BiomarkerSchema, CorpusError, SpecialistReport, TabularReport};
use crate::{JsonlError, LineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportKind {
    Tabular,
    Specialist,
}

impl FromStr for ReportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tabular" => Ok(Self::Tabular),
            "specialist" => Ok(Self::Specialist),
            other => Err(format!("unknown report kind '{other}'")),
        }
    }
}

/// Valid records plus per-line rejects.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub rejects: Vec<LineError>,
}

impl<T> Default for Ingested<T> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestedReports {
    Tabular(Ingested<TabularReport>),
    Specialist(Ingested<SpecialistReport>),
}

impl IngestedReports {
    pub fn rejects(&self) -> &[LineError] {
        match self {
            Self::Tabular(i) => &i.rejects,
            Self::Specialist(i) => &i.rejects,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Tabular(i) => i.records.len(),
            Self::Specialist(i) => i.records.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_lines<T, R: BufRead>(
    reader: R,
    mut check: impl FnMut(&mut T) -> Result<(), String>,
) -> std::io::Result<Ingested<T>>
where
    T: for<'de> Deserialize<'de>,
{
    let mut out = Ingested::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        match serde_json::from_str::<T>(&line) {
            Ok(mut rec) => match check(&mut rec) {
                Ok(()) => out.records.push(rec),
                Err(message) => out.rejects.push(LineError {
                    line: lineno,
                    message,
                }),
            },
            Err(e) => out.rejects.push(LineError {
                line: lineno,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    Ok(out)
}

pub fn parse_tabular_jsonl<R: BufRead>(
    reader: R,
    schema: &BiomarkerSchema,
) -> std::io::Result<Ingested<TabularReport>> {
    parse_lines(reader, |r: &mut TabularReport| {
        r.validate(schema)?;
        r.schema_version = schema.version().to_string();
        Ok(())
    })
}

pub fn parse_specialist_jsonl<R: BufRead>(
    reader: R,
) -> std::io::Result<Ingested<SpecialistReport>> {
    parse_lines(reader, |r: &mut SpecialistReport| r.validate())
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| {
        CorpusError::Jsonl(JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| {
        CorpusError::Jsonl(JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn ingest_tabular(
    path: &Path,
    schema: &BiomarkerSchema,
) -> Result<Ingested<TabularReport>, CorpusError> {
    parse_tabular_jsonl(open(path)?, schema).map_err(io_err(path))
}

pub fn ingest_specialist(path: &Path) -> Result<Ingested<SpecialistReport>, CorpusError> {
    parse_specialist_jsonl(open(path)?).map_err(io_err(path))
}

pub fn ingest_reports(
    path: &Path,
    kind: ReportKind,
    schema: &BiomarkerSchema,
) -> Result<IngestedReports, CorpusError> {
    Ok(match kind {
        ReportKind::Tabular => IngestedReports::Tabular(ingest_tabular(path, schema)?),
        ReportKind::Specialist => IngestedReports::Specialist(ingest_specialist(path)?),
    })
}
