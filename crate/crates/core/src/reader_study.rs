//! Blinded report-grading sessions.
//!
//! [`build_session`] shuffles reports from several author arms into
//! per-rater item lists whose ids carry no information about the author. The
//! unblinding key is kept apart from the session. Ratings go to an
//! append-only log; a correction is a new record flagged as such, and the
//! latest record for an item is the effective one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, seeded};
use crate::stats::{Criterion, LikertRating};
use crate::JsonlError;

#[derive(Debug, Error)]
pub enum ReaderStudyError {
    #[error("arms have unequal report counts: {0}")]
    UnequalArms(String),
    #[error("arms cover different image sets")]
    MismatchedImages,
    #[error("image {image_id} appears twice in arm {arm}")]
    DuplicateImage { arm: Arm, image_id: String },
    #[error("invalid session parameters: {0}")]
    BadParameters(String),
    #[error("item {0} is not part of this session")]
    UnknownItem(String),
    #[error("item {item_id} belongs to rater {expected}, not {got}")]
    WrongRater {
        item_id: String,
        expected: String,
        got: String,
    },
    #[error("{criterion} rating {score} is outside 1..=5")]
    OutOfRange { criterion: Criterion, score: u8 },
    #[error("item {item_id} is already rated ({prior}); submit a correction to replace it")]
    Duplicate { item_id: String, prior: String },
    #[error("item {0} is missing from the unblinding key")]
    MissingKey(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    ModelA,
    ModelB,
    Human,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ModelA => "model_a",
            Self::ModelB => "model_b",
            Self::Human => "human",
        }
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "model_a" => Ok(Self::ModelA),
            "model_b" => Ok(Self::ModelB),
            "human" => Ok(Self::Human),
            _ => Err(format!(
                "unknown arm '{s}' (expected model_a, model_b or human)"
            )),
        }
    }
}

/// A report to be graded, with its true author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceReport {
    pub image_id: String,
    pub author: Arm,
    pub report_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
}

/// What a rater sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedItem {
    pub item_id: String,
    pub rater_id: String,
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub report_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub item_id: String,
    pub author: Arm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub items: Vec<BlindedItem>,
    pub key: Vec<KeyEntry>,
}

impl Session {
    pub fn items_for<'a>(
        &'a self,
        rater_id: &'a str,
    ) -> impl Iterator<Item = &'a BlindedItem> + 'a {
        self.items.iter().filter(move |i| i.rater_id == rater_id)
    }

    pub fn raters(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.items
            .iter()
            .filter(|i| seen.insert(i.rater_id.clone()))
            .map(|i| i.rater_id.clone())
            .collect()
    }

    /// Writes one blinded file per rater (`session_<rater>.jsonl`) and the
    /// key (`key.jsonl`) into `dir`. Returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ReaderStudyError> {
        let mut paths = Vec::new();
        for r in self.raters() {
            let path = dir.join(format!("session_{r}.jsonl"));
            let items: Vec<&BlindedItem> = self.items_for(&r).collect();
            crate::write_jsonl(&path, &items)?;
            paths.push(path);
        }
        let key = dir.join("key.jsonl");
        crate::write_jsonl(&key, &self.key)?;
        paths.push(key);
        Ok(paths)
    }
}

/// Assigns each rater `per_rater_quota` reports: `quota / arms` images, each
/// shown once per arm. Raters get disjoint image sets. Item order within a
/// rater is shuffled, and item ids are random tokens.
pub fn build_session(
    reports: &[SourceReport],
    raters: &[String],
    per_rater_quota: usize,
    seed: u64,
) -> Result<Session, ReaderStudyError> {
    let bad = |m: String| ReaderStudyError::BadParameters(m);
    if raters.is_empty() {
        return Err(bad("no raters".into()));
    }
    if raters.iter().collect::<BTreeSet<_>>().len() != raters.len() {
        return Err(bad("duplicate rater id".into()));
    }
    let mut arms: BTreeMap<Arm, BTreeMap<&str, &SourceReport>> = BTreeMap::new();
    for r in reports {
        if arms
            .entry(r.author)
            .or_default()
            .insert(r.image_id.as_str(), r)
            .is_some()
        {
            return Err(ReaderStudyError::DuplicateImage {
                arm: r.author,
                image_id: r.image_id.clone(),
            });
        }
    }
    if arms.is_empty() {
        return Err(bad("no reports".into()));
    }
    let sizes: Vec<String> = arms
        .iter()
        .map(|(a, m)| format!("{a}={}", m.len()))
        .collect();
    let n_images = arms.values().next().map_or(0, BTreeMap::len);
    if arms.values().any(|m| m.len() != n_images) {
        return Err(ReaderStudyError::UnequalArms(sizes.join(", ")));
    }
    let images: Vec<&str> = arms
        .values()
        .next()
        .expect("non-empty")
        .keys()
        .copied()
        .collect();
    if arms
        .values()
        .any(|m| !m.keys().copied().eq(images.iter().copied()))
    {
        return Err(ReaderStudyError::MismatchedImages);
    }
    let n_arms = arms.len();
    if per_rater_quota == 0 || per_rater_quota % n_arms != 0 {
        return Err(bad(format!(
            "quota {per_rater_quota} is not a positive multiple of {n_arms} arms"
        )));
    }
    let per_rater_images = per_rater_quota / n_arms;
    if per_rater_images * raters.len() > n_images {
        return Err(bad(format!(
            "{} raters x {per_rater_images} images exceeds the {n_images} images available",
            raters.len()
        )));
    }

    let mut order = images;
    order.shuffle(&mut seeded(derive_seed(seed, "images")));
    let mut token_rng = seeded(derive_seed(seed, "item_ids"));
    let mut used = BTreeSet::new();
    let mut items = Vec::new();
    let mut key = Vec::new();
    for (ri, rater) in raters.iter().enumerate() {
        let mine = &order[ri * per_rater_images..(ri + 1) * per_rater_images];
        let mut picked: Vec<&SourceReport> = mine
            .iter()
            .flat_map(|img| arms.values().map(move |m| m[img]))
            .collect();
        picked.shuffle(&mut seeded(derive_seed(seed, &format!("rater:{rater}"))));
        for r in picked {
            let item_id = loop {
                let t = format!("{:016x}", token_rng.gen::<u64>());
                if used.insert(t.clone()) {
                    break t;
                }
            };
            key.push(KeyEntry {
                item_id: item_id.clone(),
                author: r.author,
            });
            items.push(BlindedItem {
                item_id,
                rater_id: rater.clone(),
                image_id: r.image_id.clone(),
                image_path: r.image_path.clone(),
                report_text: r.report_text.clone(),
            });
        }
    }
    key.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(Session { items, key })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rater_id: String,
    pub correctness: u8,
    pub completeness: u8,
    pub conciseness: u8,
    pub timestamp: DateTime<Utc>,
    /// Replaces the rater's earlier record for this item.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub correction: bool,
}

impl RatingRecord {
    pub fn scores(&self) -> [(Criterion, u8); 3] {
        [
            (Criterion::Correctness, self.correctness),
            (Criterion::Completeness, self.completeness),
            (Criterion::Conciseness, self.conciseness),
        ]
    }

    fn describe(&self) -> String {
        format!(
            "correctness={} completeness={} conciseness={} at {}",
            self.correctness,
            self.completeness,
            self.conciseness,
            self.timestamp.to_rfc3339()
        )
    }
}

pub trait Clock {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant.
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

/// Append-only ratings file bound to a set of session items.
pub struct RatingLog {
    path: PathBuf,
    items: HashMap<String, String>,
    records: Vec<RatingRecord>,
    effective: HashMap<String, usize>,
}

impl RatingLog {
    /// Opens (or prepares to create) the log at `path`, replaying any
    /// existing records. Records that no longer belong to the session are
    /// kept on disk but ignored.
    pub fn open(path: &Path, items: &[BlindedItem]) -> Result<Self, ReaderStudyError> {
        let mut log = Self {
            path: path.to_path_buf(),
            items: items
                .iter()
                .map(|i| (i.item_id.clone(), i.rater_id.clone()))
                .collect(),
            records: Vec::new(),
            effective: HashMap::new(),
        };
        if path.exists() {
            let existing: Vec<RatingRecord> = crate::read_jsonl(path)?;
            for r in existing {
                if log.items.contains_key(&r.item_id) {
                    log.effective.insert(r.item_id.clone(), log.records.len());
                    log.records.push(r);
                }
            }
        }
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Every record replayed or written, oldest first.
    pub fn history(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn effective(&self, item_id: &str) -> Option<&RatingRecord> {
        self.effective.get(item_id).map(|&i| &self.records[i])
    }

    /// Latest record per rated item, in session order of first rating.
    pub fn effective_records(&self) -> Vec<&RatingRecord> {
        let mut idx: Vec<usize> = self.effective.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.records[i]).collect()
    }

    pub fn rated_count(&self) -> usize {
        self.effective.len()
    }

    pub fn pending<'a>(&self, items: &'a [BlindedItem]) -> Vec<&'a BlindedItem> {
        items
            .iter()
            .filter(|i| !self.effective.contains_key(&i.item_id))
            .collect()
    }

    fn check(&self, r: &RatingRecord) -> Result<(), ReaderStudyError> {
        let owner = self
            .items
            .get(&r.item_id)
            .ok_or_else(|| ReaderStudyError::UnknownItem(r.item_id.clone()))?;
        if owner != &r.rater_id {
            return Err(ReaderStudyError::WrongRater {
                item_id: r.item_id.clone(),
                expected: owner.clone(),
                got: r.rater_id.clone(),
            });
        }
        for (criterion, score) in r.scores() {
            if !(1..=5).contains(&score) {
                return Err(ReaderStudyError::OutOfRange { criterion, score });
            }
        }
        if !r.correction {
            if let Some(prior) = self.effective(&r.item_id) {
                return Err(ReaderStudyError::Duplicate {
                    item_id: r.item_id.clone(),
                    prior: prior.describe(),
                });
            }
        }
        Ok(())
    }

    /// Validates and appends one record.
    pub fn record(&mut self, r: RatingRecord) -> Result<(), ReaderStudyError> {
        self.check(&r)?;
        let io_err = |source| ReaderStudyError::Io {
            path: self.path.clone(),
            source,
        };
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err)?;
        let mut line = serde_json::to_string(&r).map_err(JsonlError::from)?;
        line.push('\n');
        f.write_all(line.as_bytes()).map_err(io_err)?;
        f.flush().map_err(io_err)?;
        self.effective.insert(r.item_id.clone(), self.records.len());
        self.records.push(r);
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ImportReport {
    pub stored: usize,
    pub rejected: Vec<(usize, String)>,
}

/// Imports a JSONL file of ratings. Each bad line is rejected with its
/// 1-based line number; the others are stored.
pub fn import_ratings<R: BufRead>(
    log: &mut RatingLog,
    input: R,
) -> Result<ImportReport, ReaderStudyError> {
    let mut report = ImportReport::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|source| ReaderStudyError::Io {
            path: PathBuf::from("<ratings input>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<RatingRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| log.record(r).map_err(|e| e.to_string()));
        match outcome {
            Ok(()) => report.stored += 1,
            Err(e) => report.rejected.push((i + 1, e)),
        }
    }
    Ok(report)
}

fn prompt_score<R: BufRead, W: Write>(
    criterion: Criterion,
    input: &mut R,
    out: &mut W,
) -> std::io::Result<Option<u8>> {
    loop {
        write!(out, "  {criterion} (1-5, q to stop): ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        let t = line.trim();
        if t.eq_ignore_ascii_case("q") {
            return Ok(None);
        }
        match t.parse::<u8>() {
            Ok(s) if (1..=5).contains(&s) => return Ok(Some(s)),
            _ => writeln!(out, "  please enter a whole number from 1 to 5")?,
        }
    }
}

/// Prompts for every unrated item of `rater_id` in session order. Each
/// completed item is written before the next is shown, so a stopped session
/// resumes where it left off. Returns the number of items rated.
pub fn rate_interactive<R: BufRead, W: Write>(
    log: &mut RatingLog,
    items: &[BlindedItem],
    rater_id: &str,
    clock: &dyn Clock,
    mut input: R,
    mut out: W,
) -> Result<usize, ReaderStudyError> {
    let io_err = |source| ReaderStudyError::Io {
        path: PathBuf::from("<terminal>"),
        source,
    };
    let mine: Vec<BlindedItem> = items
        .iter()
        .filter(|i| i.rater_id == rater_id)
        .cloned()
        .collect();
    let total = mine.len();
    let pending: Vec<(usize, BlindedItem)> = mine
        .into_iter()
        .enumerate()
        .filter(|(_, i)| log.effective(&i.item_id).is_none())
        .collect();
    let mut done = 0;
    for (pos, item) in pending {
        writeln!(out, "\nItem {} of {total} [{}]", pos + 1, item.item_id).map_err(io_err)?;
        if let Some(p) = &item.image_path {
            writeln!(out, "Image: {p}").map_err(io_err)?;
        }
        writeln!(out, "Report:\n{}\n", item.report_text).map_err(io_err)?;
        let mut scores = [0u8; 3];
        for (slot, c) in scores.iter_mut().zip(Criterion::ALL) {
            match prompt_score(c, &mut input, &mut out).map_err(io_err)? {
                Some(s) => *slot = s,
                None => {
                    writeln!(out, "\nStopped; {done} item(s) saved this session.")
                        .map_err(io_err)?;
                    return Ok(done);
                }
            }
        }
        log.record(RatingRecord {
            item_id: item.item_id.clone(),
            rater_id: rater_id.to_string(),
            correctness: scores[0],
            completeness: scores[1],
            conciseness: scores[2],
            timestamp: clock.now(),
            correction: false,
        })?;
        done += 1;
    }
    writeln!(out, "\nAll {total} item(s) rated.").map_err(io_err)?;
    Ok(done)
}

/// Joins effective ratings with the unblinding key into per-criterion scores.
pub fn unblind(
    records: &[&RatingRecord],
    key: &[KeyEntry],
) -> Result<Vec<LikertRating>, ReaderStudyError> {
    let authors: HashMap<&str, Arm> = key.iter().map(|k| (k.item_id.as_str(), k.author)).collect();
    let mut out = Vec::new();
    for r in records {
        let author = authors
            .get(r.item_id.as_str())
            .ok_or_else(|| ReaderStudyError::MissingKey(r.item_id.clone()))?;
        for (criterion, score) in r.scores() {
            out.push(LikertRating {
                author: author.as_str().to_string(),
                rater_id: r.rater_id.clone(),
                item_id: r.item_id.clone(),
                criterion,
                score,
            });
        }
    }
    Ok(out)
}
