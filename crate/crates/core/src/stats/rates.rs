use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{check_aligned, StatsError};
use crate::eval_harness::{EvalCase, GenerationTranscript, Presence, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub tp: u64,
    pub fp: u64,
    pub fdr: f64,
}

/// FP / (FP + TP) among predictions of `positive`.
pub fn false_discovery_rate<L: PartialEq>(
    predictions: &[Option<L>],
    truths: &[L],
    positive: &L,
) -> Result<FdrResult, StatsError> {
    check_aligned(predictions, truths)?;
    let mut tp = 0u64;
    let mut fp = 0u64;
    for (p, g) in predictions.iter().zip(truths) {
        if p.as_ref() == Some(positive) {
            if g == positive {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        return Err(StatsError::NoPredictedPositives);
    }
    Ok(FdrResult {
        tp,
        fp,
        fdr: fp as f64 / (tp + fp) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeSensitivity {
    pub grade: String,
    pub tp: u64,
    pub fn_: u64,
    pub sensitivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub biomarker: String,
    pub rows: Vec<GradeSensitivity>,
    pub notes: Vec<String>,
}

/// Detection sensitivity of `biomarker` within each severity grade, over
/// cases where it is present. `grades` fixes the reporting order; when empty,
/// the grades seen in `cases` are used in sorted order. A detection is a
/// transcript whose extracted label is `present`; Invalid counts as missed.
pub fn severity_sensitivity(
    transcripts: &[GenerationTranscript],
    cases: &[EvalCase],
    biomarker: &str,
    grades: &[&str],
) -> SensitivityTable {
    let task = TaskKind::Biomarker(biomarker.to_string());
    let by_image: HashMap<&str, &GenerationTranscript> = transcripts
        .iter()
        .filter(|t| t.task == task)
        .map(|t| (t.image_id.as_str(), t))
        .collect();
    let mut buckets: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let mut notes = Vec::new();
    let mut ungraded = 0;
    let mut unmatched = 0;
    for case in cases {
        let Some(truth) = case.biomarker_labels.get(biomarker) else {
            continue;
        };
        if truth.status != Presence::Present {
            continue;
        }
        let Some(grade) = truth.grade.as_deref() else {
            ungraded += 1;
            continue;
        };
        let Some(t) = by_image.get(case.image_id.as_str()) else {
            unmatched += 1;
            continue;
        };
        let e = buckets.entry(grade.to_string()).or_default();
        if t.extracted_label.as_deref() == Some(Presence::Present.as_str()) {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    if ungraded > 0 {
        notes.push(format!(
            "{ungraded} positive case(s) without a grade were excluded"
        ));
    }
    if unmatched > 0 {
        notes.push(format!("{unmatched} positive case(s) had no transcript"));
    }
    let order: Vec<String> = if grades.is_empty() {
        buckets.keys().cloned().collect()
    } else {
        for g in buckets.keys() {
            if !grades.contains(&g.as_str()) {
                notes.push(format!(
                    "grade '{g}' is not in the requested list and was omitted"
                ));
            }
        }
        grades.iter().map(|g| g.to_string()).collect()
    };
    let mut rows = Vec::new();
    for g in order {
        match buckets.get(&g) {
            Some(&(tp, fn_)) if tp + fn_ > 0 => rows.push(GradeSensitivity {
                sensitivity: tp as f64 / (tp + fn_) as f64,
                grade: g,
                tp,
                fn_,
            }),
            _ => notes.push(format!("grade '{g}' has no positive cases and was omitted")),
        }
    }
    SensitivityTable {
        biomarker: biomarker.to_string(),
        rows,
        notes,
    }
}
