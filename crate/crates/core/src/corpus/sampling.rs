use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BiomarkerSchema, CorpusError, Sex, TabularReport, ABSENT_COUNT};
use crate::rng;

/// Draws the three biomarkers a tabular report states as not present.
///
/// Candidates are the schema entries outside `present`. Draws are weighted by
/// prevalence without replacement: after each pick the remaining weights are
/// renormalized. When only zero-weight candidates remain the draw is uniform
/// among them. If exactly three candidates exist they are returned in
/// descending weight order without consuming randomness.
pub fn sample_absent_biomarkers<S: AsRef<str>>(
    present: &[S],
    schema: &BiomarkerSchema,
    rng_seed: u64,
) -> Result<Vec<String>, CorpusError> {
    let present: BTreeSet<&str> = present.iter().map(AsRef::as_ref).collect();
    for name in &present {
        if !schema.contains(name) {
            return Err(CorpusError::UnknownBiomarker(name.to_string()));
        }
    }
    let mut candidates: Vec<(&str, f64)> = schema
        .entries()
        .iter()
        .filter(|e| !present.contains(e.name.as_str()))
        .map(|e| (e.name.as_str(), e.prevalence_weight))
        .collect();

    if candidates.len() < ABSENT_COUNT {
        return Err(CorpusError::InsufficientCandidates {
            available: candidates.len(),
            needed: ABSENT_COUNT,
        });
    }
    if candidates.len() == ABSENT_COUNT {
        // stable sort keeps schema order among equal weights
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        return Ok(candidates.into_iter().map(|(n, _)| n.to_string()).collect());
    }

    let mut rng = rng::seeded(rng_seed);
    let mut picked = Vec::with_capacity(ABSENT_COUNT);
    for _ in 0..ABSENT_COUNT {
        let total: f64 = candidates.iter().map(|c| c.1).sum();
        let idx = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, c) in candidates.iter().enumerate() {
                if c.1 <= 0.0 {
                    continue;
                }
                acc += c.1;
                chosen = Some(i);
                if target < acc {
                    break;
                }
            }
            chosen.expect("positive total implies a positive-weight candidate")
        } else {
            rng.gen_range(0..candidates.len())
        };
        picked.push(candidates.remove(idx).0.to_string());
    }
    Ok(picked)
}

/// One image with its cluster assignment and demographics, the input to
/// tabular report synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredImage {
    pub image_id: String,
    pub patient_id: String,
    pub cluster_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub va_letters: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
}

/// Biomarker labels assigned to each image cluster by reviewers.
pub type ClusterLabels = BTreeMap<u32, Vec<String>>;

/// Builds one tabular report per image: the cluster's labels become the
/// present biomarkers, and three absent biomarkers are sampled. Each image's
/// draw is seeded from `(seed, image_id)`, so output does not depend on the
/// order of `images`.
pub fn synthesize_tabular_reports(
    images: &[ClusteredImage],
    clusters: &ClusterLabels,
    schema: &BiomarkerSchema,
    seed: u64,
) -> Result<Vec<TabularReport>, CorpusError> {
    let mut out = Vec::with_capacity(images.len());
    for img in images {
        let present = clusters
            .get(&img.cluster_id)
            .ok_or_else(|| CorpusError::MissingCluster {
                image_id: img.image_id.clone(),
                cluster_id: img.cluster_id,
            })?;
        let absent =
            sample_absent_biomarkers(present, schema, rng::derive_seed(seed, &img.image_id))?;
        out.push(TabularReport {
            image_id: img.image_id.clone(),
            patient_id: img.patient_id.clone(),
            present_biomarkers: present.clone(),
            absent_biomarkers: absent,
            age_years: img.age,
            sex: img.sex,
            visual_acuity_letters: img.va_letters,
            diagnosis: img.diagnosis.clone(),
            schema_version: schema.version().to_string(),
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}
