use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_numbered_qa, validate_pairs, QaError, QaPair, RejectReason, ValidationOptions};
use crate::corpus::{Split, SplitAssignment};
use crate::llm_gateway::QaTranscript;
use crate::promptgen::{CurriculumPart, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembleOptions {
    #[serde(default)]
    pub validation: ValidationOptions,
    /// Drop exact (question, answer) repeats produced by different templates
    /// for the same image.
    #[serde(default = "yes")]
    pub dedup_across_templates: bool,
}

fn yes() -> bool {
    true
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            validation: ValidationOptions::default(),
            dedup_across_templates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub pairs_total: usize,
    pub images_total: usize,
    pub pairs_per_image_mean: f64,
    pub per_template: BTreeMap<String, usize>,
    pub flagged_pairs: usize,
}

impl DatasetStats {
    pub fn from_pairs(pairs: &[QaPair]) -> Self {
        let images: BTreeSet<&str> = pairs.iter().map(|p| p.image_id.as_str()).collect();
        let mut per_template = BTreeMap::new();
        for p in pairs {
            *per_template.entry(p.template_id.clone()).or_insert(0) += 1;
        }
        Self {
            pairs_total: pairs.len(),
            images_total: images.len(),
            pairs_per_image_mean: if images.is_empty() {
                0.0
            } else {
                pairs.len() as f64 / images.len() as f64
            },
            per_template,
            flagged_pairs: pairs.iter().filter(|p| !p.flags.is_empty()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumDataset {
    pub name: String,
    pub part: CurriculumPart,
    pub images: Vec<String>,
    pub pairs: Vec<QaPair>,
    pub stats: DatasetStats,
}

impl CurriculumDataset {
    /// Sorts pairs into their canonical order and recomputes the image index
    /// and statistics.
    pub fn from_pairs(
        name: impl Into<String>,
        part: CurriculumPart,
        mut pairs: Vec<QaPair>,
    ) -> Self {
        pairs.sort_by(|a, b| {
            (&a.image_id, &a.template_id, a.ordinal).cmp(&(&b.image_id, &b.template_id, b.ordinal))
        });
        let images: BTreeSet<String> = pairs.iter().map(|p| p.image_id.clone()).collect();
        let stats = DatasetStats::from_pairs(&pairs);
        Self {
            name: name.into(),
            part,
            images: images.into_iter().collect(),
            pairs,
            stats,
        }
    }
}

/// Counters describing what assembly kept and dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub transcripts_total: usize,
    pub transcripts_failed: usize,
    pub transcripts_sentinel: usize,
    pub transcripts_excluded: usize,
    pub transcripts_repeated: usize,
    pub parse_diagnostics: usize,
    pub rejected_empty: usize,
    pub rejected_duplicate: usize,
    pub rejected_over_budget: usize,
    pub rejected_rule: usize,
    pub cross_template_duplicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub dataset: CurriculumDataset,
    pub report: AssemblyReport,
    pub warnings: Vec<String>,
}

/// Builds the training dataset for `part` from its transcripts. Only images
/// assigned to the train split are admitted; others are excluded with a
/// warning. Transcripts naming images absent from `splits` are an error.
pub fn assemble(
    name: &str,
    part: CurriculumPart,
    transcripts: &[QaTranscript],
    templates: &TemplateSet,
    splits: &SplitAssignment,
    opts: AssembleOptions,
) -> Result<Assembly, QaError> {
    let unknown: BTreeSet<&str> = transcripts
        .iter()
        .filter(|t| splits.split_of(&t.image_id).is_none())
        .map(|t| t.image_id.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(QaError::UnknownImages(
            unknown.into_iter().map(String::from).collect(),
        ));
    }
    let unknown_templates: BTreeSet<&str> = transcripts
        .iter()
        .filter(|t| templates.get(&t.template_id).is_none())
        .map(|t| t.template_id.as_str())
        .collect();
    if !unknown_templates.is_empty() {
        return Err(QaError::UnknownTemplates(
            unknown_templates.into_iter().map(String::from).collect(),
        ));
    }

    let mut ordered: Vec<&QaTranscript> = transcripts.iter().collect();
    ordered.sort_by(|a, b| (&a.image_id, &a.template_id).cmp(&(&b.image_id, &b.template_id)));

    let mut report = AssemblyReport {
        transcripts_total: transcripts.len(),
        ..AssemblyReport::default()
    };
    let mut warnings = Vec::new();
    let mut excluded: BTreeMap<&str, Split> = BTreeMap::new();
    let mut seen_jobs: HashSet<(&str, &str)> = HashSet::new();
    let mut seen_pairs: HashSet<(&str, String, String)> = HashSet::new();
    let mut pairs = Vec::new();

    for t in ordered {
        let template = templates.get(&t.template_id).expect("checked above");
        if template.curriculum_part != part {
            return Err(QaError::PartMismatch {
                image_id: t.image_id.clone(),
                template_id: t.template_id.clone(),
                template_part: template.curriculum_part,
                expected: part,
            });
        }
        let split = splits.split_of(&t.image_id).expect("checked above");
        if split != Split::Train {
            report.transcripts_excluded += 1;
            excluded.insert(&t.image_id, split);
            continue;
        }
        if !seen_jobs.insert((&t.image_id, &t.template_id)) {
            report.transcripts_repeated += 1;
            warnings.push(format!(
                "repeated transcript for {} / {} ignored",
                t.image_id, t.template_id
            ));
            continue;
        }
        let text = match (&t.text, &t.error) {
            (Some(text), None) => text,
            _ => {
                report.transcripts_failed += 1;
                continue;
            }
        };
        let parsed = parse_numbered_qa(text);
        if parsed.sentinel.is_some() {
            report.transcripts_sentinel += 1;
            continue;
        }
        report.parse_diagnostics += parsed.diagnostics.len();
        let v = validate_pairs(&t.image_id, &parsed.pairs, template, opts.validation);
        report.rejected_empty += v.count(RejectReason::EmptyField);
        report.rejected_duplicate += v.count(RejectReason::Duplicate);
        report.rejected_over_budget += v.count(RejectReason::OverBudget);
        report.rejected_rule += v.count(RejectReason::RuleViolation);
        for p in v.accepted {
            if opts.dedup_across_templates
                && !seen_pairs.insert((&t.image_id, p.question.clone(), p.answer.clone()))
            {
                report.cross_template_duplicates += 1;
                continue;
            }
            pairs.push(p);
        }
    }
    for (image, split) in excluded {
        warnings.push(format!("excluded {image}: assigned to {split} split"));
    }
    if report.transcripts_failed > 0 {
        warnings.push(format!(
            "{} transcripts carried generation errors",
            report.transcripts_failed
        ));
    }

    Ok(Assembly {
        dataset: CurriculumDataset::from_pairs(name, part, pairs),
        report,
        warnings,
    })
}

/// Writes `<name>.jsonl` and `<name>.stats.json` into `dir`.
pub fn write_dataset(
    dir: &Path,
    dataset: &CurriculumDataset,
) -> Result<(PathBuf, PathBuf), QaError> {
    std::fs::create_dir_all(dir)?;
    let data = dir.join(format!("{}.jsonl", dataset.name));
    let stats = dir.join(format!("{}.stats.json", dataset.name));
    crate::write_jsonl(&data, &dataset.pairs)?;
    let mut json = serde_json::to_string_pretty(&dataset.stats).expect("stats serialize");
    json.push('\n');
    std::fs::write(&stats, json)?;
    Ok((data, stats))
}

/// Reads a dataset JSONL file; statistics are recomputed from the pairs.
pub fn load_dataset(path: &Path, part: CurriculumPart) -> Result<CurriculumDataset, QaError> {
    let pairs: Vec<QaPair> = crate::read_jsonl(path)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".jsonl").to_string())
        .unwrap_or_default();
    Ok(CurriculumDataset::from_pairs(name, part, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_splits, ImageMeta, SplitFractions};
    use crate::llm_gateway::FinishReason;

    fn transcript(image: &str, template: &str, part: CurriculumPart, text: &str) -> QaTranscript {
        QaTranscript {
            image_id: image.into(),
            template_id: template.into(),
            curriculum_part: part,
            backend_id: "mock".into(),
            prompt_sha256: String::new(),
            text: Some(text.into()),
            finish_reason: Some(FinishReason::Stop),
            cached: false,
            error: None,
        }
    }

    fn all_train(ids: &[&str]) -> SplitAssignment {
        let images: Vec<ImageMeta> = ids
            .iter()
            .map(|id| ImageMeta::new(*id, format!("p-{id}"), "OD"))
            .collect();
        make_splits(&images, SplitFractions::new(1.0, 0.0, 0.0).unwrap(), 0).unwrap()
    }

    #[test]
    fn two_images_one_template_each() {
        let splits = all_train(&["a", "b"]);
        let ts = vec![
            transcript("b", "part1_general", CurriculumPart::One, "1. Q: x? A: y."),
            transcript(
                "a",
                "part1_general",
                CurriculumPart::One,
                "1. Q: x? A: y.\n2. Q: z? A: w.",
            ),
        ];
        let a = assemble(
            "part1",
            CurriculumPart::One,
            &ts,
            &TemplateSet::default(),
            &splits,
            AssembleOptions::default(),
        )
        .unwrap();
        assert_eq!(a.dataset.stats.images_total, 2);
        assert_eq!(a.dataset.stats.pairs_total, 3);
        assert_eq!(a.dataset.stats.pairs_per_image_mean, 1.5);
        assert_eq!(a.dataset.images, vec!["a", "b"]);
        assert_eq!(a.dataset.pairs[0].image_id, "a");
        assert_eq!(a.dataset.pairs[2].image_id, "b");
    }

    #[test]
    fn unknown_image_is_an_error() {
        let splits = all_train(&["a"]);
        let ts = vec![
            transcript("zz", "part1_general", CurriculumPart::One, "1. Q: x? A: y."),
            transcript("yy", "part1_general", CurriculumPart::One, "1. Q: x? A: y."),
        ];
        let err = assemble(
            "p",
            CurriculumPart::One,
            &ts,
            &TemplateSet::default(),
            &splits,
            AssembleOptions::default(),
        )
        .unwrap_err();
        assert_eq!(
            err.to_string(),
            "transcripts reference unknown images: yy, zz"
        );
    }

    #[test]
    fn non_train_images_excluded_with_warning() {
        let images: Vec<ImageMeta> = (0..20)
            .map(|i| ImageMeta::new(format!("i{i:02}"), format!("p{i:02}"), "OD"))
            .collect();
        let splits =
            make_splits(&images, SplitFractions::new(0.5, 0.25, 0.25).unwrap(), 3).unwrap();
        let test_img = splits.images_in(Split::Test).next().unwrap().to_string();
        let train_img = splits.images_in(Split::Train).next().unwrap().to_string();
        let ts = vec![
            transcript(
                &test_img,
                "part1_general",
                CurriculumPart::One,
                "1. Q: x? A: y.",
            ),
            transcript(
                &train_img,
                "part1_general",
                CurriculumPart::One,
                "1. Q: x? A: y.",
            ),
        ];
        let a = assemble(
            "p",
            CurriculumPart::One,
            &ts,
            &TemplateSet::default(),
            &splits,
            AssembleOptions::default(),
        )
        .unwrap();
        assert_eq!(a.dataset.images, vec![train_img]);
        assert_eq!(a.report.transcripts_excluded, 1);
        assert!(a
            .warnings
            .iter()
            .any(|w| w.contains(&test_img) && w.contains("test")));
    }

    #[test]
    fn sentinel_and_failures_counted() {
        let splits = all_train(&["a"]);
        let mut failed = transcript("a", "part2_05_staging_reasoning_b", CurriculumPart::Two, "");
        failed.text = None;
        failed.error = Some("unscripted prompt".into());
        let ts = vec![
            transcript(
                "a",
                "part2_03_staging_definitions_b",
                CurriculumPart::Two,
                "No disease stage in report",
            ),
            failed,
            transcript(
                "a",
                "part2_07_specific_vqa",
                CurriculumPart::Two,
                "1. Q: q? A: a.",
            ),
            transcript(
                "a",
                "part2_08_general_vqa",
                CurriculumPart::Two,
                "1. Q: q? A: a.\n2. Q: r? A: b.",
            ),
        ];
        let a = assemble(
            "p2",
            CurriculumPart::Two,
            &ts,
            &TemplateSet::default(),
            &splits,
            AssembleOptions::default(),
        )
        .unwrap();
        assert_eq!(a.report.transcripts_sentinel, 1);
        assert_eq!(a.report.transcripts_failed, 1);
        assert_eq!(a.report.cross_template_duplicates, 1);
        assert_eq!(a.dataset.stats.pairs_total, 2);
        assert_eq!(a.dataset.stats.per_template["part2_07_specific_vqa"], 1);
    }

    #[test]
    fn part_mismatch_rejected() {
        let splits = all_train(&["a"]);
        let ts = vec![transcript(
            "a",
            "part1_general",
            CurriculumPart::One,
            "1. Q: q? A: a.",
        )];
        assert!(matches!(
            assemble(
                "p",
                CurriculumPart::Two,
                &ts,
                &TemplateSet::default(),
                &splits,
                AssembleOptions::default()
            ),
            Err(QaError::PartMismatch { .. })
        ));
    }

    #[test]
    fn written_files_are_stable_and_reloadable() {
        let splits = all_train(&["a", "b"]);
        let ts = vec![
            transcript("b", "part1_general", CurriculumPart::One, "1. Q: x? A: y."),
            transcript("a", "part1_general", CurriculumPart::One, "1. Q: x? A: y."),
        ];
        let run = |dir: &Path| {
            let a = assemble(
                "part1",
                CurriculumPart::One,
                &ts,
                &TemplateSet::default(),
                &splits,
                AssembleOptions::default(),
            )
            .unwrap();
            let (d, s) = write_dataset(dir, &a.dataset).unwrap();
            (
                std::fs::read(d).unwrap(),
                std::fs::read(s).unwrap(),
                a.dataset,
            )
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let (a1, s1, ds) = run(d1.path());
        let (a2, s2, _) = run(d2.path());
        assert_eq!(a1, a2);
        assert_eq!(s1, s2);
        let back = load_dataset(&d1.path().join("part1.jsonl"), CurriculumPart::One).unwrap();
        assert_eq!(back, ds);
    }
}
