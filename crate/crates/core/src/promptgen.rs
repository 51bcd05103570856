//! QA-generation prompt templates and job planning.
//!
//! Templates are plain-text files with a small front-matter block:
//!
//! ```text
//! ---
//! template_id: part2_03_staging_definitions_b
//! part: 2
//! module: staging_definitions_b
//! max_qa: 30
//! sentinel: No disease stage in report
//! forbid: description
//! ---
//! <body>
//! ```
//!
//! `sentinel` and `forbid` may repeat. The bundled set is embedded at compile
//! time from `data/templates/`.

use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SpecialistReport, TabularReport};
use crate::guidelines::{self, GuidelineError, GuidelineRegistry};

const BUNDLED: [&str; 11] = [
    include_str!("../data/templates/part1_general.txt"),
    include_str!("../data/templates/part2_01_advanced_biomarkers.txt"),
    include_str!("../data/templates/part2_02_staging_definitions_a.txt"),
    include_str!("../data/templates/part2_03_staging_definitions_b.txt"),
    include_str!("../data/templates/part2_04_staging_reasoning_a.txt"),
    include_str!("../data/templates/part2_05_staging_reasoning_b.txt"),
    include_str!("../data/templates/part2_06_referral_reasoning.txt"),
    include_str!("../data/templates/part2_07_specific_vqa.txt"),
    include_str!("../data/templates/part2_08_general_vqa.txt"),
    include_str!("../data/templates/part2_09_report_writing_basic.txt"),
    include_str!("../data/templates/part2_10_report_writing_advanced.txt"),
];

/// Per-image QA capacity of the curriculum part 2 templates.
pub const PART2_QA_BUDGET: usize = 230;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template {template}: {message}")]
    BadTemplate { template: String, message: String },
    #[error(
        "template {template_id} is for curriculum part {expected}, report is for part {actual}"
    )]
    KindMismatch {
        template_id: String,
        expected: CurriculumPart,
        actual: CurriculumPart,
    },
    #[error("report for image {0} has empty text")]
    EmptyReport(String),
    #[error("duplicate template_id '{0}'")]
    DuplicateTemplate(String),
    #[error(transparent)]
    Guideline(#[from] GuidelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum CurriculumPart {
    One,
    Two,
}

impl TryFrom<u8> for CurriculumPart {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            other => Err(format!("curriculum part must be 1 or 2, got {other}")),
        }
    }
}

impl From<CurriculumPart> for u8 {
    fn from(p: CurriculumPart) -> u8 {
        match p {
            CurriculumPart::One => 1,
            CurriculumPart::Two => 2,
        }
    }
}

impl fmt::Display for CurriculumPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaModule {
    General,
    AdvancedBiomarkers,
    StagingDefinitionsA,
    StagingDefinitionsB,
    StagingReasoningA,
    StagingReasoningB,
    ReferralReasoning,
    SpecificVqa,
    GeneralVqa,
    ReportWritingBasic,
    ReportWritingAdvanced,
}

impl QaModule {
    pub const ALL: [QaModule; 11] = [
        QaModule::General,
        QaModule::AdvancedBiomarkers,
        QaModule::StagingDefinitionsA,
        QaModule::StagingDefinitionsB,
        QaModule::StagingReasoningA,
        QaModule::StagingReasoningB,
        QaModule::ReferralReasoning,
        QaModule::SpecificVqa,
        QaModule::GeneralVqa,
        QaModule::ReportWritingBasic,
        QaModule::ReportWritingAdvanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::General => "general",
            Self::AdvancedBiomarkers => "advanced_biomarkers",
            Self::StagingDefinitionsA => "staging_definitions_a",
            Self::StagingDefinitionsB => "staging_definitions_b",
            Self::StagingReasoningA => "staging_reasoning_a",
            Self::StagingReasoningB => "staging_reasoning_b",
            Self::ReferralReasoning => "referral_reasoning",
            Self::SpecificVqa => "specific_vqa",
            Self::GeneralVqa => "general_vqa",
            Self::ReportWritingBasic => "report_writing_basic",
            Self::ReportWritingAdvanced => "report_writing_advanced",
        }
    }

    pub fn part(self) -> CurriculumPart {
        match self {
            Self::General => CurriculumPart::One,
            _ => CurriculumPart::Two,
        }
    }
}

impl std::str::FromStr for QaModule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown module '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub curriculum_part: CurriculumPart,
    pub module: QaModule,
    pub body: String,
    pub max_qa: usize,
    /// Literal outputs the template allows in place of QA pairs.
    pub sentinel_rules: Vec<String>,
    /// Words the template forbids in answers; violations are flagged.
    pub forbidden_words: Vec<String>,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let bad = |message: String| PromptError::BadTemplate {
            template: "<unparsed>".into(),
            message,
        };
        let rest = source
            .strip_prefix("---\n")
            .ok_or_else(|| bad("missing front-matter opening '---'".into()))?;
        let end = rest
            .find("\n---\n")
            .ok_or_else(|| bad("missing front-matter closing '---'".into()))?;
        let (front, body) = (&rest[..end], &rest[end + 5..]);

        let mut id = None;
        let mut part = None;
        let mut module = None;
        let mut max_qa = None;
        let mut sentinels = Vec::new();
        let mut forbidden = Vec::new();
        for line in front.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(':')
                .ok_or_else(|| bad(format!("front-matter line without ':': {line}")))?;
            let v = v.trim();
            match k.trim() {
                "template_id" => id = Some(v.to_string()),
                "part" => {
                    let n: u8 = v.parse().map_err(|_| bad(format!("bad part '{v}'")))?;
                    part = Some(CurriculumPart::try_from(n).map_err(bad)?);
                }
                "module" => module = Some(v.parse::<QaModule>().map_err(bad)?),
                "max_qa" => {
                    let n: usize = v.parse().map_err(|_| bad(format!("bad max_qa '{v}'")))?;
                    if n == 0 {
                        return Err(bad("max_qa must be positive".into()));
                    }
                    max_qa = Some(n);
                }
                "sentinel" => sentinels.push(v.to_string()),
                "forbid" => forbidden.push(v.to_string()),
                other => return Err(bad(format!("unknown front-matter key '{other}'"))),
            }
        }
        let template_id = id.ok_or_else(|| bad("missing template_id".into()))?;
        let with_id = |message: &str| PromptError::BadTemplate {
            template: template_id.clone(),
            message: message.into(),
        };
        let curriculum_part = part.ok_or_else(|| with_id("missing part"))?;
        let module = module.ok_or_else(|| with_id("missing module"))?;
        if module.part() != curriculum_part {
            return Err(with_id("module does not belong to the declared part"));
        }
        let max_qa = max_qa.ok_or_else(|| with_id("missing max_qa"))?;
        if body.trim().is_empty() {
            return Err(with_id("empty body"));
        }
        Ok(Self {
            template_id,
            curriculum_part,
            module,
            body: body.to_string(),
            max_qa,
            sentinel_rules: sentinels,
            forbidden_words: forbidden,
        })
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "---\ntemplate_id: {}\npart: {}\nmodule: {}\nmax_qa: {}\n",
            self.template_id,
            self.curriculum_part,
            self.module.as_str(),
            self.max_qa
        );
        for s in &self.sentinel_rules {
            out.push_str(&format!("sentinel: {s}\n"));
        }
        for w in &self.forbidden_words {
            out.push_str(&format!("forbid: {w}\n"));
        }
        out.push_str("---\n");
        out.push_str(&self.body);
        out
    }
}

/// An ordered collection of templates with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: Vec<PromptTemplate>,
}

impl TemplateSet {
    pub fn new(mut templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        templates.sort_by(|a, b| a.template_id.cmp(&b.template_id));
        for w in templates.windows(2) {
            if w[0].template_id == w[1].template_id {
                return Err(PromptError::DuplicateTemplate(w[0].template_id.clone()));
            }
        }
        Ok(Self { templates })
    }

    /// Loads every `*.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |e: std::io::Error| PromptError::BadTemplate {
            template: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut templates = Vec::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(io)?;
            templates.push(PromptTemplate::parse(&text)?);
        }
        Self::new(templates)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.iter()
    }

    pub fn for_part(&self, part: CurriculumPart) -> impl Iterator<Item = &PromptTemplate> {
        self.templates
            .iter()
            .filter(move |t| t.curriculum_part == part)
    }

    pub fn get(&self, template_id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    /// Sum of `max_qa` over the templates of one part.
    pub fn budget(&self, part: CurriculumPart) -> usize {
        self.for_part(part).map(|t| t.max_qa).sum()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = BUNDLED
            .iter()
            .map(|src| PromptTemplate::parse(src).expect("bundled template parses"))
            .collect();
        Self::new(templates).expect("bundled template ids are unique")
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ReportRef<'a> {
    Tabular(&'a TabularReport),
    Specialist(&'a SpecialistReport),
}

impl<'a> ReportRef<'a> {
    pub fn image_id(&self) -> &'a str {
        match self {
            Self::Tabular(r) => &r.image_id,
            Self::Specialist(r) => &r.image_id,
        }
    }

    pub fn part(&self) -> CurriculumPart {
        match self {
            Self::Tabular(_) => CurriculumPart::One,
            Self::Specialist(_) => CurriculumPart::Two,
        }
    }
}

/// Renders a tabular report as `field: value` lines: present biomarkers,
/// then the absent ones, then demographics that are set.
pub fn render_tabular(report: &TabularReport) -> String {
    let mut lines = Vec::new();
    for b in &report.present_biomarkers {
        lines.push(format!("{b}: present"));
    }
    for b in &report.absent_biomarkers {
        lines.push(format!("{b}: not present"));
    }
    if let Some(age) = report.age_years {
        lines.push(format!("age: {age}"));
    }
    if let Some(sex) = report.sex {
        lines.push(format!("sex: {}", sex.as_str()));
    }
    if let Some(va) = report.visual_acuity_letters {
        lines.push(format!("visual acuity (letter score): {va}"));
    }
    if let Some(d) = &report.diagnosis {
        lines.push(format!("diagnosis: {d}"));
    }
    lines.join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub image_id: String,
    pub template_id: String,
    pub curriculum_part: CurriculumPart,
    pub instantiated_prompt: String,
    pub backend_id: String,
    pub created_at: DateTime<Utc>,
}

pub fn instantiate(
    template: &PromptTemplate,
    report: ReportRef<'_>,
    registry: &GuidelineRegistry,
    backend_id: &str,
    created_at: DateTime<Utc>,
) -> Result<GenerationJob, PromptError> {
    if report.part() != template.curriculum_part {
        return Err(PromptError::KindMismatch {
            template_id: template.template_id.clone(),
            expected: template.curriculum_part,
            actual: report.part(),
        });
    }
    let report_text = match report {
        ReportRef::Tabular(r) => render_tabular(r),
        ReportRef::Specialist(r) => {
            if r.text.trim().is_empty() {
                return Err(PromptError::EmptyReport(r.image_id.clone()));
            }
            r.text.clone()
        }
    };
    let prompt = guidelines::substitute(&template.body, registry, Some(&report_text))?;
    Ok(GenerationJob {
        image_id: report.image_id().to_string(),
        template_id: template.template_id.clone(),
        curriculum_part: template.curriculum_part,
        instantiated_prompt: prompt,
        backend_id: backend_id.to_string(),
        created_at,
    })
}

/// One job per (report, template of the report's part), ordered by
/// `(image_id, template_id)`.
pub fn plan_jobs(
    reports: &[ReportRef<'_>],
    templates: &TemplateSet,
    registry: &GuidelineRegistry,
    backend_id: &str,
    created_at: DateTime<Utc>,
) -> Result<Vec<GenerationJob>, PromptError> {
    let mut jobs = Vec::new();
    for report in reports {
        for t in templates.for_part(report.part()) {
            jobs.push(instantiate(t, *report, registry, backend_id, created_at)?);
        }
    }
    jobs.sort_by(|a, b| (&a.image_id, &a.template_id).cmp(&(&b.image_id, &b.template_id)));
    Ok(jobs)
}
