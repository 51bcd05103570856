//! Guideline documents and placeholder substitution into prompt templates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_REGISTRY_JSON: &str = include_str!("../data/guidelines.json");

pub const REPORT_TEXT_TOKEN: &str = "<ReportText>";
pub const IMAGE_TOKEN: &str = "<ImageHere>";

#[derive(Debug, Error, PartialEq)]
pub enum GuidelineError {
    #[error("template references {0} but the registry has no such guideline")]
    MissingGuideline(String),
    #[error("template references <ReportText> but no report text was supplied")]
    MissingReportText,
    #[error("guideline '{0}' has empty text")]
    EmptyGuideline(String),
    #[error("invalid guideline registry: {0}")]
    InvalidRegistry(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GuidelineKey {
    ObservationGuidelines,
    DiseaseStagingGuidelines,
    PatientReferralGuidelines,
}

impl GuidelineKey {
    pub const ALL: [GuidelineKey; 3] = [
        GuidelineKey::ObservationGuidelines,
        GuidelineKey::DiseaseStagingGuidelines,
        GuidelineKey::PatientReferralGuidelines,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ObservationGuidelines => "ObservationGuidelines",
            Self::DiseaseStagingGuidelines => "DiseaseStagingGuidelines",
            Self::PatientReferralGuidelines => "PatientReferralGuidelines",
        }
    }

    pub fn token(self) -> String {
        format!("<{}>", self.as_str())
    }
}

impl FromStr for GuidelineKey {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineDoc {
    pub text: String,
    pub version: String,
}

/// Immutable set of guideline documents, at most one per key.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidelineRegistry {
    docs: BTreeMap<GuidelineKey, GuidelineDoc>,
}

impl GuidelineRegistry {
    pub fn new(docs: BTreeMap<GuidelineKey, GuidelineDoc>) -> Result<Self, GuidelineError> {
        for (k, d) in &docs {
            if d.text.trim().is_empty() {
                return Err(GuidelineError::EmptyGuideline(k.as_str().into()));
            }
        }
        Ok(Self { docs })
    }

    /// Parses the registry file format `{key: {text, version}}`.
    pub fn from_json(text: &str) -> Result<Self, GuidelineError> {
        let docs: BTreeMap<GuidelineKey, GuidelineDoc> = serde_json::from_str(text)
            .map_err(|e| GuidelineError::InvalidRegistry(e.to_string()))?;
        Self::new(docs)
    }

    pub fn load(path: &Path) -> Result<Self, GuidelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GuidelineError::InvalidRegistry(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn get(&self, key: GuidelineKey) -> Option<&GuidelineDoc> {
        self.docs.get(&key)
    }

    pub fn without(&self, key: GuidelineKey) -> Self {
        let mut docs = self.docs.clone();
        docs.remove(&key);
        Self { docs }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.docs).expect("registry serializes")
    }
}

impl Default for GuidelineRegistry {
    fn default() -> Self {
        Self::from_json(DEFAULT_REGISTRY_JSON).expect("bundled guidelines are valid")
    }
}

/// The six AMD stages, in order of severity, stored verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageLabel {
    #[serde(rename = "healthy")]
    Healthy,
    #[serde(rename = "early")]
    Early,
    #[serde(rename = "intermediate")]
    Intermediate,
    #[serde(rename = "late dry")]
    LateDry,
    #[serde(rename = "late wet (inactive)")]
    LateWetInactive,
    #[serde(rename = "late wet (active)")]
    LateWetActive,
}

impl StageLabel {
    pub const ALL: [StageLabel; 6] = [
        StageLabel::Healthy,
        StageLabel::Early,
        StageLabel::Intermediate,
        StageLabel::LateDry,
        StageLabel::LateWetInactive,
        StageLabel::LateWetActive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Healthy => "healthy",
            Self::Early => "early",
            Self::Intermediate => "intermediate",
            Self::LateDry => "late dry",
            Self::LateWetInactive => "late wet (inactive)",
            Self::LateWetActive => "late wet (active)",
        }
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageLabel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown stage '{s}'"))
    }
}

/// An angle-bracket token recognised by [`substitute`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    ReportText,
    Guideline(GuidelineKey),
}

/// Splits `template` into literal runs and `<Identifier>` spans
/// (`is_token = true`), in order.
fn scan(template: &str) -> Vec<(bool, &str)> {
    let bytes = template.as_bytes();
    let mut out = Vec::new();
    let mut last = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_alphanumeric() {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'>' {
                out.push((false, &template[last..i]));
                out.push((true, &template[i..=j]));
                i = j + 1;
                last = i;
                continue;
            }
        }
        i += 1;
    }
    out.push((false, &template[last..]));
    out
}

fn classify(span: &str) -> Option<Token> {
    if span == REPORT_TEXT_TOKEN {
        return Some(Token::ReportText);
    }
    span[1..span.len() - 1].parse().ok().map(Token::Guideline)
}

/// Recognised tokens in order of appearance. Unknown tokens such as
/// `<ImageHere>` are not listed.
pub fn tokens_in(template: &str) -> Vec<(Token, &str)> {
    scan(template)
        .into_iter()
        .filter(|(is_token, _)| *is_token)
        .filter_map(|(_, span)| classify(span).map(|t| (t, span)))
        .collect()
}

/// Replaces guideline tokens with registry text and `<ReportText>` with
/// `report_text`, in a single left-to-right pass. Replacement text is never
/// rescanned. Unknown tokens, including `<ImageHere>`, pass through.
pub fn substitute(
    template: &str,
    registry: &GuidelineRegistry,
    report_text: Option<&str>,
) -> Result<String, GuidelineError> {
    let mut out = String::with_capacity(template.len());
    let mut pieces: Vec<&str> = Vec::new();
    for (is_token, span) in scan(template) {
        if !is_token {
            pieces.push(span);
            continue;
        }
        let replacement = match classify(span) {
            Some(Token::ReportText) => report_text.ok_or(GuidelineError::MissingReportText)?,
            Some(Token::Guideline(key)) => registry
                .get(key)
                .map(|d| d.text.as_str())
                .ok_or_else(|| GuidelineError::MissingGuideline(span.to_string()))?,
            None => span,
        };
        pieces.push(replacement);
    }
    for p in pieces {
        out.push_str(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_tokens_is_identity() {
        let r = GuidelineRegistry::default();
        assert_eq!(substitute("plain text", &r, None).unwrap(), "plain text");
    }

    #[test]
    fn report_text_alone() {
        let r = GuidelineRegistry::default();
        assert_eq!(substitute("<ReportText>", &r, Some("abc")).unwrap(), "abc");
    }

    #[test]
    fn image_marker_survives() {
        let r = GuidelineRegistry::default();
        let t = "Here is an encoding of a retinal OCT image <Img><ImageHere></Img>\n<ReportText>";
        let got = substitute(t, &r, Some("x")).unwrap();
        assert_eq!(
            got,
            "Here is an encoding of a retinal OCT image <Img><ImageHere></Img>\nx"
        );
    }

    #[test]
    fn missing_guideline_names_token() {
        let r = GuidelineRegistry::default().without(GuidelineKey::DiseaseStagingGuidelines);
        let err = substitute("a <DiseaseStagingGuidelines> b", &r, None).unwrap_err();
        assert_eq!(
            err,
            GuidelineError::MissingGuideline("<DiseaseStagingGuidelines>".into())
        );
    }

    #[test]
    fn missing_report_text() {
        let r = GuidelineRegistry::default();
        assert_eq!(
            substitute("<ReportText>", &r, None).unwrap_err(),
            GuidelineError::MissingReportText
        );
    }

    #[test]
    fn replacement_is_not_rescanned() {
        let r = GuidelineRegistry::default();
        let got = substitute("[<ReportText>]", &r, Some("<ObservationGuidelines>")).unwrap();
        assert_eq!(got, "[<ObservationGuidelines>]");
    }

    #[test]
    fn stage_labels_verbatim() {
        let names: Vec<_> = StageLabel::ALL.iter().map(|s| s.as_str()).collect();
        assert_eq!(
            names,
            [
                "healthy",
                "early",
                "intermediate",
                "late dry",
                "late wet (inactive)",
                "late wet (active)"
            ]
        );
        for s in StageLabel::ALL {
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.as_str())
            );
            assert_eq!(s.as_str().parse::<StageLabel>().unwrap(), s);
        }
    }

    #[test]
    fn default_registry_holds_referral_protocol() {
        let r = GuidelineRegistry::default();
        let referral = &r.get(GuidelineKey::PatientReferralGuidelines).unwrap().text;
        assert!(referral.starts_with("Being seen by a specialist at the Southampton clinic:"));
        assert!(referral.contains("D. The Southampton clinic does not need to see patients"));
        let staging = &r.get(GuidelineKey::DiseaseStagingGuidelines).unwrap().text;
        assert!(staging.contains("presence of any subretinal hyperreflective material or fibrosis"));
        assert!(staging.contains("presence of any fluid"));
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            Just("<ReportText>".to_string()),
            Just("<ObservationGuidelines>".to_string()),
            Just("<DiseaseStagingGuidelines>".to_string()),
            Just("<PatientReferralGuidelines>".to_string()),
            Just("<ImageHere>".to_string()),
            Just("<Img>".to_string()),
            "[a-z <>.\n]{0,12}",
        ]
    }

    proptest! {
        #[test]
        fn length_accounting(parts in proptest::collection::vec(token_strategy(), 0..12), report in "[a-z ]{0,20}") {
            let template: String = parts.concat();
            let r = GuidelineRegistry::default();
            let out = substitute(&template, &r, Some(&report)).unwrap();
            let mut expected = template.len() as isize;
            for (tok, span) in tokens_in(&template) {
                expected -= span.len() as isize;
                expected += match tok {
                    Token::ReportText => report.len(),
                    Token::Guideline(k) => r.get(k).unwrap().text.len(),
                } as isize;
            }
            prop_assert_eq!(out.len() as isize, expected);
        }

        #[test]
        fn idempotent_when_guidelines_hold_no_tokens(parts in proptest::collection::vec(token_strategy(), 0..12)) {
            let template: String = parts.concat().replace("<ReportText>", "");
            let r = GuidelineRegistry::default();
            let once = substitute(&template, &r, None).unwrap();
            let twice = substitute(&once, &r, None).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
