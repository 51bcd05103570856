use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{QaPair, RawPair};
use crate::promptgen::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Reject pairs with rule violations instead of flagging them.
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EmptyField,
    Duplicate,
    OverBudget,
    RuleViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejected {
    pub question: String,
    pub answer: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validated {
    pub accepted: Vec<QaPair>,
    pub rejected: Vec<Rejected>,
}

impl Validated {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejected.iter().filter(|r| r.reason == reason).count()
    }
}

/// Forbidden words found in the pair, compared case-insensitively.
pub fn forbidden_hits(template: &PromptTemplate, question: &str, answer: &str) -> Vec<String> {
    let q = question.to_lowercase();
    let a = answer.to_lowercase();
    template
        .forbidden_words
        .iter()
        .filter(|w| {
            let w = w.to_lowercase();
            q.contains(&w) || a.contains(&w)
        })
        .map(|w| format!("forbidden word '{w}'"))
        .collect()
}

/// Applies the per-template rules to one transcript's pairs: drops empty
/// fields and exact repeats, flags (or in strict mode rejects) forbidden
/// vocabulary, then truncates to the template's `max_qa`.
pub fn validate_pairs(
    image_id: &str,
    pairs: &[RawPair],
    template: &PromptTemplate,
    opts: ValidationOptions,
) -> Validated {
    let mut out = Validated::default();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let reject = |p: &RawPair, reason| Rejected {
        question: p.question.clone(),
        answer: p.answer.clone(),
        reason,
    };
    for p in pairs {
        if p.question.trim().is_empty() || p.answer.trim().is_empty() {
            out.rejected.push(reject(p, RejectReason::EmptyField));
            continue;
        }
        if !seen.insert((p.question.as_str(), p.answer.as_str())) {
            out.rejected.push(reject(p, RejectReason::Duplicate));
            continue;
        }
        let flags = forbidden_hits(template, &p.question, &p.answer);
        if opts.strict && !flags.is_empty() {
            out.rejected.push(reject(p, RejectReason::RuleViolation));
            continue;
        }
        if out.accepted.len() >= template.max_qa {
            out.rejected.push(reject(p, RejectReason::OverBudget));
            continue;
        }
        out.accepted.push(QaPair {
            image_id: image_id.to_string(),
            question: p.question.clone(),
            answer: p.answer.clone(),
            template_id: template.template_id.clone(),
            curriculum_part: template.curriculum_part,
            ordinal: out.accepted.len() + 1,
            flags,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgen::TemplateSet;

    fn raw(q: &str, a: &str) -> RawPair {
        RawPair {
            question: q.into(),
            answer: a.into(),
            start: 0,
            end: 0,
        }
    }

    fn template(id: &str) -> PromptTemplate {
        TemplateSet::default().get(id).unwrap().clone()
    }

    #[test]
    fn truncates_to_budget() {
        let t = template("part2_01_advanced_biomarkers");
        assert_eq!(t.max_qa, 30);
        let pairs: Vec<_> = (0..35)
            .map(|i| raw(&format!("q{i}?"), &format!("a{i}.")))
            .collect();
        let v = validate_pairs("img", &pairs, &t, ValidationOptions::default());
        assert_eq!(v.accepted.len(), 30);
        assert_eq!(v.count(RejectReason::OverBudget), 5);
        assert_eq!(v.accepted.last().unwrap().ordinal, 30);
        assert_eq!(v.accepted[29].question, "q29?");
    }

    #[test]
    fn duplicates_and_empties_dropped() {
        let t = template("part1_general");
        let pairs = vec![
            raw("q?", "a."),
            raw("q?", "a."),
            raw("", "a."),
            raw("q2?", "   "),
        ];
        let v = validate_pairs("img", &pairs, &t, ValidationOptions::default());
        assert_eq!(v.accepted.len(), 1);
        assert_eq!(v.count(RejectReason::Duplicate), 1);
        assert_eq!(v.count(RejectReason::EmptyField), 2);
    }

    #[test]
    fn forbidden_words_flag_or_reject() {
        let t = template("part2_04_staging_reasoning_a");
        let pairs = vec![
            raw("What stage?", "The Description mentions drusen."),
            raw("Other?", "Fine."),
        ];
        let v = validate_pairs("img", &pairs, &t, ValidationOptions::default());
        assert_eq!(v.accepted.len(), 2);
        assert_eq!(
            v.accepted[0].flags,
            vec!["forbidden word 'description'", "forbidden word 'mention'"]
        );
        assert!(v.accepted[1].flags.is_empty());
        let strict = validate_pairs("img", &pairs, &t, ValidationOptions { strict: true });
        assert_eq!(strict.accepted.len(), 1);
        assert_eq!(strict.accepted[0].ordinal, 1);
        assert_eq!(strict.count(RejectReason::RuleViolation), 1);
    }

    #[test]
    fn templates_without_rules_never_flag() {
        let t = template("part1_general");
        let v = validate_pairs(
            "img",
            &[raw("q?", "the description mentions")],
            &t,
            ValidationOptions::default(),
        );
        assert!(v.accepted[0].flags.is_empty());
    }
}
