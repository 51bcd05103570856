use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Returned as the sentinel when a staging template declines a report.
pub const NO_STAGE_SENTINEL: &str = "No disease stage in report";

fn item_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*\d+[.)][ \t]*[Qq]:").unwrap())
}

fn answer_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Either `A:`/`a:` opening a line, or an inline uppercase ` A:`.
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*[Aa]:|[ \t]A:").unwrap())
}

fn question_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bQ:").unwrap())
}

/// A question/answer pair as found in the text, with the byte range of the
/// whole item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub question: String,
    pub answer: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// Non-blank text before the first numbered item.
    Preamble,
    /// A numbered item with no answer marker.
    MissingAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub start: usize,
    pub end: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedQa {
    pub pairs: Vec<RawPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentinel: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

fn starts_with_sentinel(text: &str) -> bool {
    let t = text.trim_start();
    let t = t.trim_start_matches(['"', '\'', '\u{201c}', '\u{2018}', '`']);
    t.starts_with(NO_STAGE_SENTINEL)
}

/// Parses numbered `N. Q: ... A: ...` items. Never fails: anything that
/// cannot be read as a pair is reported in `diagnostics` with its byte range.
pub fn parse_numbered_qa(text: &str) -> ParsedQa {
    if starts_with_sentinel(text) {
        return ParsedQa {
            sentinel: Some(NO_STAGE_SENTINEL.to_string()),
            ..ParsedQa::default()
        };
    }
    let mut out = ParsedQa::default();
    let starts: Vec<(usize, usize)> = item_start()
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect();

    let preamble_end = starts.first().map_or(text.len(), |s| s.0);
    let preamble = &text[..preamble_end];
    if !preamble.trim().is_empty() {
        let lead = preamble.len() - preamble.trim_start().len();
        out.diagnostics.push(Diagnostic {
            kind: DiagnosticKind::Preamble,
            start: lead,
            end: preamble.trim_end().len(),
            message: if question_marker().is_match(preamble) {
                "Q: marker not introduced by an item number".into()
            } else {
                "text before first numbered item".into()
            },
        });
    }

    for (idx, &(start, body_start)) in starts.iter().enumerate() {
        let end = starts.get(idx + 1).map_or(text.len(), |s| s.0);
        let body = &text[body_start..end];
        match answer_marker().find(body) {
            Some(m) => out.pairs.push(RawPair {
                question: body[..m.start()].trim().to_string(),
                answer: body[m.end()..].trim().to_string(),
                start,
                end: start + (body_start - start) + body.trim_end().len(),
            }),
            None => out.diagnostics.push(Diagnostic {
                kind: DiagnosticKind::MissingAnswer,
                start,
                end: body_start + body.trim_end().len(),
                message: "numbered item has no A: marker".into(),
            }),
        }
    }
    out
}

/// Inverse of [`parse_numbered_qa`] for well-formed pairs.
pub fn render_numbered_qa<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    pairs
        .into_iter()
        .enumerate()
        .map(|(i, (q, a))| format!("{}. Q: {q}\nA: {a}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}
