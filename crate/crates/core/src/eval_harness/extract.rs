use serde::{Deserialize, Serialize};

/// Closed set of label strings searched for in generated text. Each needle
/// maps to the label it votes for; several needles may share a label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    needles: Vec<(String, String)>,
}

impl LabelSet {
    pub fn new<N: Into<String>, L: Into<String>>(
        needles: impl IntoIterator<Item = (N, L)>,
    ) -> Self {
        Self {
            needles: needles
                .into_iter()
                .map(|(n, l)| (n.into(), l.into()))
                .collect(),
        }
    }

    /// One needle per label, identical to the label.
    pub fn verbatim<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            labels
                .into_iter()
                .map(|l| (l.as_ref().to_string(), l.as_ref().to_string())),
        )
    }

    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (_, l) in &self.needles {
            if !out.contains(&l.as_str()) {
                out.push(l);
            }
        }
        out
    }

    pub fn contains_label(&self, label: &str) -> bool {
        self.needles.iter().any(|(_, l)| l == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionTrace {
    pub matched: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Extraction {
    pub label: Option<String>,
    pub trace: Option<ExtractionTrace>,
    pub ambiguous: bool,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn matches_at(hay: &[u8], at: usize, needle: &[u8]) -> bool {
    if at + needle.len() > hay.len() || !hay[at..at + needle.len()].eq_ignore_ascii_case(needle) {
        return false;
    }
    let left_ok = at == 0 || !is_word_byte(hay[at - 1]) || !is_word_byte(needle[0]);
    let end = at + needle.len();
    let right_ok =
        end == hay.len() || !is_word_byte(hay[end]) || !is_word_byte(needle[needle.len() - 1]);
    left_ok && right_ok
}

/// All non-overlapping label occurrences, scanning left to right and taking
/// the longest needle at each position. Matching ignores ASCII case and
/// requires word boundaries, so "nearly" never yields "early" and the "present"
/// inside "not present" is not a separate occurrence.
pub fn occurrences<'s>(text: &str, set: &'s LabelSet) -> Vec<(usize, &'s str, &'s str)> {
    let hay = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < hay.len() {
        let best = set
            .needles
            .iter()
            .filter(|(n, _)| !n.is_empty() && matches_at(hay, i, n.as_bytes()))
            .max_by_key(|(n, _)| n.len());
        match best {
            Some((n, l)) => {
                out.push((i, n.as_str(), l.as_str()));
                i += n.len();
            }
            None => i += 1,
        }
    }
    out
}

/// Earliest label in `text`. `ambiguous` is set when two or more distinct
/// labels occur anywhere in the text.
pub fn extract_label(text: &str, set: &LabelSet) -> Extraction {
    let occ = occurrences(text, set);
    let Some(&(offset, _, label)) = occ.first() else {
        return Extraction::default();
    };
    let ambiguous = occ.iter().any(|(_, _, l)| *l != label);
    Extraction {
        label: Some(label.to_string()),
        trace: Some(ExtractionTrace {
            matched: text[offset..offset + occ[0].1.len()].to_string(),
            offset,
        }),
        ambiguous,
    }
}
