use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Correctness,
    Completeness,
    Conciseness,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Self::Correctness, Self::Completeness, Self::Conciseness];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Correctness => "correctness",
            Self::Completeness => "completeness",
            Self::Conciseness => "conciseness",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One score on one criterion for a report by `author`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRating {
    pub author: String,
    pub rater_id: String,
    pub item_id: String,
    pub criterion: Criterion,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertRow {
    pub author: String,
    pub criterion: Criterion,
    /// Counts for scores 1 through 5.
    pub counts: [u64; 5],
    pub n: u64,
    /// Ratings of 4 or 5.
    pub agree: u64,
    pub agree_fraction: f64,
}

/// Distribution per author and criterion, sorted by author then criterion.
pub fn likert_summary(ratings: &[LikertRating]) -> Result<Vec<LikertRow>, StatsError> {
    let mut groups: BTreeMap<(String, Criterion), [u64; 5]> = BTreeMap::new();
    for r in ratings {
        if !(1..=5).contains(&r.score) {
            return Err(StatsError::InvalidRating { score: r.score });
        }
        groups.entry((r.author.clone(), r.criterion)).or_default()[(r.score - 1) as usize] += 1;
    }
    Ok(groups
        .into_iter()
        .map(|((author, criterion), counts)| {
            let n: u64 = counts.iter().sum();
            let agree = counts[3] + counts[4];
            LikertRow {
                author,
                criterion,
                counts,
                n,
                agree,
                agree_fraction: agree as f64 / n as f64,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(author: &str, criterion: Criterion, score: u8) -> LikertRating {
        LikertRating {
            author: author.into(),
            rater_id: "r1".into(),
            item_id: "x".into(),
            criterion,
            score,
        }
    }

    #[test]
    fn agree_fraction() {
        let mut rs: Vec<LikertRating> = (0..28)
            .map(|i| {
                rating(
                    "model_a",
                    Criterion::Correctness,
                    if i < 22 { 4 + (i % 2) as u8 } else { 2 },
                )
            })
            .collect();
        rs.extend((0..5).map(|_| rating("human", Criterion::Correctness, 3)));
        let rows = likert_summary(&rs).unwrap();
        let a = rows.iter().find(|r| r.author == "model_a").unwrap();
        assert_eq!((a.n, a.agree), (28, 22));
        assert_eq!(format!("{:.1}", a.agree_fraction * 100.0), "78.6");
        let h = rows.iter().find(|r| r.author == "human").unwrap();
        assert_eq!(h.agree_fraction, 0.0);
    }

    #[test]
    fn hand_counted_distribution() {
        let scores = [1, 5, 3, 3, 4, 2, 5, 5];
        let rs: Vec<_> = scores
            .iter()
            .map(|&s| rating("a", Criterion::Conciseness, s))
            .collect();
        let rows = likert_summary(&rs).unwrap();
        assert_eq!(rows[0].counts, [1, 1, 2, 1, 3]);
        assert_eq!(rows[0].agree, 4);
    }

    #[test]
    fn out_of_range() {
        assert_eq!(
            likert_summary(&[rating("a", Criterion::Completeness, 6)]),
            Err(StatsError::InvalidRating { score: 6 })
        );
    }
}
