use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{check_aligned, StatsError};

const INVALID_COLUMN: &str = "Invalid";

/// Rows are ground truth, columns are predictions with a trailing Invalid
/// column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let width = labels.len() + 1;
        let counts = vec![vec![0; width]; labels.len()];
        Self { labels, counts }
    }

    fn index(&self, label: &str) -> Result<usize, StatsError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| StatsError::UnknownLabel(label.to_string()))
    }

    pub fn add(&mut self, prediction: Option<&str>, truth: &str) -> Result<(), StatsError> {
        let row = self.index(truth)?;
        let col = match prediction {
            Some(p) => self.index(p)?,
            None => self.labels.len(),
        };
        self.counts[row][col] += 1;
        Ok(())
    }

    pub fn from_predictions<P: AsRef<str>, T: AsRef<str>>(
        labels: Vec<String>,
        predictions: &[Option<P>],
        truths: &[T],
    ) -> Result<Self, StatsError> {
        check_aligned(predictions, truths)?;
        let mut m = Self::new(labels);
        for (p, t) in predictions.iter().zip(truths) {
            m.add(p.as_ref().map(AsRef::as_ref), t.as_ref())?;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn invalid_total(&self) -> u64 {
        self.counts.iter().map(|r| r[self.labels.len()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Header row of prediction labels, then one row per ground-truth label.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["ground_truth".to_string()];
        header.extend(self.labels.iter().cloned());
        header.push(INVALID_COLUMN.to_string());
        w.write_record(&header).expect("write to memory");
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }

    pub fn render_text(&self) -> String {
        let mut cols: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        cols.push(INVALID_COLUMN);
        let first = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("truth \\ pred".len());
        let widths: Vec<usize> = cols.iter().map(|c| c.len().max(5)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", "truth \\ pred");
        for (c, w) in cols.iter().zip(&widths) {
            let _ = write!(out, " | {c:>w$}");
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(out, "{label:<first$}");
            for (n, w) in row.iter().zip(&widths) {
                let _ = write!(out, " | {n:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> Vec<String> {
        ["a", "b", "c"].map(String::from).to_vec()
    }

    #[test]
    fn counts_and_csv() {
        let m = ConfusionMatrix::from_predictions(
            labels(),
            &[Some("a"), Some("b"), None, Some("a")],
            &["a", "a", "c", "c"],
        )
        .unwrap();
        assert_eq!(
            m.counts,
            vec![vec![1, 1, 0, 0], vec![0, 0, 0, 0], vec![1, 0, 0, 1]]
        );
        assert_eq!(m.invalid_total(), 1);
        assert_eq!(m.correct(), 1);
        assert_eq!(
            m.to_csv(),
            "ground_truth,a,b,c,Invalid\na,1,1,0,0\nb,0,0,0,0\nc,1,0,0,1\n"
        );
        assert!(m.render_text().contains("Invalid"));
    }

    #[test]
    fn unknown_label_is_an_error() {
        let r = ConfusionMatrix::from_predictions(labels(), &[Some("z")], &["a"]);
        assert_eq!(r, Err(StatsError::UnknownLabel("z".into())));
    }

    proptest! {
        #[test]
        fn bookkeeping(data in proptest::collection::vec((0usize..3, proptest::option::of(0usize..3)), 1..60)) {
            let names = labels();
            let gt: Vec<&str> = data.iter().map(|d| names[d.0].as_str()).collect();
            let pred: Vec<Option<&str>> = data.iter().map(|d| d.1.map(|i| names[i].as_str())).collect();
            let m = ConfusionMatrix::from_predictions(names.clone(), &pred, &gt).unwrap();
            prop_assert_eq!(m.total(), data.len() as u64);
            for (i, n) in names.iter().enumerate() {
                prop_assert_eq!(m.row_sums()[i], gt.iter().filter(|g| *g == n).count() as u64);
            }
            prop_assert_eq!(m.invalid_total(), pred.iter().filter(|p| p.is_none()).count() as u64);
        }
    }
}
