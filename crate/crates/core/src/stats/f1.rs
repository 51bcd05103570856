use serde::{Deserialize, Serialize};

use super::{check_aligned, StatsError};

/// Aggregated counts over all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Tally {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "positive")]
pub enum F1Mode {
    Micro,
    Binary(String),
}

/// Micro-averaged counts: a correct prediction is a TP of its class; a wrong
/// valid prediction is an FP of the predicted class and an FN of the true
/// class; an Invalid prediction is an FN of the true class.
pub fn tally<L: PartialEq>(predictions: &[Option<L>], truths: &[L]) -> Tally {
    let mut t = Tally::default();
    for (p, g) in predictions.iter().zip(truths) {
        match p {
            Some(p) if p == g => t.tp += 1,
            Some(_) => {
                t.fp += 1;
                t.fn_ += 1;
            }
            None => t.fn_ += 1,
        }
    }
    t
}

pub fn micro_f1<L: PartialEq>(predictions: &[Option<L>], truths: &[L]) -> Result<f64, StatsError> {
    check_aligned(predictions, truths)?;
    Ok(tally(predictions, truths).f1())
}

pub(crate) fn binary_tally<L: PartialEq>(
    predictions: &[Option<L>],
    truths: &[L],
    positive: &L,
) -> Tally {
    let mut t = Tally::default();
    for (p, g) in predictions.iter().zip(truths) {
        let pred_pos = p.as_ref() == Some(positive);
        let true_pos = g == positive;
        match (pred_pos, true_pos) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => {}
        }
    }
    t
}

/// F1 of the `positive` class alone. Zero when the class never occurs in
/// either sequence.
pub fn binary_f1<L: PartialEq>(
    predictions: &[Option<L>],
    truths: &[L],
    positive: &L,
) -> Result<f64, StatsError> {
    check_aligned(predictions, truths)?;
    Ok(binary_tally(predictions, truths, positive).f1())
}

pub(crate) fn score<L: PartialEq>(
    mode: &F1Mode,
    predictions: &[Option<L>],
    truths: &[L],
    positive: Option<&L>,
) -> f64 {
    match (mode, positive) {
        (F1Mode::Binary(_), Some(pos)) => binary_tally(predictions, truths, pos).f1(),
        _ => tally(predictions, truths).f1(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixtures() {
        let gt = ["a", "b", "c"];
        assert_eq!(
            micro_f1(&[Some("a"), Some("b"), Some("c")], &gt).unwrap(),
            1.0
        );
        assert_eq!(micro_f1(&[None, None, None], &gt).unwrap(), 0.0);
        assert_eq!(
            Tally {
                tp: 3,
                fp: 1,
                fn_: 2
            }
            .f1(),
            6.0 / 9.0
        );
        assert_eq!(micro_f1::<&str>(&[], &[]), Err(StatsError::Empty));
        assert!(matches!(
            micro_f1(&[None], &gt),
            Err(StatsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn three_class_example() {
        // TP=3, one wrong valid prediction (FP+FN) and one Invalid (FN).
        let gt = ["a", "a", "b", "c", "c"];
        let pred = [Some("a"), Some("b"), Some("b"), Some("c"), None];
        let t = tally(&pred, &gt);
        assert_eq!(
            t,
            Tally {
                tp: 3,
                fp: 1,
                fn_: 2
            }
        );
        assert!((micro_f1(&pred, &gt).unwrap() - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn binary_mode() {
        let gt = ["u", "u", "r", "n"];
        let pred = [Some("u"), None, Some("u"), Some("n")];
        assert_eq!(binary_f1(&pred, &gt, &"u").unwrap(), 2.0 / 4.0);
        assert_eq!(binary_f1(&[Some("r")], &["r"], &"u").unwrap(), 0.0);
    }

    /// Independent oracle: per-class one-vs-rest counts summed over classes.
    fn per_class_oracle(pred: &[Option<u8>], gt: &[u8], k: u8) -> f64 {
        let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
        for c in 0..k {
            for i in 0..gt.len() {
                let p = pred[i] == Some(c);
                let g = gt[i] == c;
                tp += (p && g) as u64;
                fp += (p && !g) as u64;
                fnn += (!p && g) as u64;
            }
        }
        let d = 2 * tp + fp + fnn;
        if d == 0 {
            0.0
        } else {
            2.0 * tp as f64 / d as f64
        }
    }

    proptest! {
        #[test]
        fn matches_per_class_oracle(data in proptest::collection::vec((0u8..4, proptest::option::of(0u8..4)), 1..40)) {
            let gt: Vec<u8> = data.iter().map(|d| d.0).collect();
            let pred: Vec<Option<u8>> = data.iter().map(|d| d.1).collect();
            prop_assert_eq!(micro_f1(&pred, &gt).unwrap(), per_class_oracle(&pred, &gt, 4));
        }
    }
}
