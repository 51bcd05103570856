use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CorpusError, ImageMeta};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self, CorpusError> {
        let sum = train + val + test;
        let ok = [train, val, test]
            .iter()
            .all(|f| f.is_finite() && *f >= 0.0);
        if !ok || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadFractions(sum));
        }
        Ok(Self { train, val, test })
    }

    pub fn get(&self, split: Split) -> f64 {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub patients: usize,
    pub images: usize,
}

/// Image-to-split assignment, total over the corpus it was built from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub fractions: Option<SplitFractions>,
    pub assignments: BTreeMap<String, Split>,
    pub summary: BTreeMap<Split, SplitCounts>,
}

impl SplitAssignment {
    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.assignments.get(image_id).copied()
    }

    pub fn images_in(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignments
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(id, _)| id.as_str())
    }

    pub fn counts(&self, split: Split) -> SplitCounts {
        self.summary.get(&split).copied().unwrap_or_default()
    }

    pub fn load(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Assigns whole patients to splits.
///
/// Patients are shuffled with `rng_seed`, then visited largest first (ties
/// keep the shuffled order); each goes to the split whose image count is
/// furthest below its target, ties resolved train, val, test. The result
/// depends only on the set of images and the seed.
pub fn make_splits(
    corpus: &[ImageMeta],
    fractions: SplitFractions,
    rng_seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    let mut patients: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for img in corpus {
        if !seen.insert(img.image_id.as_str()) {
            return Err(CorpusError::DuplicateImage(img.image_id.clone()));
        }
        patients
            .entry(img.patient_id.as_str())
            .or_default()
            .push(img.image_id.as_str());
    }
    if patients.is_empty() {
        return Err(CorpusError::NoPatients);
    }

    let mut groups: Vec<(&str, Vec<&str>)> = patients.into_iter().collect();
    groups.shuffle(&mut rng::seeded(rng_seed));
    groups.sort_by(|a, b| b.1.len().cmp(&a.1.len()));

    let total = corpus.len() as f64;
    let targets: Vec<f64> = Split::ALL
        .iter()
        .map(|s| fractions.get(*s) * total)
        .collect();
    let mut filled = [0usize; 3];
    let mut summary: BTreeMap<Split, SplitCounts> = Split::ALL
        .iter()
        .map(|s| (*s, SplitCounts::default()))
        .collect();
    let mut assignments = BTreeMap::new();

    for (_, images) in groups {
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (i, target) in targets.iter().enumerate() {
            let deficit = target - filled[i] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = i;
            }
        }
        let split = Split::ALL[best];
        filled[best] += images.len();
        let counts = summary.get_mut(&split).expect("all splits present");
        counts.patients += 1;
        counts.images += images.len();
        for id in images {
            assignments.insert(id.to_string(), split);
        }
    }

    Ok(SplitAssignment {
        seed: rng_seed,
        fractions: Some(fractions),
        assignments,
        summary,
    })
}
