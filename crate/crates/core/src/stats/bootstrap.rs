use std::collections::BTreeMap;
use std::fmt::Display;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::f1::{score, F1Mode};
use super::{check_aligned, StatsError};
use crate::rng::{stream, SeededRng};

/// Draws the case indices for one bootstrap replicate.
pub trait Resampler: Send + Sync {
    fn name(&self) -> &str;

    fn resample(&self, n: usize, rng: &mut SeededRng) -> Vec<usize>;
}

/// Uniform draws with replacement.
pub struct WithReplacement;

impl Resampler for WithReplacement {
    fn name(&self) -> &str {
        "with_replacement"
    }

    fn resample(&self, n: usize, rng: &mut SeededRng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    }
}

/// The full sample, in order. Collapses the interval to the point estimate.
pub struct Identity;

impl Resampler for Identity {
    fn name(&self) -> &str {
        "identity"
    }

    fn resample(&self, n: usize, _rng: &mut SeededRng) -> Vec<usize> {
        (0..n).collect()
    }
}

/// Resamplers by name.
pub struct ResamplerRegistry {
    resamplers: BTreeMap<String, Arc<dyn Resampler>>,
}

impl Default for ResamplerRegistry {
    fn default() -> Self {
        let mut r = Self {
            resamplers: BTreeMap::new(),
        };
        r.register(Arc::new(WithReplacement));
        r.register(Arc::new(Identity));
        r
    }
}

impl ResamplerRegistry {
    pub fn register(&mut self, resampler: Arc<dyn Resampler>) {
        self.resamplers
            .insert(resampler.name().to_string(), resampler);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Resampler>, StatsError> {
        self.resamplers.get(name).cloned().ok_or_else(|| {
            StatsError::BadParameter(format!(
                "unknown resampler '{name}' (known: {})",
                self.resamplers
                    .keys()
                    .cloned()
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            seed: 0,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1WithCi {
    pub f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
    pub seed: u64,
    pub level: f64,
    #[serde(flatten)]
    pub mode: F1Mode,
    pub interval_method: String,
    pub resampler: String,
}

/// Linear-interpolation quantile of sorted data (the common "type 7"
/// definition).
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for micro-F1, or for binary F1 when
/// `positive` is given. Replicate `b` draws from stream `(seed, b)`, so the
/// result does not depend on evaluation order.
pub fn bootstrap_ci<L: PartialEq + Display + Clone>(
    predictions: &[Option<L>],
    truths: &[L],
    positive: Option<&L>,
    cfg: &BootstrapConfig,
    resampler: &dyn Resampler,
) -> Result<F1WithCi, StatsError> {
    check_aligned(predictions, truths)?;
    if cfg.n_resamples == 0 {
        return Err(StatsError::BadParameter(
            "n_resamples must be at least 1".into(),
        ));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(StatsError::BadParameter(format!(
            "level {} outside (0, 1)",
            cfg.level
        )));
    }
    let mode = match positive {
        Some(p) => F1Mode::Binary(p.to_string()),
        None => F1Mode::Micro,
    };
    let point = score(&mode, predictions, truths, positive);
    let n = truths.len();
    let mut stats: Vec<f64> = (0..cfg.n_resamples)
        .map(|b| {
            let mut rng = stream(cfg.seed, b as u64);
            let idx = resampler.resample(n, &mut rng);
            let p: Vec<Option<L>> = idx.iter().map(|&i| predictions[i].clone()).collect();
            let g: Vec<L> = idx.iter().map(|&i| truths[i].clone()).collect();
            score(&mode, &p, &g, positive)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = (1.0 - cfg.level) / 2.0;
    Ok(F1WithCi {
        f1: point,
        ci_low: percentile(&stats, alpha),
        ci_high: percentile(&stats, 1.0 - alpha),
        n_bootstrap: cfg.n_resamples,
        seed: cfg.seed,
        level: cfg.level,
        mode,
        interval_method: "percentile".into(),
        resampler: resampler.name().into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&x, 0.0), 1.0);
        assert_eq!(percentile(&x, 0.5), 3.0);
        assert_eq!(percentile(&x, 0.125), 1.5);
        assert_eq!(percentile(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn perfect_predictions_give_degenerate_interval() {
        let gt: Vec<u8> = (0..30).map(|i| i % 3).collect();
        let pred: Vec<Option<u8>> = gt.iter().copied().map(Some).collect();
        let r = bootstrap_ci(
            &pred,
            &gt,
            None,
            &BootstrapConfig::default(),
            &WithReplacement,
        )
        .unwrap();
        assert_eq!((r.f1, r.ci_low, r.ci_high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn identity_resampler_collapses_to_point() {
        let gt = [0u8, 1, 2, 0, 1];
        let pred = [Some(0u8), None, Some(1), Some(0), Some(1)];
        let cfg = BootstrapConfig {
            n_resamples: 1,
            ..BootstrapConfig::default()
        };
        let r = bootstrap_ci(&pred, &gt, None, &cfg, &Identity).unwrap();
        assert_eq!(r.ci_low, r.f1);
        assert_eq!(r.ci_high, r.f1);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let gt: Vec<u8> = (0..50).map(|i| (i * 7 % 4) as u8).collect();
        let pred: Vec<Option<u8>> = (0..50)
            .map(|i| {
                if i % 5 == 0 {
                    None
                } else {
                    Some((i * 3 % 4) as u8)
                }
            })
            .collect();
        let cfg = BootstrapConfig {
            seed: 42,
            ..BootstrapConfig::default()
        };
        let a = bootstrap_ci(&pred, &gt, None, &cfg, &WithReplacement).unwrap();
        let b = bootstrap_ci(&pred, &gt, None, &cfg, &WithReplacement).unwrap();
        assert_eq!(a, b);
        assert!(a.ci_low <= a.ci_high);
    }

    /// Second implementation: scores each replicate from per-case outcome
    /// codes and reads bounds by nearest rank.
    fn reference_ci(pred: &[Option<u8>], gt: &[u8], seed: u64, n_boot: usize) -> (f64, f64) {
        // 0 = correct, 1 = wrong label (FP and FN), 2 = Invalid (FN only)
        let outcome: Vec<u8> = pred
            .iter()
            .zip(gt)
            .map(|(p, g)| match p {
                Some(p) if p == g => 0,
                Some(_) => 1,
                None => 2,
            })
            .collect();
        let n = outcome.len();
        let mut reps = Vec::with_capacity(n_boot);
        for b in 0..n_boot {
            let mut rng = stream(seed, b as u64);
            let mut counts = [0u64; 3];
            for _ in 0..n {
                counts[outcome[rng.gen_range(0..n)] as usize] += 1;
            }
            let tp = counts[0] as f64;
            let errors = 2.0 * counts[1] as f64 + counts[2] as f64;
            reps.push(if tp + errors == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + errors)
            });
        }
        reps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let at = |q: f64| reps[((n_boot - 1) as f64 * q).round() as usize];
        (at(0.025), at(0.975))
    }

    #[test]
    fn agrees_with_reference_resampler() {
        let mut rng = crate::rng::seeded(5);
        let gt: Vec<u8> = (0..50).map(|_| rng.gen_range(0..4)).collect();
        let pred: Vec<Option<u8>> = gt
            .iter()
            .map(|&g| match rng.gen_range(0..10) {
                0..=5 => Some(g),
                6..=8 => Some((g + 1) % 4),
                _ => None,
            })
            .collect();
        let cfg = BootstrapConfig {
            seed: 99,
            ..BootstrapConfig::default()
        };
        let r = bootstrap_ci(&pred, &gt, None, &cfg, &WithReplacement).unwrap();
        let (lo, hi) = reference_ci(&pred, &gt, 99, 1000);
        assert!((r.ci_low - lo).abs() <= 0.01, "{} vs {lo}", r.ci_low);
        assert!((r.ci_high - hi).abs() <= 0.01, "{} vs {hi}", r.ci_high);
        assert!(r.ci_low <= r.f1 && r.f1 <= r.ci_high);
    }

    #[test]
    fn registry_lookup() {
        let r = ResamplerRegistry::default();
        assert_eq!(r.get("identity").unwrap().name(), "identity");
        assert!(r.get("bca").is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        let cfg = BootstrapConfig {
            n_resamples: 0,
            ..BootstrapConfig::default()
        };
        assert!(bootstrap_ci(&[Some(1u8)], &[1u8], None, &cfg, &WithReplacement).is_err());
    }
}
