use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    bootstrap_ci, false_discovery_rate, mcnemar, BootstrapConfig, ConfusionMatrix, F1WithCi,
    FdrResult, McNemarResult, Resampler, StatsError,
};
use crate::eval_harness::{EvalTask, GenerationTranscript, TaskKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub task: TaskKind,
    pub endpoint_id: String,
    pub dialect: String,
    pub n: usize,
    pub invalid: usize,
    pub ambiguous: usize,
    pub endpoint_errors: usize,
    /// Transcripts without ground truth, left out of every metric.
    pub unlabelled: usize,
    pub micro: F1WithCi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binary: Option<F1WithCi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdr: Option<FdrResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fdr_note: Option<String>,
    pub confusion: ConfusionMatrix,
}

/// Scores one run. All transcripts must belong to `task`.
pub fn evaluate_run(
    transcripts: &[GenerationTranscript],
    task: &dyn EvalTask,
    cfg: &BootstrapConfig,
    resampler: &dyn Resampler,
) -> Result<RunMetrics, StatsError> {
    let kind = task.kind();
    if let Some(t) = transcripts.iter().find(|t| t.task != kind) {
        return Err(StatsError::BadParameter(format!(
            "transcript for {} has task {}, expected {kind}",
            t.image_id, t.task
        )));
    }
    let labelled: Vec<&GenerationTranscript> = transcripts
        .iter()
        .filter(|t| t.ground_truth.is_some())
        .collect();
    let preds: Vec<Option<String>> = labelled.iter().map(|t| t.extracted_label.clone()).collect();
    let truths: Vec<String> = labelled
        .iter()
        .map(|t| t.ground_truth.clone().unwrap_or_default())
        .collect();

    let confusion = ConfusionMatrix::from_predictions(task.labels(), &preds, &truths)?;
    let micro = bootstrap_ci(&preds, &truths, None, cfg, resampler)?;
    let positive = task.positive_label().map(String::from);
    let binary = positive
        .as_ref()
        .map(|p| bootstrap_ci(&preds, &truths, Some(p), cfg, resampler))
        .transpose()?;
    let (fdr, fdr_note) = match positive
        .as_ref()
        .map(|p| false_discovery_rate(&preds, &truths, p))
    {
        None => (None, None),
        Some(Ok(r)) => (Some(r), None),
        Some(Err(e)) => (None, Some(e.to_string())),
    };
    let first = transcripts.first();
    Ok(RunMetrics {
        task: kind,
        endpoint_id: first.map(|t| t.endpoint_id.clone()).unwrap_or_default(),
        dialect: first.map(|t| t.dialect.clone()).unwrap_or_default(),
        n: labelled.len(),
        invalid: preds.iter().filter(|p| p.is_none()).count(),
        ambiguous: labelled.iter().filter(|t| t.ambiguity_flag).count(),
        endpoint_errors: labelled
            .iter()
            .filter(|t| t.endpoint_error.is_some())
            .count(),
        unlabelled: transcripts.len() - labelled.len(),
        micro,
        binary,
        fdr,
        fdr_note,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub task: TaskKind,
    pub run_a: String,
    pub run_b: String,
    pub n_paired: usize,
    /// Images present in only one of the two runs.
    pub unpaired: usize,
    pub mcnemar: McNemarResult,
}

fn run_name(ts: &[GenerationTranscript]) -> String {
    ts.first()
        .map(|t| format!("{}/{}", t.endpoint_id, t.dialect))
        .unwrap_or_default()
}

/// Paired McNemar test between two runs of the same task, joined on image id.
pub fn compare_runs(
    a: &[GenerationTranscript],
    b: &[GenerationTranscript],
) -> Result<Comparison, StatsError> {
    let task = a.first().ok_or(StatsError::Empty)?.task.clone();
    if a.iter().chain(b).any(|t| t.task != task) {
        return Err(StatsError::BadParameter(
            "runs cover different tasks".into(),
        ));
    }
    let correct =
        |t: &GenerationTranscript| t.ground_truth.is_some() && t.extracted_label == t.ground_truth;
    let by_image: HashMap<&str, &GenerationTranscript> =
        b.iter().map(|t| (t.image_id.as_str(), t)).collect();
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    for t in a {
        if let Some(u) = by_image.get(t.image_id.as_str()) {
            ca.push(correct(t));
            cb.push(correct(u));
        }
    }
    let n_paired = ca.len();
    Ok(Comparison {
        task,
        run_a: run_name(a),
        run_b: run_name(b),
        n_paired,
        unpaired: a.len() + b.len() - 2 * n_paired,
        mcnemar: mcnemar(&ca, &cb)?,
    })
}

fn ci(f: &F1WithCi) -> String {
    format!("{:.2} [{:.2}, {:.2}]", f.f1, f.ci_low, f.ci_high)
}

/// One row per run, then one line per comparison.
pub fn render_text_table(runs: &[RunMetrics], comparisons: &[Comparison]) -> String {
    let header = [
        "task",
        "endpoint",
        "dialect",
        "N",
        "invalid",
        "micro F1 [95% CI]",
        "binary F1",
        "FDR",
    ];
    let rows: Vec<[String; 8]> = runs
        .iter()
        .map(|m| {
            [
                m.task.to_string(),
                m.endpoint_id.clone(),
                m.dialect.clone(),
                m.n.to_string(),
                m.invalid.to_string(),
                ci(&m.micro),
                m.binary.as_ref().map(ci).unwrap_or_else(|| "-".into()),
                m.fdr
                    .map(|f| format!("{:.3}", f.fdr))
                    .unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join(" | ").trim_end());
        out.push('\n');
    };
    line(&mut out, &header);
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for r in &rows {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    for c in comparisons {
        let _ = writeln!(
            out,
            "{}: {} vs {}: b={} c={} p={:.4} ({}) {}",
            c.task,
            c.run_a,
            c.run_b,
            c.mcnemar.b,
            c.mcnemar.c,
            c.mcnemar.p_value,
            c.mcnemar.method.as_str(),
            c.mcnemar.stars
        );
    }
    out
}
