use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use svqa_core::eval_harness::{
    load_cases, run_task, serve, DialectRegistry, EndpointContext, EndpointRegistry, EvalConfig,
    GenerationTranscript, TaskKind,
};
use svqa_core::rng::derive_seed;
use svqa_core::stats::{
    compare_runs, evaluate_run, render_text_table, severity_sensitivity, BootstrapConfig,
    Comparison, ResamplerRegistry,
};
use svqa_core::{read_jsonl, write_jsonl};

use crate::ctx::{add_input, add_output, write_json, write_text, Ctx, Outcome};

#[derive(Args)]
pub struct EvaluateArgs {
    /// staging, referral or biomarker:<name>.
    #[arg(long, required_unless_present = "biomarker")]
    task: Option<String>,
    /// Shorthand for --task biomarker:<name>.
    #[arg(long, conflicts_with = "task")]
    biomarker: Option<String>,
    /// mock:oracle, mock:adversarial or an http(s) base URL.
    #[arg(long)]
    endpoint: String,
    /// Prompt dialect: native, med_flamingo or llava_med.
    #[arg(long)]
    dialect: Option<String>,
    /// Evaluation cases JSONL (default: config `evaluate.cases`).
    #[arg(long)]
    cases: Option<PathBuf>,
    /// Name of the run directory under runs/.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
pub struct MetricsArgs {
    /// Run ids under runs/.
    #[arg(long = "run", required = true, num_args = 1..)]
    runs: Vec<String>,
    /// Pairs of run ids to test against each other, as `a,b`.
    #[arg(long, num_args = 1..)]
    compare: Vec<String>,
}

#[derive(Args)]
pub struct ServeArgs {
    /// oracle or adversarial.
    #[arg(long, default_value = "oracle")]
    mode: String,
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:0")]
    addr: String,
    #[arg(long, default_value_t = 4)]
    threads: usize,
}

/// Written next to the transcripts so `metrics` can rebuild the task.
#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    run_id: String,
    task: TaskKind,
    endpoint: String,
    dialect: String,
    cases: PathBuf,
    n_cases: usize,
    n_transcripts: usize,
    endpoint_errors: usize,
    skipped: Vec<String>,
    config: EvalConfig,
}

fn run_dir(id: &str) -> PathBuf {
    Path::new("runs").join(id)
}

fn slug(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    while out.contains("__") {
        out = out.replace("__", "_");
    }
    out.trim_matches('_').to_string()
}

fn cases_path(ctx: &Ctx, explicit: Option<PathBuf>) -> Result<PathBuf> {
    explicit
        .or_else(|| ctx.file.evaluate.cases.clone())
        .ok_or_else(|| anyhow!("missing config key `evaluate.cases` (or pass --cases)"))
}

pub fn evaluate(ctx: &Ctx, args: EvaluateArgs) -> Result<Outcome> {
    let task_name = match (&args.task, &args.biomarker) {
        (Some(t), _) => t.clone(),
        (None, Some(b)) => format!("biomarker:{b}"),
        (None, None) => bail!("one of --task or --biomarker is required"),
    };
    let kind: TaskKind = task_name.parse()?;
    let schema = ctx.schema()?;
    let task = kind.build(&schema)?;
    let ev = &ctx.file.evaluate;
    let dialect_name = args
        .dialect
        .or_else(|| ev.dialect.clone())
        .unwrap_or_else(|| "native".into());
    let dialect = DialectRegistry::default().get(&dialect_name)?;
    let defaults = EvalConfig::default();
    let cfg = EvalConfig {
        phase1_max_new_tokens: ev
            .phase1_max_new_tokens
            .unwrap_or(defaults.phase1_max_new_tokens),
        phase2_max_new_tokens: ev
            .phase2_max_new_tokens
            .unwrap_or(defaults.phase2_max_new_tokens),
        parallelism: ctx.parallel,
        ..defaults
    };
    let timeout = Duration::from_secs(ev.timeout_secs.unwrap_or(120));
    let cases_rel = cases_path(ctx, args.cases)?;
    let run_id = match args.run_id {
        Some(id) => slug(&id),
        None => slug(&format!("{kind}-{}-{dialect_name}", args.endpoint)),
    };
    if run_id.is_empty() {
        bail!("run id is empty after removing unsafe characters");
    }

    let mut m = ctx.manifest(
        "evaluate",
        &json!({
            "run_id": run_id,
            "task": kind,
            "endpoint": args.endpoint,
            "dialect": dialect_name,
            "cases": cases_rel,
            "eval": cfg,
            "timeout_secs": timeout.as_secs(),
        }),
    );
    add_input(&mut m, ctx, &cases_rel)?;
    let cases = load_cases(&ctx.path(&cases_rel))?;
    let endpoint = EndpointRegistry::default().build(
        &args.endpoint,
        &EndpointContext {
            cases: &cases,
            timeout,
        },
    )?;

    let run = run_task(
        &cases,
        task.as_ref(),
        endpoint.as_ref(),
        dialect.as_ref(),
        &cfg,
    );
    for t in &run.transcripts {
        if let Some(e) = &t.endpoint_error {
            m.error(format!("{}: {e}", t.image_id));
        }
    }
    if !run.skipped.is_empty() {
        m.note(format!(
            "{} cases have no ground truth for {kind} and were skipped",
            run.skipped.len()
        ));
    }

    let dir = run_dir(&run_id);
    let transcripts_path = dir.join("transcripts.jsonl");
    write_jsonl(&ctx.path(&transcripts_path), &run.transcripts)?;
    let record = RunRecord {
        run_id: run_id.clone(),
        task: kind.clone(),
        endpoint: args.endpoint.clone(),
        dialect: dialect_name,
        cases: cases_rel,
        n_cases: cases.len(),
        n_transcripts: run.transcripts.len(),
        endpoint_errors: run.errors(),
        skipped: run.skipped.clone(),
        config: cfg,
    };
    let record_path = dir.join("run.json");
    write_json(&ctx.path(&record_path), &record)?;
    add_output(&mut m, ctx, &transcripts_path)?;
    add_output(&mut m, ctx, &record_path)?;
    let invalid = run.transcripts.iter().filter(|t| t.is_invalid()).count();
    println!(
        "{run_id}: {} transcripts, {invalid} invalid, {} endpoint errors",
        run.transcripts.len(),
        run.errors()
    );
    ctx.finish(&format!("evaluate-{run_id}"), m)
}

fn load_run(ctx: &Ctx, id: &str) -> Result<(RunRecord, Vec<GenerationTranscript>)> {
    let dir = ctx.path(run_dir(id));
    let text = std::fs::read_to_string(dir.join("run.json")).with_context(|| {
        format!("run '{id}' not found; run `svqa evaluate --run-id {id}` first")
    })?;
    let record: RunRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing runs/{id}/run.json"))?;
    let transcripts = read_jsonl(&dir.join("transcripts.jsonl"))?;
    Ok((record, transcripts))
}

pub fn metrics(ctx: &Ctx, args: MetricsArgs) -> Result<Outcome> {
    let mc = &ctx.file.metrics;
    let defaults = BootstrapConfig::default();
    let cfg = BootstrapConfig {
        n_resamples: mc.n_resamples.unwrap_or(defaults.n_resamples),
        seed: mc
            .seed
            .unwrap_or_else(|| derive_seed(ctx.seed, "bootstrap")),
        level: mc.level.unwrap_or(defaults.level),
    };
    let resampler_name = mc
        .resampler
        .clone()
        .unwrap_or_else(|| "with_replacement".into());
    let resampler = ResamplerRegistry::default().get(&resampler_name)?;
    let mut pairs = Vec::new();
    for c in &args.compare {
        match c.split_once(',') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => {
                pairs.push((a.to_string(), b.to_string()))
            }
            _ => bail!("--compare expects `run_a,run_b`, got '{c}'"),
        }
    }
    let mut ids: Vec<String> = args.runs.clone();
    for (a, b) in &pairs {
        for id in [a, b] {
            if !ids.contains(id) {
                ids.push(id.clone());
            }
        }
    }

    let mut m = ctx.manifest(
        "metrics",
        &json!({
            "runs": ids,
            "compare": args.compare,
            "bootstrap": cfg,
            "resampler": resampler_name,
        }),
    );
    m.seed("bootstrap", cfg.seed);
    m.note(format!(
        "confidence intervals: percentile bootstrap over cases, {} resamples, level {}, resampler {resampler_name}",
        cfg.n_resamples, cfg.level
    ));

    let schema = ctx.schema()?;
    let mut all = Vec::new();
    let mut loaded = Vec::new();
    for id in &ids {
        let dir = run_dir(id);
        add_input(&mut m, ctx, &dir.join("transcripts.jsonl"))?;
        let (record, transcripts) = load_run(ctx, id)?;
        let task = record.task.build(&schema)?;
        let metrics = evaluate_run(&transcripts, task.as_ref(), &cfg, resampler.as_ref())
            .with_context(|| format!("scoring run '{id}'"))?;
        if let Some(note) = &metrics.fdr_note {
            m.note(format!("{id}: {note}"));
        }
        if metrics.endpoint_errors > 0 {
            m.note(format!(
                "{id}: {} transcripts carry endpoint errors",
                metrics.endpoint_errors
            ));
        }
        let metrics_path = dir.join("metrics.json");
        let confusion_path = dir.join("confusion.csv");
        let table_path = dir.join("metrics.txt");
        write_json(&ctx.path(&metrics_path), &metrics)?;
        write_text(&ctx.path(&confusion_path), &metrics.confusion.to_csv())?;
        write_text(
            &ctx.path(&table_path),
            &format!(
                "{}\n{}",
                render_text_table(std::slice::from_ref(&metrics), &[]),
                metrics.confusion.render_text()
            ),
        )?;
        for p in [&metrics_path, &confusion_path, &table_path] {
            add_output(&mut m, ctx, p)?;
        }
        if let TaskKind::Biomarker(name) = &record.task {
            if let Ok(cases) = load_cases(&ctx.path(&record.cases)) {
                let table = severity_sensitivity(&transcripts, &cases, name, &[]);
                let p = dir.join("sensitivity.json");
                write_json(&ctx.path(&p), &table)?;
                add_output(&mut m, ctx, &p)?;
            } else {
                m.note(format!(
                    "{id}: cases file unavailable, severity sensitivity skipped"
                ));
            }
        }
        all.push(metrics);
        loaded.push((id.clone(), transcripts));
    }

    let mut comparisons: Vec<Comparison> = Vec::new();
    let mut done = BTreeSet::new();
    for (a, b) in &pairs {
        if !done.insert((a.clone(), b.clone())) {
            continue;
        }
        let ta = &loaded
            .iter()
            .find(|(id, _)| id == a)
            .expect("loaded above")
            .1;
        let tb = &loaded
            .iter()
            .find(|(id, _)| id == b)
            .expect("loaded above")
            .1;
        let mut c = compare_runs(ta, tb).with_context(|| format!("comparing {a} and {b}"))?;
        c.run_a = a.clone();
        c.run_b = b.clone();
        m.note(format!(
            "{a} vs {b}: McNemar {} test (b + c = {})",
            c.mcnemar.method.as_str(),
            c.mcnemar.b + c.mcnemar.c
        ));
        if c.unpaired > 0 {
            m.note(format!(
                "{a} vs {b}: {} images appear in only one run",
                c.unpaired
            ));
        }
        let p = Path::new("comparisons").join(format!("{a}__vs__{b}.json"));
        write_json(&ctx.path(&p), &c)?;
        add_output(&mut m, ctx, &p)?;
        comparisons.push(c);
    }

    let table = render_text_table(&all, &comparisons);
    print!("{table}");
    let name = if ids.len() == 1 {
        format!("metrics-{}", ids[0])
    } else {
        format!("metrics-{}", slug(&ids.join("+")))
    };
    ctx.finish(&name, m)
}

pub fn serve_mock(ctx: &Ctx, args: ServeArgs) -> Result<Outcome> {
    let cases = match cases_path(ctx, args.cases) {
        Ok(p) => load_cases(&ctx.path(&p))?,
        Err(e) if args.mode == "oracle" => return Err(e),
        Err(_) => Vec::new(),
    };
    let endpoint = EndpointRegistry::default().build(
        &format!("mock:{}", args.mode),
        &EndpointContext {
            cases: &cases,
            timeout: Duration::from_secs(30),
        },
    )?;
    let handle = serve(endpoint, &args.addr, args.threads)?;
    println!("listening on {}", handle.base_url());
    std::io::stdout().flush()?;
    handle.join();
    Ok(Outcome::Ok)
}
