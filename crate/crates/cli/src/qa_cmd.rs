use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde_json::json;
use svqa_core::corpus::{SpecialistReport, Split, SplitAssignment, TabularReport};
use svqa_core::llm_gateway::{
    run_jobs, BackendRegistry, Gateway, GenerationParams, QaTranscript, ResponseCache,
};
use svqa_core::promptgen::{plan_jobs, CurriculumPart, ReportRef};
use svqa_core::qa_engine::{self, write_dataset};
use svqa_core::rng::derive_seed;
use svqa_core::{read_jsonl, write_jsonl};

use crate::corpus_cmd::{SPECIALIST, SPLITS, TABULAR};
use crate::ctx::{add_input, add_output, write_json, Ctx, Outcome};

#[derive(Args)]
pub struct GenerateArgs {
    /// Curriculum part: 1 (tabular reports) or 2 (specialist reports).
    #[arg(long)]
    part: u8,
    /// Backend id from the config file; optional when only one is defined.
    #[arg(long)]
    backend: Option<String>,
    /// Generate for every image instead of the train split only.
    #[arg(long)]
    all_splits: bool,
}

#[derive(Args)]
pub struct AssembleArgs {
    #[arg(long)]
    part: u8,
    /// Dataset name (default: part<N>).
    #[arg(long)]
    name: Option<String>,
}

fn part_of(n: u8) -> Result<CurriculumPart> {
    CurriculumPart::try_from(n).map_err(|e| anyhow!(e))
}

pub fn qa_dir(part: CurriculumPart) -> PathBuf {
    PathBuf::from(format!("qa/part{part}"))
}

pub fn generate(ctx: &Ctx, args: GenerateArgs) -> Result<Outcome> {
    let part = part_of(args.part)?;
    let spec = ctx.file.backend(args.backend.as_deref())?;
    let gen = &ctx.file.generation;
    let params = GenerationParams {
        max_new_tokens: gen
            .max_new_tokens
            .unwrap_or(GenerationParams::default().max_new_tokens),
        temperature: gen.temperature.unwrap_or(0.0),
    };
    let retry = gen.retry.clone().unwrap_or_default();
    let use_cache = gen.cache.unwrap_or(true);
    let min_interval = Duration::from_millis(gen.min_interval_ms.unwrap_or(0));
    let mut m = ctx.manifest(
        &format!("generate-qa --part {part}"),
        &json!({
            "part": part,
            "backend": spec,
            "params": params,
            "retry": retry,
            "cache": use_cache,
            "min_interval_ms": min_interval.as_millis() as u64,
            "all_splits": args.all_splits,
            "parallel": ctx.parallel,
        }),
    );
    let jitter_seed = derive_seed(ctx.seed, "retry");
    m.seed("retry_jitter", jitter_seed);

    let base_dir = ctx
        .config_path
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.workdir.clone());
    let backend = BackendRegistry::default().build(spec, &base_dir)?;
    let mut builder = Gateway::builder(backend)
        .retry(retry)
        .min_interval(min_interval)
        .jitter_seed(jitter_seed);
    if use_cache {
        let dir = ctx.path("cache").join(&spec.id);
        let cache = ResponseCache::on_disk(&dir)
            .with_context(|| format!("opening cache {}", dir.display()))?;
        builder = builder.cache(Arc::new(cache));
    }
    let gateway = builder.build();

    let splits = if args.all_splits {
        None
    } else {
        add_input(&mut m, ctx, Path::new(SPLITS))
            .context("run `svqa split` first or pass --all-splits")?;
        Some(SplitAssignment::load(&ctx.path(SPLITS))?)
    };
    let admit = |image_id: &str| match &splits {
        Some(s) => s.split_of(image_id) == Some(Split::Train),
        None => true,
    };

    let templates = ctx.templates()?;
    let guidelines = ctx.guidelines()?;
    let tabular: Vec<TabularReport>;
    let specialist: Vec<SpecialistReport>;
    let refs: Vec<ReportRef<'_>> = match part {
        CurriculumPart::One => {
            add_input(&mut m, ctx, Path::new(TABULAR))?;
            tabular = read_jsonl(&ctx.path(TABULAR))?;
            tabular
                .iter()
                .filter(|r| admit(&r.image_id))
                .map(ReportRef::Tabular)
                .collect()
        }
        CurriculumPart::Two => {
            add_input(&mut m, ctx, Path::new(SPECIALIST))?;
            specialist = read_jsonl(&ctx.path(SPECIALIST))?;
            specialist
                .iter()
                .filter(|r| admit(&r.image_id))
                .map(ReportRef::Specialist)
                .collect()
        }
    };
    let jobs = plan_jobs(&refs, &templates, &guidelines, &spec.id, ctx.now())?;
    let dir = qa_dir(part);
    let jobs_path = dir.join("jobs.jsonl");
    write_jsonl(&ctx.path(&jobs_path), &jobs)?;

    let transcripts = run_jobs(&jobs, &gateway, params, ctx.parallel);
    let transcripts_path = dir.join("transcripts.jsonl");
    write_jsonl(&ctx.path(&transcripts_path), &transcripts)?;
    let failed: Vec<&QaTranscript> = transcripts.iter().filter(|t| !t.is_ok()).collect();
    for t in &failed {
        m.error(format!(
            "{} / {}: {}",
            t.image_id,
            t.template_id,
            t.error.as_deref().unwrap_or("generation failed")
        ));
    }
    add_output(&mut m, ctx, &jobs_path)?;
    add_output(&mut m, ctx, &transcripts_path)?;
    println!(
        "part {part}: {} reports, {} jobs, {} failed",
        refs.len(),
        jobs.len(),
        failed.len()
    );
    ctx.finish(&format!("generate-qa-part{part}"), m)
}

pub fn assemble(ctx: &Ctx, args: AssembleArgs) -> Result<Outcome> {
    let part = part_of(args.part)?;
    let name = args.name.unwrap_or_else(|| format!("part{part}"));
    if name.is_empty() || name.contains(['/', '\\']) {
        bail!("dataset name '{name}' must be a plain file stem");
    }
    let opts = ctx.file.assemble.unwrap_or_default();
    let mut m = ctx.manifest(
        &format!("assemble --part {part}"),
        &json!({ "part": part, "name": name, "options": opts }),
    );
    let transcripts_path = qa_dir(part).join("transcripts.jsonl");
    add_input(&mut m, ctx, &transcripts_path).context("run `svqa generate-qa` first")?;
    add_input(&mut m, ctx, Path::new(SPLITS))?;
    let transcripts: Vec<QaTranscript> = read_jsonl(&ctx.path(&transcripts_path))?;
    let splits = SplitAssignment::load(&ctx.path(SPLITS))?;
    let templates = ctx.templates()?;

    let a = qa_engine::assemble(&name, part, &transcripts, &templates, &splits, opts)?;
    for w in &a.warnings {
        m.note(w.clone());
    }
    let out_dir = Path::new("datasets");
    write_dataset(&ctx.path(out_dir), &a.dataset)?;
    let report_path = out_dir.join(format!("{name}.report.json"));
    write_json(
        &ctx.path(&report_path),
        &json!({ "report": a.report, "warnings": a.warnings }),
    )?;
    for f in [format!("{name}.jsonl"), format!("{name}.stats.json")] {
        add_output(&mut m, ctx, &out_dir.join(f))?;
    }
    add_output(&mut m, ctx, &report_path)?;
    let s = &a.dataset.stats;
    println!(
        "{name}: {} pairs over {} images ({:.1} per image)",
        s.pairs_total, s.images_total, s.pairs_per_image_mean
    );
    for (t, n) in &s.per_template {
        println!("  {t}: {n}");
    }
    ctx.finish(&format!("assemble-{name}"), m)
}
