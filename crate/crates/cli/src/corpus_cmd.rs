use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;
use svqa_core::corpus::{
    ingest_specialist, ingest_tabular, make_splits, synthesize_tabular_reports, ClusterLabels,
    ClusteredImage, ImageIndex, ImageMeta, SplitFractions,
};
use svqa_core::manifest::RunManifest;
use svqa_core::{read_jsonl, write_jsonl, LineError};

use crate::ctx::{add_input, add_output, write_json, Ctx, Outcome};

pub const IMAGES: &str = "corpus/images.jsonl";
pub const TABULAR: &str = "corpus/tabular.jsonl";
pub const SPECIALIST: &str = "corpus/specialist.jsonl";
pub const SPLITS: &str = "corpus/splits.json";

#[derive(Args)]
pub struct IngestArgs {
    /// Image metadata JSONL.
    #[arg(long)]
    images: PathBuf,
    /// Tabular reports JSONL.
    #[arg(long)]
    tabular: Option<PathBuf>,
    /// Specialist reports JSONL.
    #[arg(long)]
    specialist: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Images with cluster ids and demographics, JSONL.
    #[arg(long)]
    clustered: PathBuf,
    /// JSON object mapping cluster id to its present biomarkers.
    #[arg(long)]
    clusters: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    train: Option<f64>,
    #[arg(long)]
    val: Option<f64>,
    #[arg(long)]
    test: Option<f64>,
}

/// A record that did not make it into the corpus.
#[derive(Serialize)]
struct Reject<'a> {
    source: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_id: Option<&'a str>,
    message: String,
}

fn line_rejects<'a>(source: &'a str, errs: &[LineError]) -> Vec<Reject<'a>> {
    errs.iter()
        .map(|e| Reject {
            source,
            line: Some(e.line),
            image_id: None,
            message: e.message.clone(),
        })
        .collect()
}

/// Keeps records whose image is in the index; the rest become rejects.
fn known_images<'a, T>(
    source: &'a str,
    records: &'a [T],
    index: &ImageIndex,
    id: impl Fn(&T) -> &str,
    rejects: &mut Vec<Reject<'a>>,
) -> Vec<&'a T> {
    let mut kept = Vec::new();
    for r in records {
        if index.contains(id(r)) {
            kept.push(r);
        } else {
            rejects.push(Reject {
                source,
                line: None,
                image_id: Some(id(r)),
                message: "report for an image missing from the image metadata".into(),
            });
        }
    }
    kept
}

fn record_rejects(m: &mut RunManifest, rejects: &[Reject<'_>]) {
    for r in rejects {
        let loc = match (r.line, r.image_id) {
            (Some(l), _) => format!("{} line {l}", r.source),
            (None, Some(id)) => format!("{} image {id}", r.source),
            _ => r.source.to_string(),
        };
        m.error(format!("{loc}: {}", r.message));
    }
}

pub fn ingest(ctx: &Ctx, args: IngestArgs) -> Result<Outcome> {
    let schema = ctx.schema()?;
    let mut m = ctx.manifest(
        "ingest",
        &json!({
            "images": args.images,
            "tabular": args.tabular,
            "specialist": args.specialist,
            "schema_version": schema.version(),
        }),
    );
    add_input(&mut m, ctx, &args.images)?;
    let images: Vec<ImageMeta> = read_jsonl(&ctx.path(&args.images))?;
    let index = ImageIndex::new(images)?;
    write_jsonl(&ctx.path(IMAGES), &index.to_vec())?;
    let mut outputs = vec![PathBuf::from(IMAGES)];
    let mut rejects = Vec::new();

    let tabular = match &args.tabular {
        Some(p) => {
            add_input(&mut m, ctx, p)?;
            Some(ingest_tabular(&ctx.path(p), &schema)?)
        }
        None => None,
    };
    if let Some(t) = &tabular {
        rejects.extend(line_rejects("tabular", &t.rejects));
        let kept = known_images("tabular", &t.records, &index, |r| &r.image_id, &mut rejects);
        write_jsonl(&ctx.path(TABULAR), &kept)?;
        outputs.push(TABULAR.into());
        log::info!(
            "tabular: {} accepted, {} rejected",
            kept.len(),
            t.records.len() - kept.len() + t.rejects.len()
        );
    }

    let specialist = match &args.specialist {
        Some(p) => {
            add_input(&mut m, ctx, p)?;
            Some(ingest_specialist(&ctx.path(p))?)
        }
        None => None,
    };
    if let Some(s) = &specialist {
        rejects.extend(line_rejects("specialist", &s.rejects));
        let kept = known_images(
            "specialist",
            &s.records,
            &index,
            |r| &r.image_id,
            &mut rejects,
        );
        write_jsonl(&ctx.path(SPECIALIST), &kept)?;
        outputs.push(SPECIALIST.into());
    }

    let rejects_path = Path::new("corpus/rejects.jsonl");
    write_jsonl(&ctx.path(rejects_path), &rejects)?;
    outputs.push(rejects_path.into());
    record_rejects(&mut m, &rejects);
    for o in &outputs {
        add_output(&mut m, ctx, o)?;
    }
    println!(
        "ingested {} images, {} rejected records",
        index.len(),
        rejects.len()
    );
    ctx.finish("ingest", m)
}

pub fn synthesize(ctx: &Ctx, args: SynthesizeArgs) -> Result<Outcome> {
    let schema = ctx.schema()?;
    let mut m = ctx.manifest(
        "synthesize",
        &json!({
            "clustered": args.clustered,
            "clusters": args.clusters,
            "schema_version": schema.version(),
        }),
    );
    m.seed("absent_sampling", ctx.seed);
    add_input(&mut m, ctx, &args.clustered)?;
    add_input(&mut m, ctx, &args.clusters)?;
    let images: Vec<ClusteredImage> = read_jsonl(&ctx.path(&args.clustered))?;
    let text = std::fs::read_to_string(ctx.path(&args.clusters))
        .with_context(|| format!("reading {}", args.clusters.display()))?;
    let clusters: ClusterLabels = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.clusters.display()))?;
    let reports = synthesize_tabular_reports(&images, &clusters, &schema, ctx.seed)?;
    write_jsonl(&ctx.path(TABULAR), &reports)?;
    add_output(&mut m, ctx, Path::new(TABULAR))?;
    println!("synthesized {} tabular reports", reports.len());
    ctx.finish("synthesize", m)
}

pub fn split(ctx: &Ctx, args: SplitArgs) -> Result<Outcome> {
    let s = &ctx.file.split;
    let fractions = SplitFractions::new(
        args.train.or(s.train).unwrap_or(0.8),
        args.val.or(s.val).unwrap_or(0.1),
        args.test.or(s.test).unwrap_or(0.1),
    )?;
    let mut m = ctx.manifest("split", &json!({ "fractions": fractions }));
    m.seed("split", ctx.seed);
    add_input(&mut m, ctx, Path::new(IMAGES))?;
    let images: Vec<ImageMeta> =
        read_jsonl(&ctx.path(IMAGES)).context("run `svqa ingest` first")?;
    let assignment = make_splits(&images, fractions, ctx.seed)?;
    write_json(&ctx.path(SPLITS), &assignment)?;
    add_output(&mut m, ctx, Path::new(SPLITS))?;
    for (split, c) in &assignment.summary {
        println!("{split}: {} patients, {} images", c.patients, c.images);
    }
    ctx.finish("split", m)
}
