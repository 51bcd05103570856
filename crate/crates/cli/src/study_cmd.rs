use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;
use svqa_core::read_jsonl;
use svqa_core::reader_study::{
    build_session, import_ratings, rate_interactive, unblind, BlindedItem, Clock, FixedClock,
    KeyEntry, RatingLog, SourceReport, SystemClock,
};
use svqa_core::rng::derive_seed;
use svqa_core::stats::likert_summary;

use crate::ctx::{add_input, add_output, write_json, Ctx, Outcome};

const STUDY_DIR: &str = "reader_study";

#[derive(Subcommand)]
pub enum StudyCommand {
    /// Blind and distribute reports to raters.
    Build(BuildArgs),
    /// Record one rater's scores, interactively or from a file.
    Rate(RateArgs),
    /// Unblind all ratings and tabulate them per author.
    Summarize,
}

#[derive(Args)]
pub struct BuildArgs {
    /// Reports JSONL with image_id, author, report_text and optional image_path.
    #[arg(long)]
    reports: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    raters: Vec<String>,
    /// Reports per rater; must be a multiple of the number of authors.
    #[arg(long)]
    quota: usize,
}

#[derive(Args)]
pub struct RateArgs {
    #[arg(long)]
    rater: String,
    /// Ratings JSONL to import instead of prompting.
    #[arg(long = "import")]
    import: Option<PathBuf>,
}

fn session_file(rater: &str) -> PathBuf {
    Path::new(STUDY_DIR).join(format!("session_{rater}.jsonl"))
}

fn ratings_file(rater: &str) -> PathBuf {
    Path::new(STUDY_DIR).join(format!("ratings_{rater}.jsonl"))
}

fn check_rater_id(r: &str) -> Result<()> {
    if r.is_empty()
        || !r
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        bail!("rater id '{r}' may only contain letters, digits, '-' and '_'");
    }
    Ok(())
}

pub fn run(ctx: &Ctx, cmd: StudyCommand) -> Result<Outcome> {
    match cmd {
        StudyCommand::Build(a) => build(ctx, a),
        StudyCommand::Rate(a) => rate(ctx, a),
        StudyCommand::Summarize => summarize(ctx),
    }
}

fn build(ctx: &Ctx, args: BuildArgs) -> Result<Outcome> {
    for r in &args.raters {
        check_rater_id(r)?;
    }
    let seed = derive_seed(ctx.seed, "reader_study");
    let mut m = ctx.manifest(
        "reader-study build",
        &json!({ "reports": args.reports, "raters": args.raters, "quota": args.quota }),
    );
    m.seed("reader_study", seed);
    add_input(&mut m, ctx, &args.reports)?;
    let reports: Vec<SourceReport> = read_jsonl(&ctx.path(&args.reports))?;
    let session = build_session(&reports, &args.raters, args.quota, seed)?;
    let written = session.write(&ctx.path(STUDY_DIR))?;
    for p in written {
        let rel = p.strip_prefix(&ctx.workdir).unwrap_or(&p).to_path_buf();
        add_output(&mut m, ctx, &rel)?;
    }
    println!(
        "{} items for {} raters",
        session.items.len(),
        args.raters.len()
    );
    ctx.finish("reader-study-build", m)
}

fn load_items(ctx: &Ctx, rater: &str) -> Result<Vec<BlindedItem>> {
    read_jsonl(&ctx.path(session_file(rater))).with_context(|| {
        format!("no session for rater '{rater}'; run `svqa reader-study build` first")
    })
}

fn rate(ctx: &Ctx, args: RateArgs) -> Result<Outcome> {
    check_rater_id(&args.rater)?;
    let mut m = ctx.manifest(
        "reader-study rate",
        &json!({ "rater": args.rater, "import": args.import }),
    );
    let items = load_items(ctx, &args.rater)?;
    add_input(&mut m, ctx, &session_file(&args.rater))?;
    let ratings = ratings_file(&args.rater);
    let mut log = RatingLog::open(&ctx.path(&ratings), &items)?;

    match &args.import {
        Some(p) => {
            add_input(&mut m, ctx, p)?;
            let f = std::fs::File::open(ctx.path(p))
                .with_context(|| format!("opening {}", p.display()))?;
            let report = import_ratings(&mut log, BufReader::new(f))?;
            for (line, msg) in &report.rejected {
                m.error(format!("{} line {line}: {msg}", p.display()));
            }
            println!(
                "stored {} ratings, rejected {}",
                report.stored,
                report.rejected.len()
            );
        }
        None => {
            let clock: Box<dyn Clock> = match ctx.frozen_time {
                Some(t) => Box::new(FixedClock(t)),
                None => Box::new(SystemClock),
            };
            let stdin = std::io::stdin();
            let n = rate_interactive(
                &mut log,
                &items,
                &args.rater,
                clock.as_ref(),
                stdin.lock(),
                std::io::stdout(),
            )?;
            println!("rated {n} items this session");
        }
    }
    let pending = log.pending(&items).len();
    println!(
        "{} of {} items rated, {pending} pending",
        log.rated_count(),
        items.len()
    );
    if ctx.path(&ratings).exists() {
        add_output(&mut m, ctx, &ratings)?;
    }
    ctx.finish(&format!("reader-study-rate-{}", args.rater), m)
}

fn summarize(ctx: &Ctx) -> Result<Outcome> {
    let mut m = ctx.manifest("reader-study summarize", &json!({}));
    let key_path = Path::new(STUDY_DIR).join("key.jsonl");
    add_input(&mut m, ctx, &key_path)?;
    let key: Vec<KeyEntry> = read_jsonl(&ctx.path(&key_path))?;

    let mut raters: Vec<String> = std::fs::read_dir(ctx.path(STUDY_DIR))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_prefix("session_")?
                .strip_suffix(".jsonl")
                .map(String::from)
        })
        .collect();
    raters.sort();

    let mut ratings = Vec::new();
    for r in &raters {
        let items = load_items(ctx, r)?;
        let path = ratings_file(r);
        if !ctx.path(&path).exists() {
            m.note(format!("rater {r}: no ratings yet"));
            continue;
        }
        add_input(&mut m, ctx, &path)?;
        let log = RatingLog::open(&ctx.path(&path), &items)?;
        let pending = log.pending(&items).len();
        if pending > 0 {
            m.note(format!(
                "rater {r}: {pending} of {} items unrated",
                items.len()
            ));
        }
        ratings.extend(unblind(&log.effective_records(), &key)?);
    }
    let rows = likert_summary(&ratings)?;
    let out = Path::new(STUDY_DIR).join("summary.json");
    write_json(
        &ctx.path(&out),
        &json!({ "raters": raters, "ratings": ratings.len(), "rows": rows }),
    )?;
    add_output(&mut m, ctx, &out)?;

    println!(
        "{:<8} {:<13} {:>4} {:>4} {:>4} {:>4} {:>4} {:>5} {:>7}",
        "author", "criterion", "1", "2", "3", "4", "5", "n", "agree%"
    );
    for r in &rows {
        println!(
            "{:<8} {:<13} {:>4} {:>4} {:>4} {:>4} {:>4} {:>5} {:>7.1}",
            r.author,
            r.criterion.as_str(),
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3],
            r.counts[4],
            r.n,
            100.0 * r.agree_fraction
        );
    }
    ctx.finish("reader-study-summarize", m)
}
