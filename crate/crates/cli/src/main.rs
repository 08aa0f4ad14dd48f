mod jsonl;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sentimon_core::adjust::{adjust_records, parse_condition_list, Condition};
use sentimon_core::annotation::{AnnotationStore, RaterRoster};
use sentimon_core::dossier::{build_dossiers, CompanySummary, Month, MonthlyDossier, SkippedMonth, DEFAULT_CAP};
use sentimon_core::evaluation::{run_evaluation, write_report, HumanAssessment};
use sentimon_core::gateway::{Gateway, GatewayConfig, ModelConfig};
use sentimon_core::ingest::{corpus_stats, filter_timely, parse_feed, FeedFormat, IngestConfig};
use sentimon_core::pipeline::summarize_all;
use sentimon_core::rating::{rate_all, RatingRecord, Rubric};
use sentimon_core::synthetic;

#[derive(Debug, Parser)]
#[command(name = "sentimon", version, about = "Monthly sentiment ratings for corporate disclosures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Summarize the timely disclosures of a feed.
    Ingest(IngestArgs),
    /// Group summaries into capped company-month dossiers.
    BuildDossiers(BuildArgs),
    /// Rate dossiers with a model.
    Rate(RateArgs),
    /// Apply an adjustment condition to a ratings file.
    Adjust(AdjustArgs),
    /// Compare ratings with expert consensus and write reports.
    Evaluate(EvaluateArgs),
    /// Serve the annotation API.
    Serve(ServeArgs),
    /// Export expert assessments from a submission log.
    ExportAssessments(ExportArgs),
    /// Write deterministic fixture files.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
struct GatewayArgs {
    /// Gateway TOML (backend, model, retry, rate limit). Mock backend when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured model id.
    #[arg(long)]
    model: Option<String>,
}

impl GatewayArgs {
    fn build(&self, default_model: &str) -> Result<(Gateway, ModelConfig)> {
        let mut cfg = match &self.config {
            Some(path) => GatewayConfig::load(path).map_err(anyhow::Error::msg)?,
            None => GatewayConfig::mock(default_model),
        };
        if let Some(m) = &self.model {
            cfg.model.model_id = m.clone();
        }
        let gateway = cfg.build().map_err(anyhow::Error::msg)?;
        Ok((gateway, cfg.model))
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    feed: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: FeedFormat,
    /// Summaries output (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Summaries written by `ingest`.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// First month (YYYY-MM) of the period; enables the skipped-month list.
    #[arg(long, requires = "to_month")]
    from_month: Option<Month>,
    #[arg(long, requires = "from_month")]
    to_month: Option<Month>,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[arg(long)]
    dossiers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[command(flatten)]
    gateway: GatewayArgs,
}

#[derive(Debug, Args)]
struct AdjustArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    condition: Condition,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// One or more ratings files.
    #[arg(long, required = true, num_args = 1..)]
    ratings: Vec<PathBuf>,
    #[arg(long)]
    human: PathBuf,
    #[arg(long, default_value = "C1,C2,C3,C4", value_parser = parse_condition_list)]
    conditions: std::vec::Vec<Condition>,
    #[arg(long, default_value = "C2")]
    per_company_condition: Condition,
    /// Skipped-month list written by `build-dossiers`.
    #[arg(long)]
    skipped: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Dossiers to rate (JSON lines).
    #[arg(long)]
    tasks: PathBuf,
    /// Rater roster (TOML).
    #[arg(long)]
    raters: PathBuf,
    /// Append-only submission log; replayed on start.
    #[arg(long, default_value = "submissions.jsonl")]
    log: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    tasks: PathBuf,
    #[arg(long)]
    raters: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Synthetic multi-company feed.
    Feed {
        #[arg(long, default_value_t = 50)]
        companies: usize,
        #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expert assessments for every dossier in a file.
    Humans {
        #[arg(long)]
        dossiers: PathBuf,
        #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Skewed ratings/assessments pair (815 company-months).
    Skew {
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// CJ CGV June 2023 feed and replay cassette.
    CjCgv {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest(a) => ingest(a),
        Command::BuildDossiers(a) => build(a),
        Command::Rate(a) => rate(a),
        Command::Adjust(a) => adjust(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Serve(a) => serve(a),
        Command::ExportAssessments(a) => export(a),
        Command::Synth(c) => synth(c),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let raw = std::fs::read(&a.feed).with_context(|| format!("reading {}", a.feed.display()))?;
    let parsed = parse_feed(&raw, a.format, &IngestConfig::default())?;
    for e in &parsed.errors {
        eprintln!("entry {}: {}", e.index, e.kind);
    }
    for (kind, s) in corpus_stats(&parsed.disclosures) {
        eprintln!("{:<20} {:>6} docs  mean {:>8.1} tokens", kind.as_str(), s.count, s.mean_tokens);
    }
    let timely = filter_timely(parsed.disclosures);
    let (gateway, model) = a.gateway.build("mock-summarizer")?;
    let (summaries, failures) = summarize_all(&timely, &gateway, &model);
    for f in &failures {
        eprintln!("summary failed: {} {} {}: {}", f.company_id, f.disclosed_at, f.title, f.reason);
    }
    let n = jsonl::write(&a.out, &summaries)?;
    eprintln!("{n} summaries written to {}", a.out.display());
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let items: Vec<CompanySummary> = jsonl::read(&a.from)?;
    let period = a.from_month.zip(a.to_month);
    let set = build_dossiers(items, a.cap, period)?;
    let n = jsonl::write(&a.out, &set.dossiers)?;
    let skipped_path = jsonl::sidecar(&a.out, "skipped");
    jsonl::write(&skipped_path, &set.skipped)?;
    eprintln!(
        "{n} dossiers, {} skipped months ({}), {} entries trimmed by the cap",
        set.skipped.len(),
        skipped_path.display(),
        set.trimmed
    );
    Ok(())
}

fn read_dossiers(path: &Path, cap: usize) -> Result<Vec<MonthlyDossier>> {
    let dossiers: Vec<MonthlyDossier> = jsonl::read(path)?;
    for (i, d) in dossiers.iter().enumerate() {
        d.validate(cap)
            .with_context(|| format!("{}: dossier {} ({} {})", path.display(), i + 1, d.company_id, d.month))?;
    }
    Ok(dossiers)
}

fn rate(a: RateArgs) -> Result<()> {
    let dossiers = read_dossiers(&a.dossiers, a.cap)?;
    let (gateway, model) = a.gateway.build("mock-rater")?;
    let records = rate_all(&dossiers, Rubric::v1(), &gateway, &model);
    let failed = records.iter().filter(|r| matches!(r, RatingRecord::Failed(_))).count();
    jsonl::write(&a.out, &records)?;
    eprintln!("{} rated, {failed} failed", records.len() - failed);
    Ok(())
}

fn adjust(a: AdjustArgs) -> Result<()> {
    let records: Vec<RatingRecord> = jsonl::read(&a.ratings)?;
    let lines = adjust_records(&records, a.condition).into_iter().map(|r| match r {
        Ok(adj) => {
            // stays readable as a ratings file
            let mut v = serde_json::to_value(adj).expect("serializable");
            v["status"] = "rated".into();
            v
        }
        Err(failed) => serde_json::to_value(failed).expect("serializable"),
    });
    let n = jsonl::write(&a.out, lines)?;
    eprintln!("{n} records adjusted with {}", a.condition);
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut ratings: Vec<RatingRecord> = Vec::new();
    for p in &a.ratings {
        ratings.extend(jsonl::read::<RatingRecord>(p)?);
    }
    let humans: Vec<HumanAssessment> = jsonl::read(&a.human)?;
    let skipped: Vec<SkippedMonth> = match &a.skipped {
        Some(p) => jsonl::read(p)?,
        None => Vec::new(),
    };
    if a.conditions.is_empty() {
        eprintln!("no conditions requested; the report will be header-only");
    }
    let report = run_evaluation(&ratings, &humans, &a.conditions, a.per_company_condition)?.with_skipped(skipped);
    std::fs::create_dir_all(&a.out)?;
    for path in write_report(&report, &a.out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn open_store(tasks: &Path, raters: &Path, log: &Path) -> Result<AnnotationStore> {
    let dossiers = read_dossiers(tasks, DEFAULT_CAP)?;
    let roster = RaterRoster::load(raters).map_err(anyhow::Error::msg)?;
    Ok(AnnotationStore::open(dossiers, &roster, log)?)
}

fn serve(a: ServeArgs) -> Result<()> {
    let store = open_store(&a.tasks, &a.raters, &a.log)?;
    let addr = SocketAddr::new(a.host, a.port);
    eprintln!("serving {} on http://{addr}", a.tasks.display());
    tokio::runtime::Runtime::new()?.block_on(sentimon_core::annotation::http::serve(store, addr))?;
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    if !a.log.exists() {
        bail!("no submission log at {}", a.log.display());
    }
    let store = open_store(&a.tasks, &a.raters, &a.log)?;
    let bundle = store.export_assessments()?;
    jsonl::write(&a.out, &bundle.assessments)?;
    if let Some(ir) = bundle.inter_rater {
        eprintln!(
            "{} assessments; experts agree on {:.1}%, kappa {}",
            ir.n,
            ir.agreement * 100.0,
            ir.kappa.map_or("undefined".into(), |k| format!("{k:.3}"))
        );
    }
    Ok(())
}

fn synth(c: SynthCommand) -> Result<()> {
    match c {
        SynthCommand::Feed { companies, seed, out } => {
            let spec = synthetic::SynthSpec {
                companies,
                seed,
                ..Default::default()
            };
            write_text(&out, &synthetic::synthetic_feed(&spec))
        }
        SynthCommand::Humans { dossiers, seed, out } => {
            let dossiers = read_dossiers(&dossiers, DEFAULT_CAP)?;
            let humans = synthetic::synthetic_humans(dossiers.into_iter().map(|d| (d.company_id, d.month)), seed);
            jsonl::write(&out, &humans).map(drop)
        }
        SynthCommand::Skew { out_dir } => {
            let f = synthetic::skewed_fixture();
            write_text(&out_dir.join("skew_ratings.jsonl"), &synthetic::to_jsonl(&f.ratings))?;
            write_text(&out_dir.join("skew_human.jsonl"), &synthetic::to_jsonl(&f.humans))
        }
        SynthCommand::CjCgv { out_dir } => {
            write_text(&out_dir.join("cj_cgv_feed.jsonl"), &synthetic::cj_cgv_feed())?;
            write_text(&out_dir.join("cj_cgv_cassette.json"), &synthetic::cj_cgv_cassette().to_json())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
