//! `stancemine`: command-line entry point for the pipeline.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 backend or
//! transport failure, 4 parse-failure budget exceeded.
//!
//! Precedence for every setting: command-line flag, then config file, then
//! built-in default.

mod commands;
mod config;
mod exit;
mod manifest;
mod pipeline;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use stancemine_core::annotation::QueueConfig;
use stancemine_core::eval::Stratifier;
use stancemine_core::gateway::{FailurePolicy, Strategy};
use stancemine_core::stance::{Orientation, StanceMethod};

use crate::commands::*;
use crate::config::Config;
use crate::exit::{Failure, OrExit, Outcome};
use crate::manifest::sha256_hex;

#[derive(Debug, Parser)]
#[command(name = "stancemine", version, about = "Claim filtering, stance detection and evaluation over forum threads")]
struct Cli {
    /// TOML or JSON config file; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named chat backend from the config.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Bypass the response cache.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Seed for every sampling step (exemplar selection, pair sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for default output paths, the cache and checkpoints.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch and filter posts and comments from a listing service or dump.
    Ingest(IngestArgs),
    /// Flag post titles that carry a health claim.
    IdentifyClaims(ClaimsArgs),
    /// Pair claim titles with their surviving top-level comments.
    BuildPairs(PairsArgs),
    /// Predict Favor/Against/None for each pair.
    DetectStance(StanceArgs),
    /// Precision, recall and F1 per class plus macro F1.
    Evaluate(EvalArgs),
    /// Metrics per claim type or comment-length bin.
    Diagnose(DiagnoseArgs),
    /// Per-title stance percentages and their comment-weighted average.
    Distribution(DistributionArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Every stage in order, driven by the config file.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// http(s) listing URL, dump directory, or posts file.
    #[arg(long)]
    source: Option<String>,
    /// Accepted flair; repeat for several.
    #[arg(long = "flair")]
    flairs: Vec<String>,
    /// First day of the window (UTC, inclusive).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last day of the window (UTC, inclusive).
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long)]
    out_posts: Option<PathBuf>,
    #[arg(long)]
    out_comments: Option<PathBuf>,
    /// Records that failed to parse or validate.
    #[arg(long)]
    rejects: Option<PathBuf>,
    /// Write every comment of a kept post instead of filtered top-level ones.
    #[arg(long)]
    keep_all_comments: bool,
}

#[derive(Debug, Args)]
struct ClaimsArgs {
    /// Titles as JSONL (`post_id` or `id`, `title`); a posts file works.
    #[arg(long = "in")]
    input: PathBuf,
    /// zero or few.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Claim exemplars as JSONL (`input`, `claim`).
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Exemplars shown in a few-shot prompt (default 9).
    #[arg(long)]
    exemplar_count: Option<usize>,
    /// Drop titles that appear among the exemplars.
    #[arg(long)]
    exclude_exemplar_titles: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[arg(long)]
    posts: PathBuf,
    #[arg(long)]
    comments: PathBuf,
    /// Claim predictions from identify-claims.
    #[arg(long)]
    claims: PathBuf,
    /// Reviewer notes per post (`has_claim`, `claim_text`, `claim_type`).
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// `{pair_id, gold_stance}` records to attach.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Keep a seeded sample of this many pairs.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StanceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// llm-zero, llm-few, llm-cot, nli or nli-sts.
    #[arg(long)]
    method: Option<StanceMethod>,
    /// Stance exemplars for llm-few / llm-cot.
    #[arg(long)]
    exemplars: Option<PathBuf>,
    /// Similarity below which nli-sts answers None (default 0.4).
    #[arg(long)]
    sts_threshold: Option<f64>,
    #[arg(long)]
    nli_endpoint: Option<String>,
    #[arg(long)]
    embed_endpoint: Option<String>,
    /// title-premise or comment-premise.
    #[arg(long, value_parser = parse_orientation)]
    orientation: Option<Orientation>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// stance or claims.
    #[arg(long, value_parser = parse_eval_task, default_value = "stance")]
    task: EvalTask,
    /// Pairs with gold labels, or claim annotations for --task claims.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// exclude or map-to-default.
    #[arg(long, value_parser = parse_failure_policy)]
    failure_policy: Option<FailurePolicy>,
    /// Largest tolerated share of unparseable replies before exiting 4.
    #[arg(long)]
    parse_failure_budget: Option<f64>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// claim-type or length.
    #[arg(long)]
    by: Stratifier,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_failure_policy)]
    failure_policy: Option<FailurePolicy>,
}

#[derive(Debug, Args)]
struct DistributionArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_failure_policy)]
    failure_policy: Option<FailurePolicy>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Pairs to enqueue; may be omitted when the log already holds them.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Labels needed before a pair is done: 1 or 3.
    #[arg(long, default_value_t = 1)]
    min_labels: usize,
    /// Append-only event log (default <out-dir>/events.jsonl).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Built annotation console to serve at `/`.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    lease_ttl_secs: i64,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Pairs to sample for stance detection (default 400).
    #[arg(long)]
    sample_size: Option<usize>,
    /// Restrict to these stance methods; repeat for several.
    #[arg(long = "method")]
    methods: Vec<StanceMethod>,
}

fn parse_orientation(s: &str) -> Result<Orientation, String> {
    match s {
        "title-premise" => Ok(Orientation::TitlePremise),
        "comment-premise" => Ok(Orientation::CommentPremise),
        other => Err(format!("unknown orientation {other:?} (expected title-premise or comment-premise)")),
    }
}

fn context(cli: &Cli) -> Outcome<Ctx> {
    let cfg = match &cli.config {
        Some(path) => Config::load(path).invalid()?,
        None => Config::default(),
    };
    let hashed = serde_json::json!({
        "config": cfg,
        "command": format!("{:?}", cli.command),
        "backend": cli.backend,
        "seed": cli.seed,
    });
    Ok(Ctx {
        config_hash: sha256_hex(hashed.to_string().as_bytes()),
        cfg,
        config_path: cli.config.clone(),
        backend: cli.backend.clone(),
        no_cache: cli.no_cache,
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    })
}

fn dispatch(cli: Cli) -> Outcome<()> {
    let mut ctx = context(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest(
            &ctx,
            IngestRequest {
                source: a.source,
                flairs: a.flairs,
                from: a.from,
                to: a.to,
                out_posts: a.out_posts,
                out_comments: a.out_comments,
                rejects: a.rejects,
                keep_all_comments: a.keep_all_comments,
            },
        ),
        Command::IdentifyClaims(a) => identify(
            &ctx,
            ClaimsRequest {
                input: a.input,
                strategy: a.strategy,
                exemplars: a.exemplars,
                exemplar_count: a.exemplar_count,
                exclude_exemplar_titles: a.exclude_exemplar_titles,
                out: a.out,
            },
        ),
        Command::BuildPairs(a) => pairs(
            &ctx,
            PairsRequest {
                posts: a.posts,
                comments: a.comments,
                claims: a.claims,
                annotations: a.annotations,
                gold: a.gold,
                sample: a.sample,
                out: a.out,
            },
        ),
        Command::DetectStance(a) => stance(
            &ctx,
            StanceRequest {
                input: a.input,
                method: a.method,
                exemplars: a.exemplars,
                sts_threshold: a.sts_threshold,
                nli_endpoint: a.nli_endpoint,
                embed_endpoint: a.embed_endpoint,
                orientation: a.orientation,
                out: a.out,
            },
        ),
        Command::Evaluate(a) => {
            if let Some(b) = a.parse_failure_budget {
                if !(0.0..=1.0).contains(&b) {
                    return Err(Failure::validation(anyhow!("--parse-failure-budget {b} outside [0, 1]")));
                }
                ctx.cfg.eval.parse_failure_budget = Some(b);
            }
            evaluate(&ctx, EvalRequest { task: a.task, gold: a.gold, pred: a.pred, out: a.out, failure_policy: a.failure_policy })
        }
        Command::Diagnose(a) => {
            diagnose(&ctx, DiagnoseRequest { by: a.by, gold: a.gold, pred: a.pred, out: a.out, failure_policy: a.failure_policy })
        }
        Command::Distribution(a) => {
            distribution(&ctx, DistributionRequest { gold: a.gold, pred: a.pred, out: a.out, failure_policy: a.failure_policy })
        }
        Command::Serve(a) => serve(&ctx, a),
        Command::Run(a) => {
            let funnel = pipeline::run(&ctx, pipeline::RunRequest { sample_size: a.sample_size, methods: a.methods })?;
            println!("{}", serde_json::to_string_pretty(&funnel).expect("funnel serializes"));
            Ok(())
        }
    }
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Outcome<()> {
    if a.lease_ttl_secs <= 0 {
        return Err(Failure::validation(anyhow!("--lease-ttl-secs must be positive")));
    }
    let options = stancemine_annotate::ServeOptions {
        addr: SocketAddr::new(a.host, a.port),
        tasks: a.tasks,
        log: a.log.unwrap_or_else(|| ctx.out_dir().join("events.jsonl")),
        queue: QueueConfig { min_labels: a.min_labels, lease_ttl: chrono::Duration::seconds(a.lease_ttl_secs) },
        static_dir: a.static_dir,
    };
    stancemine_annotate::run_blocking(options).invalid()
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.kind.code())
        }
    }
}
