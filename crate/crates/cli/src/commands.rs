use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::anyhow;
use chrono::NaiveDate;
use rand::SeedableRng;
use serde::Serialize;
use stancemine_core::gateway::prompt::{DEFAULT_CLAIM_EXEMPLARS, TEMPLATE_VERSION};
use stancemine_core::batch::{BatchOptions, DEFAULT_CHECKPOINT_EVERY, DEFAULT_PARALLELISM};
use stancemine_core::claims::{
    claim_labels_from_predictions, exclude_exemplar_titles, identify_claims, ClaimAnnotation, ClaimPrediction, TitleRecord,
};
use stancemine_core::eval::{evaluate_claims, evaluate_stance, stance_distribution, stratified_eval, Stratifier};
use stancemine_core::gateway::{
    BackendConfig, ClaimExemplar, Exemplars, FailurePolicy, Gateway, PromptSpec, ResponseCache, RetryPolicy, Script,
    ScriptedTransport, StanceExemplar, Strategy, Task, DEFAULT_MAX_IN_FLIGHT,
};
use stancemine_core::ingest::{build_pairs, comments_for_posts, fetch_comments, fetch_posts, filter_comments, sample_pairs, IngestFilter, Source};
use stancemine_core::model::{read_jsonl, write_jsonl, Comment, Post, StancePair};
use stancemine_core::stance::{
    detect_stance_llm, detect_stance_nli, detect_stance_sts, HttpEmbedder, HttpNliScorer, StanceMethod, StancePrediction,
    StsConfig,
};
use stancemine_core::synthetic::{GoldStance, DEFAULT_SEED};

use crate::config::{BackendKind, Config};
use crate::exit::{ExitKind, Failure, OrExit, Outcome};
use crate::manifest::{sha256_hex, sidecar, timestamp, write_json, BackendInfo, ManifestBuilder};

/// Settings shared by every subcommand: the loaded config plus the global flags.
pub struct Ctx {
    pub cfg: Config,
    pub config_path: Option<PathBuf>,
    pub backend: Option<String>,
    pub no_cache: bool,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_hash: String,
}

pub struct Backend {
    pub gateway: Gateway,
    pub info: BackendInfo,
    /// Files the backend reads (the reply table of a scripted backend).
    pub inputs: Vec<(String, PathBuf)>,
}

impl Ctx {
    pub fn out_dir(&self) -> PathBuf {
        match (&self.out_dir, &self.cfg.out_dir) {
            (Some(dir), _) => dir.clone(),
            (None, Some(dir)) => self.cfg.resolve(dir),
            (None, None) => PathBuf::from("."),
        }
    }

    /// An explicit `--out` path, else `name` inside the output directory.
    pub fn out_path(&self, given: Option<&Path>, name: &str) -> PathBuf {
        given.map(Path::to_path_buf).unwrap_or_else(|| self.out_dir().join(name))
    }

    pub fn seed(&self) -> u64 {
        self.seed.or(self.cfg.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn manifest(&self, command: &str) -> ManifestBuilder {
        ManifestBuilder::new(command, self.config_hash.clone(), timestamp(self.cfg.manifest_timestamp))
    }

    /// A path from a flag as given, else one from the config file resolved
    /// against its directory. Returns `(manifest label, path)`.
    pub fn pick(&self, flag: Option<&Path>, from_cfg: Option<&PathBuf>) -> Option<(String, PathBuf)> {
        match (flag, from_cfg) {
            (Some(p), _) => Some((p.display().to_string(), p.to_path_buf())),
            (None, Some(p)) => Some((p.display().to_string(), self.cfg.resolve(p))),
            (None, None) => None,
        }
    }

    pub fn batch_options(&self, stage: &str, fingerprint: String) -> BatchOptions {
        BatchOptions {
            parallelism: self.cfg.parallelism.unwrap_or(DEFAULT_PARALLELISM).max(1),
            checkpoint: Some(self.out_dir().join("checkpoints").join(format!("{stage}.jsonl"))),
            checkpoint_every: self.cfg.checkpoint_every.unwrap_or(DEFAULT_CHECKPOINT_EVERY).max(1),
            fingerprint,
        }
    }

    pub fn backend(&self) -> Outcome<Backend> {
        let name = self
            .backend
            .clone()
            .or_else(|| self.cfg.backend.clone())
            .ok_or_else(|| Failure::validation(anyhow!("no backend selected: pass --backend or set `backend` in the config")))?;
        let entry = self
            .cfg
            .backends
            .get(&name)
            .ok_or_else(|| Failure::validation(anyhow!("backend {name:?} is not defined in the config")))?;
        let endpoint = entry.endpoint.clone().unwrap_or_else(|| format!("scripted://{name}"));
        let mut bc = BackendConfig::new(&name, endpoint, &entry.model_id);
        bc.temperature = entry.temperature;
        if let Some(t) = entry.max_output_tokens {
            bc.max_output_tokens = t;
        }
        if let Some(t) = entry.timeout_ms {
            bc.timeout_ms = t;
        }
        bc.api_key_env = entry.api_key_env.clone();
        bc.reproducible = entry.reproducible.unwrap_or(true);
        let default_retry = RetryPolicy::default();
        bc.retry = RetryPolicy {
            max_attempts: entry.max_attempts.unwrap_or(default_retry.max_attempts),
            base_backoff_ms: entry.base_backoff_ms.unwrap_or(default_retry.base_backoff_ms),
        };
        let mut inputs = Vec::new();
        let gateway = match entry.kind {
            BackendKind::Http => Gateway::http(bc)?,
            BackendKind::Scripted => {
                let raw = entry.script.as_ref().expect("validated on load");
                let path = self.cfg.resolve(raw);
                let script = Script::load(&path).map_err(|e| Failure::validation(anyhow!("script {}: {e}", path.display())))?;
                inputs.push((raw.display().to_string(), path));
                Gateway::new(bc, Arc::new(ScriptedTransport::new(script)))?
            }
        };
        let mut gateway = gateway.with_max_in_flight(self.cfg.max_in_flight.unwrap_or(DEFAULT_MAX_IN_FLIGHT));
        if !self.no_cache {
            let path = match &self.cfg.cache {
                Some(p) => self.cfg.resolve(p),
                None => self.out_dir().join("cache").join("responses.jsonl"),
            };
            let cache = ResponseCache::open(&path).map_err(|e| Failure::validation(anyhow!("cache {}: {e}", path.display())))?;
            gateway = gateway.with_cache(Arc::new(cache));
        }
        let info = BackendInfo { name, model_id: entry.model_id.clone() };
        Ok(Backend { gateway, info, inputs })
    }
}

pub fn parse_strategy(s: &str) -> Result<Strategy, String> {
    match s {
        "zero" | "zero-shot" => Ok(Strategy::ZeroShot),
        "few" | "few-shot" => Ok(Strategy::FewShot),
        "cot" | "chain-of-thought" => Ok(Strategy::ChainOfThought),
        other => Err(format!("unknown strategy {other:?} (expected zero, few or cot)")),
    }
}

pub fn parse_failure_policy(s: &str) -> Result<FailurePolicy, String> {
    match s {
        "exclude" => Ok(FailurePolicy::Exclude),
        "map-to-default" | "map" => Ok(FailurePolicy::MapToDefault),
        other => Err(format!("unknown failure policy {other:?} (expected exclude or map-to-default)")),
    }
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<Vec<T>> {
    read_jsonl(path).invalid()
}

fn write<T: Serialize>(path: &Path, records: &[T]) -> Outcome<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).invalid()?;
    }
    write_jsonl(path, records).invalid()
}

fn write_report<T: Serialize>(path: &Path, value: &T) -> Outcome<()> {
    write_json(path, value).invalid()
}

/// Exit 4 when more than `budget` of the replies failed to parse.
pub fn check_budget(what: &str, failures: usize, total: usize, budget: f64) -> Outcome<()> {
    if total > 0 && failures as f64 / total as f64 > budget {
        return Err(Failure::new(
            ExitKind::ParseBudget,
            anyhow!("{what}: {failures} of {total} replies failed to parse, over the budget of {budget}"),
        ));
    }
    Ok(())
}

fn fingerprint(parts: &[&str]) -> String {
    sha256_hex(parts.join("\u{1f}").as_bytes())
}

// ---------------------------------------------------------------- ingest

pub struct IngestRequest {
    pub source: Option<String>,
    pub flairs: Vec<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub out_posts: Option<PathBuf>,
    pub out_comments: Option<PathBuf>,
    pub rejects: Option<PathBuf>,
    pub keep_all_comments: bool,
}

pub fn ingest_filter(cfg: &Config, flairs: &[String], from: Option<NaiveDate>, to: Option<NaiveDate>) -> IngestFilter {
    let flairs = if flairs.is_empty() { cfg.ingest.flairs.clone() } else { flairs.to_vec() };
    let mut filter = IngestFilter::default().with_flairs(flairs);
    let (from, to) = (from.or(cfg.ingest.from), to.or(cfg.ingest.to));
    if from.is_some() || to.is_some() {
        filter = filter.with_days(from.unwrap_or(NaiveDate::MIN), to.unwrap_or(NaiveDate::MAX));
    }
    if let Some(list) = &cfg.ingest.bot_blocklist {
        filter.bot_blocklist = list.iter().cloned().collect();
    }
    filter
}

/// Manifest label for a file whose location depends on the invocation
/// directory: its name alone.
pub fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub struct Ingested {
    pub posts: Vec<Post>,
    pub comments: Vec<Comment>,
    pub rejects: usize,
}

/// Fetches posts and every comment belonging to a kept post.
pub fn fetch(source: &str, filter: &IngestFilter, out: [&Path; 3], manifest: &mut ManifestBuilder) -> Outcome<Ingested> {
    let parsed = Source::parse(source);
    if let Source::Dump { posts, comments } = &parsed {
        manifest.input(file_label(posts), posts).invalid()?;
        if let Some(c) = comments {
            manifest.input(file_label(c), c).invalid()?;
        }
    }
    let posts = fetch_posts(&parsed, filter)?;
    let comments = fetch_comments(&parsed)?;
    let kept = comments_for_posts(comments.records, &posts.records);
    let mut rejects = posts.rejects;
    rejects.extend(comments.rejects);
    let [p, c, r] = out;
    write(p, &posts.records)?;
    write(c, &kept)?;
    write(r, &rejects)?;
    for path in out {
        manifest.output(path);
    }
    Ok(Ingested { posts: posts.records, comments: kept, rejects: rejects.len() })
}

pub fn ingest(ctx: &Ctx, req: IngestRequest) -> Outcome<()> {
    let source = match (&req.source, &ctx.cfg.ingest.source) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => ctx.cfg.resolve_source(s),
        (None, None) => return Err(Failure::validation(anyhow!("no source: pass --source or set ingest.source"))),
    };
    let filter = ingest_filter(&ctx.cfg, &req.flairs, req.from, req.to);
    let posts_out = ctx.out_path(req.out_posts.as_deref(), "posts.jsonl");
    let comments_out = ctx.out_path(req.out_comments.as_deref(), "comments.jsonl");
    let rejects_out = ctx.out_path(req.rejects.as_deref(), "rejects.jsonl");
    let mut manifest = ctx.manifest("ingest");
    let got = fetch(&source, &filter, [&posts_out, &comments_out, &rejects_out], &mut manifest)?;
    let mut comments = got.comments;
    if !req.keep_all_comments {
        comments = filter_comments(&comments, &filter);
        write(&comments_out, &comments)?;
    }
    manifest.counter("posts", got.posts.len() as u64);
    manifest.counter("comments", comments.len() as u64);
    manifest.counter("rejects", got.rejects as u64);
    let dir = posts_out.parent().unwrap_or(Path::new("")).to_path_buf();
    manifest.write(&dir.join("ingest.manifest.json")).invalid()?;
    println!("ingest: {} posts, {} comments, {} rejects", got.posts.len(), comments.len(), got.rejects);
    Ok(())
}

// ---------------------------------------------------------- identify-claims

pub struct ClaimsRequest {
    pub input: PathBuf,
    pub strategy: Option<Strategy>,
    pub exemplars: Option<PathBuf>,
    pub exemplar_count: Option<usize>,
    pub exclude_exemplar_titles: bool,
    pub out: Option<PathBuf>,
}

/// Loads claim exemplars and picks `count` of them. When the file holds more,
/// a seeded sample is taken and kept in file order.
pub fn load_claim_exemplars(path: &Path, count: usize, seed: u64) -> Outcome<Vec<ClaimExemplar>> {
    let all: Vec<ClaimExemplar> = read(path)?;
    if all.len() <= count {
        return Ok(all);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, all.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| all[i].clone()).collect())
}

pub struct ClaimStage {
    pub kept: Vec<TitleRecord>,
    pub excluded: usize,
    pub predictions: Vec<ClaimPrediction>,
    pub backend: BackendInfo,
    pub strategy: Strategy,
}

pub struct ClaimSettings {
    pub strategy: Strategy,
    pub exemplars: Option<(String, PathBuf)>,
    pub exemplar_count: usize,
    pub exclude_exemplar_titles: bool,
}

impl ClaimSettings {
    pub fn resolve(ctx: &Ctx, strategy: Option<Strategy>, exemplars: Option<&Path>, count: Option<usize>, exclude: bool) -> Outcome<Self> {
        let strategy = match (strategy, &ctx.cfg.claims.strategy) {
            (Some(s), _) => s,
            (None, Some(s)) => parse_strategy(s).map_err(|e| Failure::validation(anyhow!(e)))?,
            (None, None) => Strategy::ZeroShot,
        };
        Ok(ClaimSettings {
            strategy,
            exemplars: ctx.pick(exemplars, ctx.cfg.claims.exemplars.as_ref()),
            exemplar_count: count.or(ctx.cfg.claims.exemplar_count).unwrap_or(DEFAULT_CLAIM_EXEMPLARS),
            exclude_exemplar_titles: exclude || ctx.cfg.claims.exclude_exemplar_titles.unwrap_or(false),
        })
    }
}

pub fn run_claims(ctx: &Ctx, titles: Vec<TitleRecord>, settings: &ClaimSettings, manifest: &mut ManifestBuilder) -> Outcome<ClaimStage> {
    let exemplars = match &settings.exemplars {
        Some((label, path)) => {
            manifest.input(label.clone(), path).invalid()?;
            load_claim_exemplars(path, settings.exemplar_count, ctx.seed())?
        }
        None => Vec::new(),
    };
    if settings.exclude_exemplar_titles && exemplars.is_empty() {
        return Err(Failure::validation(anyhow!("excluding exemplar titles needs an exemplar file")));
    }
    let (kept, excluded) = if settings.exclude_exemplar_titles {
        exclude_exemplar_titles(titles, &exemplars)
    } else {
        (titles, Vec::new())
    };
    let prompt_exemplars = if settings.strategy == Strategy::ZeroShot { Vec::new() } else { exemplars };
    let spec = PromptSpec::with_claim_exemplar_count(
        Task::ClaimId,
        settings.strategy,
        Exemplars::Claim(prompt_exemplars),
        settings.exemplar_count,
    )
    .invalid()?;
    let backend = ctx.backend()?;
    for (label, path) in &backend.inputs {
        manifest.input(label.clone(), path).invalid()?;
    }
    let input_digest = sha256_hex(serde_json::to_string(&kept).expect("titles serialize").as_bytes());
    let fp = fingerprint(&[
        "identify-claims",
        &backend.info.name,
        &backend.info.model_id,
        settings.strategy.as_str(),
        TEMPLATE_VERSION,
        &input_digest,
    ]);
    let predictions = identify_claims(&kept, &backend.gateway, &spec, &ctx.batch_options("identify-claims", fp))?;
    log_stats("identify-claims", &backend.gateway);
    manifest.backend(Some(backend.info.clone()));
    manifest.strategy(settings.strategy.as_str());
    Ok(ClaimStage { kept, excluded: excluded.len(), predictions, backend: backend.info, strategy: settings.strategy })
}

fn log_stats(stage: &str, gateway: &Gateway) {
    let s = gateway.stats();
    tracing::info!(stage, requests = s.requests, network_calls = s.network_calls, cache_hits = s.cache_hits, "backend usage");
}

pub fn identify(ctx: &Ctx, req: ClaimsRequest) -> Outcome<()> {
    let settings = ClaimSettings::resolve(ctx, req.strategy, req.exemplars.as_deref(), req.exemplar_count, req.exclude_exemplar_titles)?;
    let mut manifest = ctx.manifest("identify-claims");
    manifest.input(req.input.display().to_string(), &req.input).invalid()?;
    let titles: Vec<TitleRecord> = read(&req.input)?;
    let stage = run_claims(ctx, titles, &settings, &mut manifest)?;
    let out = ctx.out_path(req.out.as_deref(), "claims.jsonl");
    write(&out, &stage.predictions)?;
    manifest.output(&out);
    let positive = stage.predictions.iter().filter(|p| p.predicted).count();
    let failures = stage.predictions.iter().filter(|p| p.parse_failed).count();
    manifest.counter("titles", stage.kept.len() as u64);
    manifest.counter("excluded_exemplar_titles", stage.excluded as u64);
    manifest.counter("claim_positive", positive as u64);
    manifest.counter("parse_failures", failures as u64);
    manifest.write(&sidecar(&out)).invalid()?;
    println!("identify-claims: {} titles, {} flagged, {} unparseable", stage.kept.len(), positive, failures);
    check_budget("identify-claims", failures, stage.predictions.len(), ctx.cfg.parse_failure_budget())
}

// ------------------------------------------------------------ build-pairs

#[derive(Debug, Clone, Default, Serialize)]
pub struct PairFunnel {
    pub claim_positive: usize,
    pub claim_confirmed: usize,
    pub top_level_comments: usize,
    pub comments_after_filter: usize,
    pub pairs_available: usize,
    pub pairs_sampled: usize,
}

/// Posts flagged by the claim filter, their labels after review, and the
/// pairs built from their surviving top-level comments.
pub fn assemble_pairs(
    posts: &[Post],
    comments: &[Comment],
    predictions: &[ClaimPrediction],
    annotations: &[ClaimAnnotation],
    filter: &IngestFilter,
) -> Outcome<(Vec<StancePair>, PairFunnel)> {
    let predicted: BTreeMap<&str, bool> = predictions.iter().map(|p| (p.post_id.as_str(), p.predicted)).collect();
    let flagged: Vec<Post> = posts.iter().filter(|p| predicted.get(p.id.as_str()) == Some(&true)).cloned().collect();
    let titles: Vec<TitleRecord> = flagged.iter().map(TitleRecord::from).collect();
    let labels = claim_labels_from_predictions(&titles, predictions, annotations)?;
    let labels: BTreeMap<_, _> = labels.into_iter().filter(|(id, _)| predicted.get(id.as_str()) == Some(&true)).collect();
    let top_level: Vec<Comment> =
        comments_for_posts(comments.to_vec(), &flagged).into_iter().filter(Comment::is_top_level).collect();
    let kept = filter_comments(&top_level, filter);
    let pairs = build_pairs(&flagged, &kept, &labels)?;
    let funnel = PairFunnel {
        claim_positive: flagged.len(),
        claim_confirmed: labels.values().filter(|l| l.has_claim()).count(),
        top_level_comments: top_level.len(),
        comments_after_filter: kept.len(),
        pairs_available: pairs.len(),
        pairs_sampled: pairs.len(),
    };
    Ok((pairs, funnel))
}

pub fn attach_gold(pairs: &mut [StancePair], gold: &[GoldStance]) -> usize {
    let by_id: BTreeMap<&str, _> = gold.iter().map(|g| (g.pair_id.as_str(), g.gold_stance)).collect();
    let mut attached = 0;
    for pair in pairs.iter_mut() {
        if let Some(label) = by_id.get(pair.pair_id.as_str()) {
            pair.gold_stance = Some(*label);
            attached += 1;
        }
    }
    attached
}

pub struct PairsRequest {
    pub posts: PathBuf,
    pub comments: PathBuf,
    pub claims: PathBuf,
    pub annotations: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub sample: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn pairs(ctx: &Ctx, req: PairsRequest) -> Outcome<()> {
    let mut manifest = ctx.manifest("build-pairs");
    for p in [&req.posts, &req.comments, &req.claims] {
        manifest.input(p.display().to_string(), p).invalid()?;
    }
    let posts: Vec<Post> = read(&req.posts)?;
    let comments: Vec<Comment> = read(&req.comments)?;
    let predictions: Vec<ClaimPrediction> = read(&req.claims)?;
    let annotations: Vec<ClaimAnnotation> = match ctx.pick(req.annotations.as_deref(), ctx.cfg.claims.annotations.as_ref()) {
        Some((label, path)) => {
            manifest.input(label, &path).invalid()?;
            read(&path)?
        }
        None => Vec::new(),
    };
    let filter = ingest_filter(&ctx.cfg, &[], None, None);
    let (mut pairs, mut funnel) = assemble_pairs(&posts, &comments, &predictions, &annotations, &filter)?;
    if let Some((label, path)) = ctx.pick(req.gold.as_deref(), ctx.cfg.stance.gold.as_ref()) {
        manifest.input(label, &path).invalid()?;
        let gold: Vec<GoldStance> = read(&path)?;
        attach_gold(&mut pairs, &gold);
    }
    if let Some(n) = req.sample {
        pairs = sample_pairs(&pairs, n, ctx.seed());
    }
    funnel.pairs_sampled = pairs.len();
    let out = ctx.out_path(req.out.as_deref(), "pairs.jsonl");
    write(&out, &pairs)?;
    manifest.output(&out);
    funnel_counters(&mut manifest, &funnel);
    manifest.write(&sidecar(&out)).invalid()?;
    println!(
        "build-pairs: {} flagged posts ({} confirmed), {} top-level comments, {} after filtering, {} pairs written",
        funnel.claim_positive, funnel.claim_confirmed, funnel.top_level_comments, funnel.comments_after_filter, funnel.pairs_sampled
    );
    Ok(())
}

fn funnel_counters(manifest: &mut ManifestBuilder, f: &PairFunnel) {
    manifest.counter("claim_positive", f.claim_positive as u64);
    manifest.counter("claim_confirmed", f.claim_confirmed as u64);
    manifest.counter("top_level_comments", f.top_level_comments as u64);
    manifest.counter("comments_after_filter", f.comments_after_filter as u64);
    manifest.counter("pairs_available", f.pairs_available as u64);
    manifest.counter("pairs_sampled", f.pairs_sampled as u64);
}

// ---------------------------------------------------------- detect-stance

pub struct StanceSettings {
    pub fewshot: Option<(String, PathBuf)>,
    pub cot: Option<(String, PathBuf)>,
    pub nli_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub threshold: Option<f64>,
    pub orientation: stancemine_core::stance::Orientation,
    pub timeout: Duration,
}

impl StanceSettings {
    pub fn from_config(ctx: &Ctx) -> Self {
        let s = &ctx.cfg.stance;
        StanceSettings {
            fewshot: ctx.pick(None, s.fewshot_exemplars.as_ref()),
            cot: ctx.pick(None, s.cot_exemplars.as_ref()),
            nli_endpoint: s.nli_endpoint.clone(),
            embed_endpoint: s.embed_endpoint.clone(),
            threshold: s.sts_threshold,
            orientation: s.orientation.unwrap_or_default(),
            timeout: Duration::from_millis(s.endpoint_timeout_ms.unwrap_or(30_000)),
        }
    }
}

pub fn run_stance(
    ctx: &Ctx,
    pairs: &[StancePair],
    method: StanceMethod,
    settings: &StanceSettings,
    manifest: &mut ManifestBuilder,
) -> Outcome<Vec<StancePrediction>> {
    let input_digest = sha256_hex(serde_json::to_string(pairs).expect("pairs serialize").as_bytes());
    let stage = format!("detect-stance-{}", method.as_str());
    manifest.strategy(method.as_str());
    let need = |v: &Option<String>, what: &str| {
        v.clone().ok_or_else(|| Failure::validation(anyhow!("method {} needs --{what}", method.as_str())))
    };
    match method.strategy() {
        Some(strategy) => {
            let exemplars: Vec<StanceExemplar> = match strategy {
                Strategy::ZeroShot => Vec::new(),
                Strategy::FewShot | Strategy::ChainOfThought => {
                    let source = if strategy == Strategy::FewShot { &settings.fewshot } else { &settings.cot };
                    let (label, path) = source
                        .clone()
                        .ok_or_else(|| Failure::validation(anyhow!("method {} needs --exemplars", method.as_str())))?;
                    manifest.input(label, &path).invalid()?;
                    read(&path)?
                }
            };
            let spec = PromptSpec::new(Task::Stance, strategy, Exemplars::Stance(exemplars)).invalid()?;
            let backend = ctx.backend()?;
            for (label, path) in &backend.inputs {
                manifest.input(label.clone(), path).invalid()?;
            }
            let fp = fingerprint(&[&stage, &backend.info.name, &backend.info.model_id, TEMPLATE_VERSION, &input_digest]);
            let preds = detect_stance_llm(pairs, &backend.gateway, &spec, &ctx.batch_options(&stage, fp))?;
            log_stats(&stage, &backend.gateway);
            manifest.backend(Some(backend.info));
            Ok(preds)
        }
        None if method == StanceMethod::Nli => {
            let url = need(&settings.nli_endpoint, "nli-endpoint")?;
            let scorer = HttpNliScorer::new(&url, settings.timeout);
            let fp = fingerprint(&[&stage, &url, &input_digest]);
            Ok(detect_stance_nli(pairs, &scorer, settings.orientation, &ctx.batch_options(&stage, fp))?)
        }
        None => {
            let nli = need(&settings.nli_endpoint, "nli-endpoint")?;
            let embed = need(&settings.embed_endpoint, "embed-endpoint")?;
            let mut sts = StsConfig::new(&embed, &nli);
            if let Some(t) = settings.threshold {
                sts.similarity_threshold = t;
            }
            sts.orientation = settings.orientation;
            let threshold = sts.similarity_threshold.to_string();
            let fp = fingerprint(&[&stage, &nli, &embed, &threshold, &input_digest]);
            let scorer = HttpNliScorer::new(&nli, settings.timeout);
            let embedder = HttpEmbedder::new(&embed, settings.timeout);
            Ok(detect_stance_sts(pairs, &embedder, &scorer, &sts, &ctx.batch_options(&stage, fp))?)
        }
    }
}

pub struct StanceRequest {
    pub input: PathBuf,
    pub method: Option<StanceMethod>,
    pub exemplars: Option<PathBuf>,
    pub sts_threshold: Option<f64>,
    pub nli_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub orientation: Option<stancemine_core::stance::Orientation>,
    pub out: Option<PathBuf>,
}

pub fn stance(ctx: &Ctx, req: StanceRequest) -> Outcome<()> {
    let method = req
        .method
        .or_else(|| ctx.cfg.stance.methods.first().copied())
        .ok_or_else(|| Failure::validation(anyhow!("no method: pass --method or set stance.methods")))?;
    let mut settings = StanceSettings::from_config(ctx);
    if let Some(p) = &req.exemplars {
        let picked = Some((p.display().to_string(), p.clone()));
        settings.fewshot = picked.clone();
        settings.cot = picked;
    }
    settings.nli_endpoint = req.nli_endpoint.or(settings.nli_endpoint);
    settings.embed_endpoint = req.embed_endpoint.or(settings.embed_endpoint);
    settings.threshold = req.sts_threshold.or(settings.threshold);
    settings.orientation = req.orientation.unwrap_or(settings.orientation);

    let mut manifest = ctx.manifest("detect-stance");
    manifest.input(req.input.display().to_string(), &req.input).invalid()?;
    let pairs: Vec<StancePair> = read(&req.input)?;
    let preds = run_stance(ctx, &pairs, method, &settings, &mut manifest)?;
    let out = ctx.out_path(req.out.as_deref(), "preds.jsonl");
    write(&out, &preds)?;
    manifest.output(&out);
    let failures = preds.iter().filter(|p| p.parse_failed).count();
    manifest.counter("pairs", preds.len() as u64);
    manifest.counter("parse_failures", failures as u64);
    manifest.write(&sidecar(&out)).invalid()?;
    println!("detect-stance: {} pairs with {}, {} unparseable", preds.len(), method.as_str(), failures);
    check_budget("detect-stance", failures, preds.len(), ctx.cfg.parse_failure_budget())
}

// ------------------------------------------------ evaluate / diagnose / distribution

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    Stance,
    Claims,
}

pub fn parse_eval_task(s: &str) -> Result<EvalTask, String> {
    match s {
        "stance" => Ok(EvalTask::Stance),
        "claims" | "claim" => Ok(EvalTask::Claims),
        other => Err(format!("unknown task {other:?} (expected stance or claims)")),
    }
}

pub struct EvalRequest {
    pub task: EvalTask,
    pub gold: PathBuf,
    pub pred: PathBuf,
    pub out: Option<PathBuf>,
    pub failure_policy: Option<FailurePolicy>,
}

/// Claim gold from reviewer notes; notes without `has_claim` are skipped.
pub fn claim_gold(annotations: &[ClaimAnnotation]) -> BTreeMap<String, bool> {
    annotations.iter().filter_map(|a| a.has_claim.map(|h| (a.post_id.clone(), h))).collect()
}

pub fn evaluate(ctx: &Ctx, req: EvalRequest) -> Outcome<()> {
    let policy = req.failure_policy.unwrap_or_else(|| ctx.cfg.failure_policy());
    let mut manifest = ctx.manifest("evaluate");
    manifest.input(req.gold.display().to_string(), &req.gold).invalid()?;
    manifest.input(req.pred.display().to_string(), &req.pred).invalid()?;
    let report = match req.task {
        EvalTask::Stance => {
            let pairs: Vec<StancePair> = read(&req.gold)?;
            let preds: Vec<StancePrediction> = read(&req.pred)?;
            evaluate_stance(&pairs, &preds, policy).invalid()?
        }
        EvalTask::Claims => {
            let notes: Vec<ClaimAnnotation> = read(&req.gold)?;
            let preds: Vec<ClaimPrediction> = read(&req.pred)?;
            evaluate_claims(&claim_gold(&notes), &preds, policy).invalid()?
        }
    };
    let out = ctx.out_path(req.out.as_deref(), "report.json");
    write_report(&out, &report)?;
    manifest.output(&out);
    manifest.write(&sidecar(&out)).invalid()?;
    print!("{}", report.table());
    let scored = report.total as usize + report.excluded_count;
    check_budget("evaluate", report.parse_failure_count, scored, ctx.cfg.parse_failure_budget())
}

pub struct DiagnoseRequest {
    pub by: Stratifier,
    pub gold: PathBuf,
    pub pred: PathBuf,
    pub out: Option<PathBuf>,
    pub failure_policy: Option<FailurePolicy>,
}

pub fn diagnose(ctx: &Ctx, req: DiagnoseRequest) -> Outcome<()> {
    let policy = req.failure_policy.unwrap_or_else(|| ctx.cfg.failure_policy());
    let mut manifest = ctx.manifest("diagnose");
    manifest.input(req.gold.display().to_string(), &req.gold).invalid()?;
    manifest.input(req.pred.display().to_string(), &req.pred).invalid()?;
    let pairs: Vec<StancePair> = read(&req.gold)?;
    let preds: Vec<StancePrediction> = read(&req.pred)?;
    let report = stratified_eval(&pairs, &preds, req.by, policy).invalid()?;
    let out = ctx.out_path(req.out.as_deref(), "strata.json");
    write_report(&out, &report)?;
    manifest.output(&out);
    manifest.write(&sidecar(&out)).invalid()?;
    print!("{}", report.table());
    Ok(())
}

pub struct DistributionRequest {
    pub gold: PathBuf,
    pub pred: PathBuf,
    pub out: Option<PathBuf>,
    pub failure_policy: Option<FailurePolicy>,
}

pub fn distribution(ctx: &Ctx, req: DistributionRequest) -> Outcome<()> {
    let policy = req.failure_policy.unwrap_or_else(|| ctx.cfg.failure_policy());
    let mut manifest = ctx.manifest("distribution");
    manifest.input(req.gold.display().to_string(), &req.gold).invalid()?;
    manifest.input(req.pred.display().to_string(), &req.pred).invalid()?;
    let pairs: Vec<StancePair> = read(&req.gold)?;
    let preds: Vec<StancePrediction> = read(&req.pred)?;
    let dist = stance_distribution(&pairs, &preds, policy).invalid()?;
    let out = ctx.out_path(req.out.as_deref(), "distribution.json");
    write_report(&out, &dist)?;
    manifest.output(&out);
    manifest.write(&sidecar(&out)).invalid()?;
    print!("{}", dist.table());
    Ok(())
}
