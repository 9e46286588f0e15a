//! The `run` command: every stage in order over one output directory.
//!
//! ```text
//! <out>/posts.jsonl  comments.jsonl  rejects.jsonl
//! <out>/claims.jsonl  claims_report.json
//! <out>/pairs.jsonl
//! <out>/stance/<method>/preds.jsonl  report.json  strata_claim_type.json
//!                       strata_length.json  distribution.json
//! <out>/funnel.json  manifest.json
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::anyhow;
use serde::Serialize;
use stancemine_core::claims::{ClaimAnnotation, TitleRecord};
use stancemine_core::eval::{evaluate_claims, evaluate_stance, stance_distribution, stratified_eval, Stratifier};
use stancemine_core::ingest::sample_pairs;
use stancemine_core::model::{read_jsonl, write_jsonl, StancePair};
use stancemine_core::stance::StanceMethod;
use stancemine_core::synthetic::GoldStance;

use crate::commands::{
    assemble_pairs, attach_gold, check_budget, claim_gold, fetch, file_label, ingest_filter, run_claims, run_stance, ClaimSettings, Ctx,
    PairFunnel, StanceSettings,
};
use crate::config::DEFAULT_SAMPLE_SIZE;
use crate::exit::{Failure, OrExit, Outcome};
use crate::manifest::{write_json, ManifestBuilder};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Funnel {
    pub posts_after_filter: usize,
    pub excluded_exemplar_titles: usize,
    pub claim_inputs: usize,
    pub claim_positive: usize,
    pub claim_confirmed: usize,
    pub comments_fetched: usize,
    pub top_level_comments: usize,
    pub comments_after_filter: usize,
    pub pairs_available: usize,
    pub pairs_sampled: usize,
    pub gold_attached: usize,
    /// Unparseable replies per stance method.
    pub stance_parse_failures: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub sample_size: Option<usize>,
    pub methods: Vec<StanceMethod>,
}

fn stage<T>(name: &str, r: Outcome<T>) -> Outcome<T> {
    r.map_err(|f| f.in_stage(name))
}

pub fn run(ctx: &Ctx, req: RunRequest) -> Outcome<Funnel> {
    let cfg = &ctx.cfg;
    let out = ctx.out_dir();
    std::fs::create_dir_all(&out).invalid()?;
    let mut manifest = ctx.manifest("run");
    if let Some(path) = &ctx.config_path {
        manifest.input(file_label(path), path).invalid()?;
    }
    let mut funnel = Funnel::default();

    let source = cfg
        .ingest
        .source
        .as_deref()
        .map(|s| cfg.resolve_source(s))
        .ok_or_else(|| Failure::validation(anyhow!("run needs ingest.source in the config")))?;
    let filter = ingest_filter(cfg, &[], None, None);
    let (posts_out, comments_out, rejects_out) = (out.join("posts.jsonl"), out.join("comments.jsonl"), out.join("rejects.jsonl"));
    let ingested = stage("ingest", fetch(&source, &filter, [&posts_out, &comments_out, &rejects_out], &mut manifest))?;
    funnel.posts_after_filter = ingested.posts.len();
    funnel.comments_fetched = ingested.comments.len();

    let settings = stage("identify-claims", ClaimSettings::resolve(ctx, None, None, None, false))?;
    let titles: Vec<TitleRecord> = ingested.posts.iter().map(TitleRecord::from).collect();
    let claims = stage("identify-claims", run_claims(ctx, titles, &settings, &mut manifest))?;
    let claims_out = out.join("claims.jsonl");
    stage("identify-claims", write_jsonl(&claims_out, &claims.predictions).invalid())?;
    manifest.output(&claims_out);
    funnel.excluded_exemplar_titles = claims.excluded;
    funnel.claim_inputs = claims.kept.len();

    let annotations: Vec<ClaimAnnotation> = match ctx.pick(None, cfg.claims.annotations.as_ref()) {
        Some((label, path)) => {
            manifest.input(label, &path).invalid()?;
            stage("build-pairs", read_jsonl(&path).invalid())?
        }
        None => Vec::new(),
    };
    let gold = claim_gold(&annotations);
    if claims.predictions.iter().all(|p| gold.contains_key(&p.post_id)) && !claims.predictions.is_empty() {
        let report = stage("evaluate", evaluate_claims(&gold, &claims.predictions, cfg.failure_policy()).invalid())?;
        let path = out.join("claims_report.json");
        stage("evaluate", write_json(&path, &report).invalid())?;
        manifest.output(&path);
    } else {
        tracing::warn!("claim annotations do not cover every title; skipping the claim report");
    }

    let (mut pairs, pf) = stage(
        "build-pairs",
        assemble_pairs(&ingested.posts, &ingested.comments, &claims.predictions, &annotations, &filter),
    )?;
    let PairFunnel { claim_positive, claim_confirmed, top_level_comments, comments_after_filter, pairs_available, .. } = pf;
    funnel.claim_positive = claim_positive;
    funnel.claim_confirmed = claim_confirmed;
    funnel.top_level_comments = top_level_comments;
    funnel.comments_after_filter = comments_after_filter;
    funnel.pairs_available = pairs_available;
    if let Some((label, path)) = ctx.pick(None, cfg.stance.gold.as_ref()) {
        manifest.input(label, &path).invalid()?;
        let gold: Vec<GoldStance> = stage("build-pairs", read_jsonl(&path).invalid())?;
        attach_gold(&mut pairs, &gold);
    }
    let n = req.sample_size.or(cfg.run.sample_size).unwrap_or(DEFAULT_SAMPLE_SIZE);
    pairs = sample_pairs(&pairs, n, ctx.seed());
    funnel.pairs_sampled = pairs.len();
    funnel.gold_attached = pairs.iter().filter(|p| p.gold_stance.is_some()).count();
    let pairs_out = out.join("pairs.jsonl");
    stage("build-pairs", write_jsonl(&pairs_out, &pairs).invalid())?;
    manifest.output(&pairs_out);

    let methods = if req.methods.is_empty() { cfg.stance.methods.clone() } else { req.methods.clone() };
    let stance_settings = StanceSettings::from_config(ctx);
    let method_names: Vec<&str> = methods.iter().map(|m| m.as_str()).collect();
    let mut over_budget = None;
    for &method in &methods {
        let name = format!("detect-stance ({})", method.as_str());
        let preds = stage(&name, run_stance(ctx, &pairs, method, &stance_settings, &mut manifest))?;
        let dir = out.join("stance").join(method.as_str());
        let preds_out = dir.join("preds.jsonl");
        stage(&name, std::fs::create_dir_all(&dir).invalid())?;
        stage(&name, write_jsonl(&preds_out, &preds).invalid())?;
        manifest.output(&preds_out);
        let failures = preds.iter().filter(|p| p.parse_failed).count();
        funnel.stance_parse_failures.insert(method.as_str().to_string(), failures);
        if funnel.gold_attached == pairs.len() && !pairs.is_empty() {
            let name = format!("evaluate ({})", method.as_str());
            stage(&name, write_reports(ctx, &pairs, &preds, &dir, &mut manifest))?;
        }
        if over_budget.is_none() {
            over_budget = check_budget(&format!("detect-stance {}", method.as_str()), failures, preds.len(), cfg.parse_failure_budget()).err();
        }
    }
    manifest.strategy(format!("claims={} stance={}", claims.strategy.as_str(), method_names.join(",")));
    manifest.backend(Some(claims.backend.clone()));

    let funnel_out = out.join("funnel.json");
    write_json(&funnel_out, &funnel).invalid()?;
    manifest.output(&funnel_out);
    record_funnel(&mut manifest, &funnel);
    manifest.write(&out.join("manifest.json")).invalid()?;
    match over_budget {
        Some(f) => Err(f),
        None => Ok(funnel),
    }
}

fn write_reports(
    ctx: &Ctx,
    pairs: &[StancePair],
    preds: &[stancemine_core::stance::StancePrediction],
    dir: &Path,
    manifest: &mut ManifestBuilder,
) -> Outcome<()> {
    let policy = ctx.cfg.failure_policy();
    let report = evaluate_stance(pairs, preds, policy).invalid()?;
    let path = dir.join("report.json");
    write_json(&path, &report).invalid()?;
    manifest.output(&path);
    for (by, file) in [(Stratifier::ClaimType, "strata_claim_type.json"), (Stratifier::CommentLength, "strata_length.json")] {
        let strata = stratified_eval(pairs, preds, by, policy).invalid()?;
        let path = dir.join(file);
        write_json(&path, &strata).invalid()?;
        manifest.output(&path);
    }
    let dist = stance_distribution(pairs, preds, policy).invalid()?;
    let path = dir.join("distribution.json");
    write_json(&path, &dist).invalid()?;
    manifest.output(&path);
    Ok(())
}

fn record_funnel(manifest: &mut ManifestBuilder, f: &Funnel) {
    for (name, value) in [
        ("posts_after_filter", f.posts_after_filter),
        ("excluded_exemplar_titles", f.excluded_exemplar_titles),
        ("claim_inputs", f.claim_inputs),
        ("claim_positive", f.claim_positive),
        ("claim_confirmed", f.claim_confirmed),
        ("top_level_comments", f.top_level_comments),
        ("comments_after_filter", f.comments_after_filter),
        ("pairs_available", f.pairs_available),
        ("pairs_sampled", f.pairs_sampled),
    ] {
        manifest.counter(name, value as u64);
    }
}
