use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn synthetic(name: &str) -> PathBuf {
    root().join("fixtures/synthetic").join(name)
}

fn exemplars(name: &str) -> PathBuf {
    root().join("fixtures/exemplars").join(name)
}

fn stancemine<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_stancemine")).args(args).env_remove("SOURCE_DATE_EPOCH").output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Every output digest recorded in a manifest matches the file on disk.
fn assert_manifest_digests(manifest: &Path) {
    let m = read(manifest);
    let base = manifest.parent().unwrap();
    let outputs = m["outputs"].as_object().unwrap();
    assert!(!outputs.is_empty(), "{}", manifest.display());
    for (rel, digest) in outputs {
        let bytes = std::fs::read(base.join(rel)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(bytes)), digest.as_str().unwrap(), "{rel}");
    }
    for key in ["command", "tool_version", "config_hash", "inputs", "timestamp"] {
        assert!(m.get(key).is_some(), "{key} missing from {}", manifest.display());
    }
}

#[test]
fn help_lists_every_flag() {
    let cases: &[(&str, &[&str])] = &[
        ("ingest", &["--source", "--flair", "--from", "--to", "--out-posts", "--out-comments", "--rejects"]),
        ("identify-claims", &["--in", "--strategy", "--exemplars", "--exemplar-count", "--exclude-exemplar-titles", "--out"]),
        ("build-pairs", &["--posts", "--comments", "--claims", "--annotations", "--gold", "--sample", "--out"]),
        (
            "detect-stance",
            &["--in", "--method", "--exemplars", "--sts-threshold", "--nli-endpoint", "--embed-endpoint", "--orientation", "--out"],
        ),
        ("evaluate", &["--task", "--gold", "--pred", "--out", "--failure-policy", "--parse-failure-budget"]),
        ("diagnose", &["--by", "--gold", "--pred", "--out"]),
        ("distribution", &["--gold", "--pred", "--out"]),
        ("serve", &["--host", "--port", "--tasks", "--min-labels", "--log", "--static"]),
        ("run", &["--sample-size", "--method"]),
    ];
    for (cmd, flags) in cases {
        let help = ok(stancemine([cmd, &"--help"]));
        for flag in flags.iter().chain(&["--config", "--backend", "--no-cache", "--seed", "--out-dir"]) {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
    }
}

#[test]
fn stages_chain_and_match_the_run_command() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let config = synthetic("run.toml");
    let cfg = ["--config".as_ref(), config.as_os_str(), "--out-dir".as_ref(), d.as_os_str()];

    ok(stancemine(
        [&cfg[..], &["ingest".as_ref(), "--source".as_ref(), synthetic(".").as_os_str()]].concat(),
    ));
    assert_eq!(jsonl(&d.join("posts.jsonl")).len(), 202);
    assert_manifest_digests(&d.join("ingest.manifest.json"));

    let claims = d.join("claims.jsonl");
    ok(stancemine(
        [
            &cfg[..],
            &[
                "identify-claims".as_ref(),
                "--in".as_ref(),
                d.join("posts.jsonl").as_os_str(),
                "--strategy".as_ref(),
                "few".as_ref(),
                "--exemplars".as_ref(),
                exemplars("claim_fewshot.jsonl").as_os_str(),
                "--exclude-exemplar-titles".as_ref(),
                "--out".as_ref(),
                claims.as_os_str(),
            ],
        ]
        .concat(),
    ));
    let preds = jsonl(&claims);
    assert_eq!(preds.len(), 193);
    assert_eq!(preds.iter().filter(|p| p["predicted"] == true).count(), 96);
    assert_manifest_digests(&d.join("claims.jsonl.manifest.json"));

    let pairs = d.join("pairs.jsonl");
    ok(stancemine(
        [
            &cfg[..],
            &[
                "build-pairs".as_ref(),
                "--posts".as_ref(),
                d.join("posts.jsonl").as_os_str(),
                "--comments".as_ref(),
                d.join("comments.jsonl").as_os_str(),
                "--claims".as_ref(),
                claims.as_os_str(),
                "--annotations".as_ref(),
                synthetic("claims.jsonl").as_os_str(),
                "--gold".as_ref(),
                synthetic("stance_gold.jsonl").as_os_str(),
                "--sample".as_ref(),
                "400".as_ref(),
                "--out".as_ref(),
                pairs.as_os_str(),
            ],
        ]
        .concat(),
    ));
    assert_eq!(jsonl(&pairs).len(), 400);
    assert_manifest_digests(&d.join("pairs.jsonl.manifest.json"));

    let preds = d.join("preds.jsonl");
    ok(stancemine(
        [
            &cfg[..],
            &[
                "detect-stance".as_ref(),
                "--in".as_ref(),
                pairs.as_os_str(),
                "--method".as_ref(),
                "llm-cot".as_ref(),
                "--exemplars".as_ref(),
                exemplars("stance_cot.jsonl").as_os_str(),
                "--out".as_ref(),
                preds.as_os_str(),
            ],
        ]
        .concat(),
    ));
    assert_manifest_digests(&d.join("preds.jsonl.manifest.json"));

    let gp = ["--gold".as_ref(), pairs.as_os_str(), "--pred".as_ref(), preds.as_os_str()];
    let report = d.join("report.json");
    let table = ok(stancemine([&cfg[..], &["evaluate".as_ref()], &gp[..], &["--out".as_ref(), report.as_os_str()]].concat()));
    assert!(table.contains("macro"), "{table}");
    assert_eq!(read(&report)["excluded_count"], 1);
    let strata = d.join("strata.json");
    ok(stancemine(
        [&cfg[..], &["diagnose".as_ref(), "--by".as_ref(), "length".as_ref()], &gp[..], &["--out".as_ref(), strata.as_os_str()]]
            .concat(),
    ));
    let supports: u64 =
        read(&strata)["strata"].as_object().unwrap().values().map(|s| s["support"].as_u64().unwrap()).sum();
    assert_eq!(supports, 399);
    let dist = d.join("distribution.json");
    ok(stancemine([&cfg[..], &["distribution".as_ref()], &gp[..], &["--out".as_ref(), dist.as_os_str()]].concat()));
    assert_manifest_digests(&d.join("distribution.json.manifest.json"));

    // The one-shot pipeline produces the same artifacts from the same config.
    let run = d.join("run");
    ok(stancemine(["--config".as_ref(), config.as_os_str(), "--out-dir".as_ref(), run.as_os_str(), "run".as_ref()]));
    assert_manifest_digests(&run.join("manifest.json"));
    for (a, b) in [
        ("claims.jsonl", "claims.jsonl"),
        ("pairs.jsonl", "pairs.jsonl"),
        ("preds.jsonl", "stance/llm-cot/preds.jsonl"),
        ("report.json", "stance/llm-cot/report.json"),
        ("strata.json", "stance/llm-cot/strata_length.json"),
    ] {
        assert!(std::fs::read(d.join(a)).unwrap() == std::fs::read(run.join(b)).unwrap(), "{a} differs from run/{b}");
    }
}

fn serve<F>(handler: F) -> String
where
    F: Fn(Value) -> Value + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let reply = handler(serde_json::from_str(&body).unwrap_or(Value::Null)).to_string();
            let _ = req.respond(tiny_http::Response::from_string(reply));
        }
    });
    url
}

#[test]
fn nli_sts_with_fake_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let pairs = tmp.path().join("pairs.jsonl");
    let rows = [
        ("a_1", "it helped my fatigue", "Favor"),
        ("a_2", "off topic: parking at the clinic", "None"),
        ("a_3", "made my fatigue worse", "Against"),
        ("a_4", "off topic: anyone watching the game", "None"),
    ];
    let text: String = rows
        .iter()
        .map(|(id, c, g)| {
            let words = c.split_whitespace().count();
            format!(
                "{}\n",
                json!({"pair_id": id, "title": "Drug X reduces fatigue", "comment": c, "gold_stance": g,
                       "claim_type": "Explicit", "comment_word_count": words})
            )
        })
        .collect();
    std::fs::write(&pairs, text).unwrap();
    let nli = serve(|body| {
        if body["hypothesis"].as_str().unwrap().contains("worse") {
            json!({"entailment": 0.1, "neutral": 0.2, "contradiction": 0.7})
        } else {
            json!({"entailment": 0.7, "neutral": 0.2, "contradiction": 0.1})
        }
    });
    let embed = serve(|body| {
        let v: Vec<Vec<f64>> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| if t.as_str().unwrap().starts_with("off topic") { vec![0.0, 1.0] } else { vec![1.0, 0.1] })
            .collect();
        json!({ "vectors": v })
    });
    let out = tmp.path().join("preds.jsonl");
    ok(stancemine([
        "detect-stance".as_ref(),
        "--in".as_ref(),
        pairs.as_os_str(),
        "--method".as_ref(),
        "nli-sts".as_ref(),
        "--nli-endpoint".as_ref(),
        nli.as_ref(),
        "--embed-endpoint".as_ref(),
        embed.as_ref(),
        "--out".as_ref(),
        out.as_os_str(),
    ]));
    let preds = jsonl(&out);
    let got: Vec<&str> = preds.iter().map(|p| p["predicted"].as_str().unwrap()).collect();
    assert_eq!(got, ["Favor", "None", "Against", "None"]);
    for p in preds.iter().filter(|p| p["raw"]["similarity"].as_f64().unwrap() < 0.4) {
        assert_eq!(p["predicted"], "None");
    }
    let report = tmp.path().join("report.json");
    ok(stancemine(["evaluate", "--gold"].map(Into::into).into_iter().chain([
        pairs.clone().into_os_string(),
        "--pred".into(),
        out.into_os_string(),
        "--out".into(),
        report.clone().into_os_string(),
    ])));
    assert_eq!(read(&report)["macro_f1"], 1.0);
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("c.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn invalid_configuration_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[eval]\nparse_failure_budget = 1.5\n");
    let out = stancemine(["--config".as_ref(), cfg.as_os_str(), "run".as_ref()]);
    assert_eq!(out.status.code(), Some(2));
    let out = stancemine(["evaluate", "--gold", "/nonexistent/pairs.jsonl", "--pred", "/nonexistent/preds.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = stancemine(["diagnose", "--by", "sentiment", "--gold", "g", "--pred", "p"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_3_and_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let body = format!(
        "backend = \"dead\"\n\
         [backends.dead]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:{port}/v1/chat\"\nmodel_id = \"m\"\n\
         timeout_ms = 2000\nmax_attempts = 2\nbase_backoff_ms = 1\n\
         [ingest]\nsource = \"{}\"\nflairs = [\"Research\", \"Article\"]\nfrom = \"2023-03-01\"\nto = \"2023-03-31\"\n",
        synthetic(".").display()
    );
    let cfg = write_config(tmp.path(), &body);
    let out = stancemine([
        "--config".as_ref(),
        cfg.as_os_str(),
        "--out-dir".as_ref(),
        tmp.path().join("o").as_os_str(),
        "run".as_ref(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("identify-claims"), "{stderr}");
}

#[test]
fn parse_failures_over_budget_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("o");
    let config = synthetic("run.toml");
    ok(stancemine(["--config".as_ref(), config.as_os_str(), "--out-dir".as_ref(), d.as_os_str(), "run".as_ref()]));
    let pairs = d.join("pairs.jsonl");
    let preds = d.join("stance/llm-zero/preds.jsonl");
    let eval = |budget: &str| {
        stancemine([
            "evaluate".as_ref(),
            "--gold".as_ref(),
            pairs.as_os_str(),
            "--pred".as_ref(),
            preds.as_os_str(),
            "--parse-failure-budget".as_ref(),
            budget.as_ref(),
            "--out".as_ref(),
            tmp.path().join("r.json").as_os_str(),
        ])
    };
    assert_eq!(eval("0").status.code(), Some(4));
    assert!(eval("0.01").status.success());

    // A budget of zero in the config fails the whole run after writing everything.
    let strict = tmp.path().join("strict.toml");
    let text = std::fs::read_to_string(&config).unwrap().replace("parse_failure_budget = 0.05", "parse_failure_budget = 0.0");
    let text = text.replace("\"script.json\"", &format!("{:?}", synthetic("script.json").display().to_string()));
    let text = text.replace("source = \".\"", &format!("source = {:?}", synthetic(".").display().to_string()));
    let text = text.replace("\"../exemplars/", &format!("\"{}/", root().join("fixtures/exemplars").display()));
    let text = text.replace("\"claims.jsonl\"", &format!("{:?}", synthetic("claims.jsonl").display().to_string()));
    let text = text.replace("\"stance_gold.jsonl\"", &format!("{:?}", synthetic("stance_gold.jsonl").display().to_string()));
    std::fs::write(&strict, text).unwrap();
    let out_dir = tmp.path().join("strict");
    let out = stancemine(["--config".as_ref(), strict.as_os_str(), "--out-dir".as_ref(), out_dir.as_os_str(), "run".as_ref()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("manifest.json").exists());
    assert!(out_dir.join("stance/llm-cot/report.json").exists());
}

#[test]
fn rerun_uses_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let config = synthetic("run.toml");
    let args = |cache: bool| {
        let mut a = vec!["--config".into(), config.clone().into_os_string(), "--out-dir".into(), d.as_os_str().to_owned()];
        if !cache {
            a.push("--no-cache".into());
        }
        a.push("run".into());
        a
    };
    ok(stancemine(args(true)));
    let cache = d.join("cache/responses.jsonl");
    let before = std::fs::read(&cache).unwrap();
    assert!(!before.is_empty());
    let manifest = std::fs::read(d.join("manifest.json")).unwrap();
    ok(stancemine(args(true)));
    assert!(std::fs::read(&cache).unwrap() == before, "cache grew on a rerun");
    ok(stancemine(args(false)));
    // Bypassing the cache replays the script and must not change any artifact.
    assert!(std::fs::read(d.join("manifest.json")).unwrap() == manifest);
}
