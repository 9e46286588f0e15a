//! NLI, embedding and chat clients against local fake services.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use stancemine_core::batch::BatchOptions;
use stancemine_core::gateway::{BackendConfig, Gateway, GatewayError};
use stancemine_core::stance::{
    detect_stance_nli, detect_stance_sts, EndpointError, HttpEmbedder, HttpNliScorer, NliScorer, Orientation,
    RawOutput, StsConfig,
};
use stancemine_core::{PairClaimType, StanceLabel, StancePair};

/// Serves `handler(request_body) -> (status, body)` on a free port.
fn serve<F>(handler: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(usize, Value) -> (u16, String) + Send + 'static,
{
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = handler(n, serde_json::from_str(&body).unwrap_or(Value::Null));
            let _ = req.respond(tiny_http::Response::from_string(reply).with_status_code(status));
        }
    });
    (url, hits)
}

fn pairs() -> Vec<StancePair> {
    vec![
        StancePair::new("p1", "Metformin reduces fatigue", "metformin helped my fatigue a lot", PairClaimType::Explicit),
        StancePair::new("p2", "Metformin reduces fatigue", "unrelated: anyone know a good dentist", PairClaimType::Explicit),
        StancePair::new("p3", "Metformin reduces fatigue", "metformin did nothing for me", PairClaimType::Explicit),
    ]
}

fn nli_server() -> (String, Arc<AtomicUsize>) {
    serve(|_, body| {
        let hyp = body["hypothesis"].as_str().unwrap_or_default();
        let scores = if hyp.contains("nothing") {
            json!({"entailment": 0.1, "neutral": 0.2, "contradiction": 0.7})
        } else {
            json!({"entailment": 0.6, "neutral": 0.3, "contradiction": 0.1})
        };
        (200, scores.to_string())
    })
}

fn embed_server() -> (String, Arc<AtomicUsize>) {
    serve(|_, body| {
        let vectors: Vec<Vec<f64>> = body["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| if t.as_str().unwrap().contains("unrelated") { vec![0.0, 1.0] } else { vec![1.0, 0.2] })
            .collect();
        (200, json!({ "vectors": vectors }).to_string())
    })
}

#[test]
fn nli_over_http_maps_argmax() {
    let (url, _) = nli_server();
    let scorer = HttpNliScorer::new(url, Duration::from_secs(5));
    let preds = detect_stance_nli(&pairs(), &scorer, Orientation::TitlePremise, &BatchOptions::default()).unwrap();
    let got: Vec<StanceLabel> = preds.iter().map(|p| p.predicted).collect();
    assert_eq!(got, [StanceLabel::Favor, StanceLabel::Favor, StanceLabel::Against]);
    assert!(matches!(preds[0].raw, RawOutput::Scores { similarity: None, .. }));
}

#[test]
fn sts_over_http_sends_low_similarity_to_none() {
    let (nli, nli_hits) = nli_server();
    let (embed, _) = embed_server();
    let timeout = Duration::from_secs(5);
    let cfg = StsConfig { similarity_threshold: 0.5, ..StsConfig::new(&embed, &nli) };
    let preds = detect_stance_sts(
        &pairs(),
        &HttpEmbedder::new(embed, timeout),
        &HttpNliScorer::new(nli, timeout),
        &cfg,
        &BatchOptions::default(),
    )
    .unwrap();
    let got: Vec<StanceLabel> = preds.iter().map(|p| p.predicted).collect();
    assert_eq!(got, [StanceLabel::Favor, StanceLabel::None, StanceLabel::Against]);
    match &preds[1].raw {
        RawOutput::Scores { similarity: Some(s), .. } => assert!(*s < 0.5),
        other => panic!("{other:?}"),
    }
    assert_eq!(nli_hits.load(Ordering::SeqCst), 3);
}

#[test]
fn endpoint_retries_server_errors_then_succeeds() {
    let (url, hits) = serve(|n, _| match n {
        0 => (503, "busy".into()),
        1 => (429, "slow down".into()),
        _ => (200, json!({"entailment": 0.2, "neutral": 0.7, "contradiction": 0.1}).to_string()),
    });
    let scores = HttpNliScorer::new(url, Duration::from_secs(5)).score("a", "b").unwrap();
    assert_eq!(scores.neutral, 0.7);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn endpoint_client_errors_are_not_retried() {
    let (url, hits) = serve(|_, _| (400, "bad input".into()));
    let err = HttpNliScorer::new(url, Duration::from_secs(5)).score("a", "b").unwrap_err();
    assert!(matches!(err, EndpointError::Status { status: 400, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_scores_are_rejected() {
    let (url, _) = serve(|_, _| (200, json!({"entailment": 0.9, "neutral": 0.9, "contradiction": 0.9}).to_string()));
    let err = HttpNliScorer::new(url, Duration::from_secs(5)).score("a", "b").unwrap_err();
    assert!(matches!(err, EndpointError::Malformed { .. }), "{err}");
}

fn chat_config(url: String) -> BackendConfig {
    let mut cfg = BackendConfig::new("fake", url, "fake-model");
    cfg.retry.base_backoff_ms = 5;
    cfg.timeout_ms = 5_000;
    cfg
}

#[test]
fn chat_gateway_retries_and_reads_content() {
    let (url, hits) = serve(|n, body| {
        assert_eq!(body["model"], "fake-model");
        assert_eq!(body["temperature"], 0.0);
        if n == 0 {
            (500, "oops".into())
        } else {
            (200, json!({"choices": [{"message": {"role": "assistant", "content": "Yes"}}]}).to_string())
        }
    });
    let gw = Gateway::http(chat_config(url)).unwrap();
    assert_eq!(gw.complete("Is there a claim?").unwrap(), "Yes");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    assert_eq!(gw.stats().network_calls, 2);
}

#[test]
fn chat_gateway_gives_up_after_max_attempts() {
    let (url, hits) = serve(|_, _| (502, "down".into()));
    let gw = Gateway::http(chat_config(url)).unwrap();
    match gw.complete("hello") {
        Err(GatewayError::Exhausted { attempts, .. }) => assert_eq!(attempts.len(), 3),
        other => panic!("{other:?}"),
    }
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}
