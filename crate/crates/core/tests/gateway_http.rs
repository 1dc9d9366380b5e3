use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use clusterscribe_core::clustering::{kmeans_fit, KMeansParams};
use clusterscribe_core::eval::{run_experiment, Cell, ExperimentConfig};
use clusterscribe_core::gateway::{
    BackendConfig, BackendKind, ChatRequest, Gateway, GatewayError, HttpBackend, HttpRequest,
    HttpResponse, HttpTransport, ResponseCache,
};
use clusterscribe_core::synth::{synth_dataset, SynthConfig};

/// Answers every request, recording it, and tracks peak concurrency.
#[derive(Default)]
struct FakeTransport {
    calls: AtomicUsize,
    active: AtomicUsize,
    peak: AtomicUsize,
    delay_ms: u64,
    fail_status: Option<u16>,
    seen: Mutex<Vec<HttpRequest>>,
}

impl HttpTransport for FakeTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(self.delay_ms));
        self.active.fetch_sub(1, Ordering::SeqCst);
        self.seen.lock().unwrap().push(request.clone());
        if let Some(status) = self.fail_status {
            return Ok(HttpResponse {
                status,
                body: "unavailable".into(),
            });
        }
        let body = if request.url.ends_with("/embeddings") {
            let v: serde_json::Value = serde_json::from_str(&request.body).unwrap();
            let input = v["input"].as_str().unwrap();
            let a = input.len() as f64;
            let b = input.bytes().map(f64::from).sum::<f64>();
            serde_json::json!({"data": [{"embedding": [a, b, 1.0]}]}).to_string()
        } else {
            serde_json::json!({"choices": [{"message": {"role": "assistant", "content": "site images"}}]})
                .to_string()
        };
        Ok(HttpResponse { status: 200, body })
    }
}

fn http_config(max_retries: u32, max_in_flight: usize) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Http,
        base_url: Some("http://fake.invalid/v1/".into()),
        api_key_env: Some("UNUSED".into()),
        max_retries,
        max_in_flight,
        retry_base_ms: 0,
        ..BackendConfig::default()
    }
}

fn gateway(transport: Arc<FakeTransport>, cfg: &BackendConfig, cache: ResponseCache) -> Gateway {
    let backend = Arc::new(HttpBackend::new(cfg, "secret".into(), transport));
    Gateway::new(backend.clone(), backend, cfg.chat_model.clone(), cache)
}

#[test]
fn chat_wire_shape() {
    let t = Arc::new(FakeTransport::default());
    let cfg = http_config(0, 1);
    let gw = gateway(t.clone(), &cfg, ResponseCache::in_memory());
    let mut req = ChatRequest::new("sys", "usr");
    req.max_tokens = Some(64);
    assert_eq!(gw.chat(&req).unwrap(), "site images");
    let seen = t.seen.lock().unwrap();
    let r = &seen[0];
    assert_eq!(r.url, "http://fake.invalid/v1/chat/completions");
    assert!(r
        .headers
        .contains(&("Authorization".into(), "Bearer secret".into())));
    assert!(r
        .headers
        .contains(&("Content-Type".into(), "application/json".into())));
    let body: serde_json::Value = serde_json::from_str(&r.body).unwrap();
    assert_eq!(body["model"], "gpt-4o-mini");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "sys");
    assert_eq!(body["messages"][1]["role"], "user");
    assert_eq!(body["messages"][1]["content"], "usr");
    assert_eq!(body["temperature"], 0.1);
    assert_eq!(body["max_tokens"], 64);
}

#[test]
fn embedding_wire_shape_and_normalization() {
    let t = Arc::new(FakeTransport::default());
    let cfg = http_config(0, 1);
    let gw = gateway(t.clone(), &cfg, ResponseCache::in_memory());
    let v = gw.embed("crane").unwrap();
    assert!((v.norm() - 1.0).abs() < 1e-12);
    let seen = t.seen.lock().unwrap();
    assert_eq!(seen[0].url, "http://fake.invalid/v1/embeddings");
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({"model": "text-embedding-3-small", "input": "crane"})
    );
}

#[test]
fn retries_until_budget_is_spent() {
    let t = Arc::new(FakeTransport {
        fail_status: Some(503),
        ..FakeTransport::default()
    });
    let gw = gateway(t.clone(), &http_config(3, 1), ResponseCache::in_memory());
    match gw.embed("crane") {
        Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 4),
        other => panic!("expected transport failure, got {other:?}"),
    }
    assert_eq!(t.calls.load(Ordering::SeqCst), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let t = Arc::new(FakeTransport {
        fail_status: Some(400),
        ..FakeTransport::default()
    });
    let gw = gateway(t.clone(), &http_config(3, 1), ResponseCache::in_memory());
    assert!(gw.chat(&ChatRequest::new("s", "u")).is_err());
    assert_eq!(t.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn in_flight_requests_are_bounded() {
    let t = Arc::new(FakeTransport {
        delay_ms: 20,
        ..FakeTransport::default()
    });
    let gw = gateway(t.clone(), &http_config(0, 2), ResponseCache::in_memory());
    std::thread::scope(|s| {
        for i in 0..8 {
            let gw = &gw;
            s.spawn(move || gw.embed(&format!("text {i}")).unwrap());
        }
    });
    assert_eq!(t.calls.load(Ordering::SeqCst), 8);
    assert!(t.peak.load(Ordering::SeqCst) <= 2);
    assert_eq!(t.peak.load(Ordering::SeqCst), 2);
}

#[test]
fn warm_cache_rerun_makes_no_calls() {
    let ds = synth_dataset(&SynthConfig {
        topics: 2,
        per_topic: 12,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let model = kmeans_fit(
        &ds,
        &KMeansParams {
            k: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let matrix = Cell::full_matrix();
    let exp = ExperimentConfig {
        sampling: clusterscribe_core::SamplingConfig {
            n: 5,
            ..Default::default()
        },
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = http_config(0, 4);

    let cold = Arc::new(FakeTransport::default());
    let first = run_experiment(
        &ds,
        &model,
        &matrix,
        &exp,
        &gateway(cold.clone(), &cfg, ResponseCache::on_disk(dir.path())),
    )
    .unwrap();
    assert!(first.is_complete());
    assert!(cold.calls.load(Ordering::SeqCst) > 0);

    let warm = Arc::new(FakeTransport::default());
    let second = run_experiment(
        &ds,
        &model,
        &matrix,
        &exp,
        &gateway(warm.clone(), &cfg, ResponseCache::on_disk(dir.path())),
    )
    .unwrap();
    assert_eq!(warm.calls.load(Ordering::SeqCst), 0);
    assert_eq!(first, second);
}
