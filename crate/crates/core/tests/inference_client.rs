use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use subtrend::classifier::TextClassifier;
use subtrend::inference::{
    BackendKind, BackendSelection, HttpReply, HttpTransport, InferenceClient, Transport,
    TransportFailure,
};
use subtrend::linear::{train, LossKind, TrainConfig};
use subtrend::sentiment::{SentimentLabel, NUM_LABELS};
use subtrend::textprep::{prepare, StopwordSet};
use subtrend::vectorizer::{fit_vocabulary, VectorizerConfig};
use subtrend::Error;

fn fixture(name: &str) -> String {
    let path: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "tests",
        "fixtures",
        "protocol",
        name,
    ]
    .iter()
    .collect();
    std::fs::read_to_string(path).unwrap()
}

fn texts_of(body: &str) -> Vec<String> {
    let v: Value = serde_json::from_str(body).unwrap();
    v["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap().to_owned())
        .collect()
}

fn ok(body: String) -> Result<HttpReply, TransportFailure> {
    Ok(HttpReply { status: 200, body })
}

/// Sentiment: the first probability encodes the text's number, so order is
/// visible. Abuse: `p = n / 100`.
#[derive(Default)]
struct NumberedStub {
    batches: Mutex<Vec<usize>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    delay_ms: u64,
}

fn number(text: &str) -> f64 {
    text.trim_start_matches("text ").parse::<f64>().unwrap()
}

impl Transport for NumberedStub {
    fn post(&self, path: &str, body: &str) -> Result<HttpReply, TransportFailure> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(self.delay_ms));
        let texts = texts_of(body);
        self.batches.lock().unwrap().push(texts.len());
        let reply = if path == "/v1/sentiment" {
            let probs: Vec<Vec<f64>> = texts
                .iter()
                .map(|t| {
                    let mut row = vec![0.0; NUM_LABELS];
                    row[0] = number(t) / 1000.0;
                    row
                })
                .collect();
            json!({ "model": "numbered", "labels": SentimentLabel::names(), "probs": probs })
        } else {
            let probs: Vec<f64> = texts.iter().map(|t| number(t) / 100.0).collect();
            json!({ "model": "numbered", "probs": probs })
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        ok(reply.to_string())
    }

    fn get(&self, _: &str) -> Result<HttpReply, TransportFailure> {
        ok(fixture("health_response.json"))
    }
}

struct Scripted {
    replies: Mutex<Vec<Result<HttpReply, TransportFailure>>>,
    calls: AtomicUsize,
}

impl Scripted {
    fn new(mut replies: Vec<Result<HttpReply, TransportFailure>>) -> Self {
        replies.reverse();
        Self {
            replies: Mutex::new(replies),
            calls: AtomicUsize::new(0),
        }
    }
}

impl Transport for Scripted {
    fn post(&self, _: &str, _: &str) -> Result<HttpReply, TransportFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut r = self.replies.lock().unwrap();
        if r.len() > 1 {
            r.pop().unwrap()
        } else {
            r[0].clone()
        }
    }

    fn get(&self, _: &str) -> Result<HttpReply, TransportFailure> {
        Err(TransportFailure::Unreachable("scripted".into()))
    }
}

fn selection(kind: BackendKind, max_batch: usize) -> BackendSelection {
    BackendSelection {
        kind,
        max_batch,
        max_in_flight: 3,
        ..BackendSelection::default()
    }
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text {i}")).collect()
}

fn native_models() -> (TextClassifier, TextClassifier) {
    let docs = [
        "thank you friend",
        "worried and afraid",
        "you bastard",
        "nice day outside",
    ];
    let tokens: Vec<_> = docs.iter().map(|d| prepare(d)).collect();
    let vocab = fit_vocabulary(&tokens, VectorizerConfig::default()).unwrap();
    let xs = vocab.transform_all(&tokens);
    let cfg = TrainConfig::default();
    let sent_y: Vec<Vec<bool>> = (0..4)
        .map(|i| (0..NUM_LABELS).map(|l| l == i).collect())
        .collect();
    let abuse_y = vec![vec![false], vec![false], vec![true], vec![false]];
    let sent = train(&xs, &sent_y, LossKind::Logistic, &cfg).unwrap();
    let abuse = train(&xs, &abuse_y, LossKind::Logistic, &cfg).unwrap();
    (
        TextClassifier::new(
            vocab.clone(),
            sent,
            SentimentLabel::names(),
            StopwordSet::empty("none"),
        )
        .unwrap(),
        TextClassifier::new(
            vocab,
            abuse,
            vec!["abusive".into()],
            StopwordSet::empty("none"),
        )
        .unwrap(),
    )
}

#[test]
fn fixture_responses_round_trip() {
    let req = texts_of(&fixture("sentiment_request.json"));
    let stub = Scripted::new(vec![ok(fixture("sentiment_response.json"))]);
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 8),
        Some(Arc::new(stub)),
        None,
        None,
    )
    .unwrap();
    let out = client.classify_sentiment_batch(&req).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].0[SentimentLabel::Thankful.index()], 0.95);
    assert_eq!(out[1].0[SentimentLabel::Anxious.index()], 0.90);
    assert_eq!(out[2].0[SentimentLabel::Joking.index()], 0.85);
    assert_eq!(client.backends_used(), vec!["remote:stub-sentiment-1"]);

    let req = texts_of(&fixture("abuse_request.json"));
    let stub = Scripted::new(vec![ok(fixture("abuse_response.json"))]);
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 8),
        Some(Arc::new(stub)),
        None,
        None,
    )
    .unwrap();
    let out = client.classify_abuse_batch(&req).unwrap();
    let probs: Vec<f64> = out.iter().map(|a| a.probability).collect();
    assert_eq!(probs, vec![0.02, 0.97, 0.5]);
    assert_eq!(
        out.iter().map(|a| a.abusive).collect::<Vec<_>>(),
        vec![false, true, true]
    );
}

#[test]
fn large_requests_split_and_keep_order() {
    let stub = Arc::new(NumberedStub {
        delay_ms: 20,
        ..Default::default()
    });
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 4),
        Some(stub.clone()),
        None,
        None,
    )
    .unwrap();
    let out = client.classify_abuse_batch(&texts(10)).unwrap();
    let probs: Vec<f64> = out.iter().map(|a| a.probability).collect();
    assert_eq!(probs, (0..10).map(|i| i as f64 / 100.0).collect::<Vec<_>>());
    let mut sizes = stub.batches.lock().unwrap().clone();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 4, 4]);

    let sent = client.classify_sentiment_batch(&texts(9)).unwrap();
    assert_eq!(
        sent.iter().map(|v| v.0[0]).collect::<Vec<_>>(),
        (0..9).map(|i| i as f64 / 1000.0).collect::<Vec<_>>()
    );
    assert_eq!(stub.batches.lock().unwrap().len(), 6);
    let peak = stub.peak.load(Ordering::SeqCst);
    assert!((2..=3).contains(&peak), "peak concurrency {peak}");
}

#[test]
fn one_retry_after_timeout() {
    let body = json!({"model": "m", "probs": [0.25]}).to_string();
    let stub = Arc::new(Scripted::new(vec![
        Err(TransportFailure::Timeout("slow".into())),
        ok(body),
    ]));
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 8),
        Some(stub.clone()),
        None,
        None,
    )
    .unwrap();
    assert_eq!(
        client.classify_abuse_batch(&["hello".into()]).unwrap()[0].probability,
        0.25
    );
    assert_eq!(stub.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn persistent_timeout_is_a_transport_error_with_span() {
    let stub = Arc::new(Scripted::new(vec![Err(TransportFailure::Timeout(
        "slow".into(),
    ))]));
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 2),
        Some(stub.clone()),
        None,
        None,
    )
    .unwrap();
    match client.classify_abuse_batch(&texts(3)) {
        Err(Error::Transport {
            start: 0, end: 2, ..
        }) => {}
        other => panic!("unexpected {other:?}"),
    }
    // two batches, each tried twice
    assert_eq!(stub.calls.load(Ordering::SeqCst), 4);
    let stub = Arc::new(Scripted::new(vec![Err(TransportFailure::Unreachable(
        "refused".into(),
    ))]));
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 8),
        Some(stub.clone()),
        None,
        None,
    )
    .unwrap();
    assert!(matches!(
        client.classify_abuse_batch(&texts(1)),
        Err(Error::Transport { .. })
    ));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn fallback_is_recorded() {
    let (sent, abuse) = native_models();
    let stub = Arc::new(Scripted::new(vec![Err(TransportFailure::Unreachable(
        "refused".into(),
    ))]));
    let client = InferenceClient::new(
        selection(BackendKind::RemoteWithFallback, 2),
        Some(stub),
        Some(sent.clone()),
        Some(abuse.clone()),
    )
    .unwrap();
    let input: Vec<String> = vec!["you bastard".into(), "nice day".into(), "thank you".into()];
    let got = client.classify_abuse_batch(&input).unwrap();
    let native =
        InferenceClient::new(BackendSelection::default(), None, Some(sent), Some(abuse)).unwrap();
    assert_eq!(got, native.classify_abuse_batch(&input).unwrap());
    let events = client.fallback_events();
    assert_eq!(events.len(), 2);
    assert_eq!((events[0].start, events[0].end), (0, 2));
    assert_eq!((events[1].start, events[1].end), (2, 3));
    assert_eq!(client.backends_used(), vec!["native-linear"]);
}

#[test]
fn bad_replies_are_protocol_errors_even_with_fallback() {
    let (sent, abuse) = native_models();
    let cases = vec![
        ok("{\"model\": \"m\", \"probs\": [0.1, 0.2]}".into()),
        ok("<html>".into()),
        Ok(HttpReply {
            status: 413,
            body: fixture("error_oversize.json"),
        }),
        Ok(HttpReply {
            status: 400,
            body: fixture("error_empty.json"),
        }),
    ];
    for reply in cases {
        let client = InferenceClient::new(
            selection(BackendKind::RemoteWithFallback, 8),
            Some(Arc::new(Scripted::new(vec![reply]))),
            Some(sent.clone()),
            Some(abuse.clone()),
        )
        .unwrap();
        assert!(matches!(
            client.classify_abuse_batch(&texts(1)),
            Err(Error::Protocol(_))
        ));
        assert!(client.fallback_events().is_empty());
    }
}

#[test]
fn empty_inputs_are_rejected_before_sending() {
    let stub = Arc::new(Scripted::new(vec![ok("{}".into())]));
    let client = InferenceClient::new(
        selection(BackendKind::RemoteService, 8),
        Some(stub.clone()),
        None,
        None,
    )
    .unwrap();
    assert!(matches!(
        client.classify_abuse_batch(&[]),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        client.classify_sentiment_batch(&["ok".into(), " 😀 ".into()]),
        Err(Error::InvalidArgument(_))
    ));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 0);
}

#[test]
fn native_backend_is_deterministic() {
    let (sent, abuse) = native_models();
    let a = InferenceClient::new(
        BackendSelection::default(),
        None,
        Some(sent.clone()),
        Some(abuse.clone()),
    )
    .unwrap();
    let b =
        InferenceClient::new(BackendSelection::default(), None, Some(sent), Some(abuse)).unwrap();
    let input: Vec<String> = vec!["thank you friend".into(), "so afraid".into()];
    let (x, y) = (
        a.classify_sentiment_batch(&input).unwrap(),
        b.classify_sentiment_batch(&input).unwrap(),
    );
    for (u, v) in x.iter().zip(&y) {
        assert!(u.0.iter().zip(v.0).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

/// Minimal HTTP/1.1 responder for `HttpTransport`.
fn serve(
    handler: impl Fn(&str, &str, &str) -> (u16, String, u64) + Send + Sync + 'static,
) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handler = Arc::new(handler);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let handler = handler.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).is_err() {
                    return;
                }
                let mut length = 0usize;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    if h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let mut parts = request_line.split_whitespace();
                let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
                let (status, reply, delay) = handler(method, path, &String::from_utf8_lossy(&body));
                std::thread::sleep(Duration::from_millis(delay));
                let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            });
        }
    });
    (addr, hits)
}

#[test]
fn http_transport_against_local_stub() {
    let (addr, _) = serve(|method, path, body| match (method, path) {
        ("GET", "/v1/health") => (200, fixture("health_response.json"), 0),
        ("POST", "/v1/sentiment") => {
            assert_eq!(texts_of(body), texts_of(&fixture("sentiment_request.json")));
            (200, fixture("sentiment_response.json"), 0)
        }
        ("POST", "/v1/abuse") if texts_of(body).len() > 3 => {
            (413, fixture("error_oversize.json"), 0)
        }
        ("POST", "/v1/abuse") => (200, fixture("abuse_response.json"), 0),
        _ => (404, "{}".into(), 0),
    });
    let sel = BackendSelection {
        kind: BackendKind::RemoteService,
        endpoint: addr.clone(),
        timeout_ms: 2_000,
        ..Default::default()
    };
    let client = InferenceClient::new(sel.clone(), None, None, None).unwrap();
    let sent = client
        .classify_sentiment_batch(&texts_of(&fixture("sentiment_request.json")))
        .unwrap();
    assert_eq!(sent[0].0[SentimentLabel::Thankful.index()], 0.95);
    let abuse = client
        .classify_abuse_batch(&texts_of(&fixture("abuse_request.json")))
        .unwrap();
    assert!(abuse[1].abusive);
    assert!(
        matches!(client.classify_abuse_batch(&texts(4)), Err(Error::Protocol(m)) if m.contains("413"))
    );

    let remote =
        subtrend::inference::RemoteClient::new(Arc::new(HttpTransport::new(&addr, 2_000)), 8, 1)
            .unwrap();
    assert_eq!(
        remote.health().unwrap(),
        vec!["stub-sentiment-1", "stub-abuse-1"]
    );
}

#[test]
fn http_timeout_retries_once_then_fails() {
    let (addr, hits) = serve(|_, _, _| (200, fixture("abuse_response.json"), 600));
    let sel = BackendSelection {
        kind: BackendKind::RemoteService,
        endpoint: addr,
        timeout_ms: 150,
        ..Default::default()
    };
    let client = InferenceClient::new(sel, None, None, None).unwrap();
    let r = client.classify_abuse_batch(&texts(1));
    assert!(
        matches!(
            r,
            Err(Error::Transport {
                start: 0,
                end: 1,
                ..
            })
        ),
        "{r:?}"
    );
    std::thread::sleep(Duration::from_millis(50));
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn unreachable_service_falls_back() {
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let (sent, abuse) = native_models();
    let sel = BackendSelection {
        kind: BackendKind::RemoteWithFallback,
        endpoint: format!("http://127.0.0.1:{port}"),
        timeout_ms: 500,
        ..Default::default()
    };
    let client = InferenceClient::new(sel, None, Some(sent), Some(abuse)).unwrap();
    assert_eq!(client.classify_sentiment_batch(&texts(2)).unwrap().len(), 2);
    assert_eq!(client.fallback_events().len(), 1);
}
