//! Sentiment and abuse scoring through native models or the HTTP model service.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::TextClassifier;
use crate::error::{Error, Result};
use crate::sentiment::{LabelValues, SentimentLabel, NUM_LABELS};
use crate::textprep::clean_text;

pub const ABUSE_THRESHOLD: f64 = 0.5;
pub const NATIVE_BACKEND: &str = "native-linear";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    NativeLinear,
    RemoteService,
    RemoteWithFallback,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::NativeLinear => "native",
            BackendKind::RemoteService => "remote",
            BackendKind::RemoteWithFallback => "remote_with_fallback",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "native" | "native_linear" => Ok(BackendKind::NativeLinear),
            "remote" | "remote_service" => Ok(BackendKind::RemoteService),
            "remote_with_fallback" | "fallback" => Ok(BackendKind::RemoteWithFallback),
            _ => Err(Error::Config(format!("unknown backend `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSelection {
    pub kind: BackendKind,
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_batch: usize,
    /// Upper bound on concurrent batch requests.
    pub max_in_flight: usize,
}

impl Default for BackendSelection {
    fn default() -> Self {
        Self {
            kind: BackendKind::NativeLinear,
            endpoint: "http://127.0.0.1:8000".into(),
            timeout_ms: 30_000,
            max_batch: 64,
            max_in_flight: 4,
        }
    }
}

impl BackendSelection {
    pub fn validate(&self) -> Result<()> {
        if self.max_batch == 0 {
            return Err(Error::Config("max batch size must be at least 1".into()));
        }
        if self.timeout_ms == 0 {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(
                "max in-flight requests must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn uses_remote(&self) -> bool {
        self.kind != BackendKind::NativeLinear
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportFailure {
    Timeout(String),
    Unreachable(String),
}

impl fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportFailure::Timeout(m) => write!(f, "timed out: {m}"),
            TransportFailure::Unreachable(m) => write!(f, "unreachable: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Moves request bodies to the service. Implementations must be shareable
/// across threads; tests substitute in-process stubs.
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &str) -> std::result::Result<HttpReply, TransportFailure>;
    fn get(&self, path: &str) -> std::result::Result<HttpReply, TransportFailure>;
}

pub struct HttpTransport {
    base: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: endpoint.trim_end_matches('/').to_owned(),
            agent,
        }
    }

    fn finish(
        result: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> std::result::Result<HttpReply, TransportFailure> {
        let mut resp = result.map_err(|e| match e {
            ureq::Error::Timeout(_) => TransportFailure::Timeout(e.to_string()),
            ureq::Error::Io(ref io)
                if matches!(
                    io.kind(),
                    std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
                ) =>
            {
                TransportFailure::Timeout(e.to_string())
            }
            other => TransportFailure::Unreachable(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportFailure::Unreachable(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &str) -> std::result::Result<HttpReply, TransportFailure> {
        Self::finish(
            self.agent
                .post(format!("{}{path}", self.base))
                .header("content-type", "application/json")
                .send(body),
        )
    }

    fn get(&self, path: &str) -> std::result::Result<HttpReply, TransportFailure> {
        Self::finish(self.agent.get(format!("{}{path}", self.base)).call())
    }
}

/// Splits `0..n` into consecutive ranges of at most `max` items.
pub fn batch_ranges(n: usize, max: usize) -> Vec<Range<usize>> {
    (0..n.div_ceil(max))
        .map(|i| i * max..((i + 1) * max).min(n))
        .collect()
}

fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}

fn parse_prob(v: &Value) -> Result<f64> {
    let p = v
        .as_f64()
        .ok_or_else(|| protocol(format!("probability {v} is not a number")))?;
    if !(0.0..=1.0).contains(&p) {
        return Err(protocol(format!("probability {p} outside [0, 1]")));
    }
    Ok(p)
}

fn parse_model(body: &Value) -> Result<String> {
    body.get("model")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| protocol("response lacks a `model` string"))
}

fn parse_probs_array(body: &Value, expected: usize) -> Result<&Vec<Value>> {
    let probs = body
        .get("probs")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol("response lacks a `probs` array"))?;
    if probs.len() != expected {
        return Err(protocol(format!(
            "expected {expected} predictions, got {}",
            probs.len()
        )));
    }
    Ok(probs)
}

/// Validates a `/v1/sentiment` body and returns rows in canonical label order.
pub fn parse_sentiment_response(body: &str, expected: usize) -> Result<(String, Vec<LabelValues>)> {
    let body: Value =
        serde_json::from_str(body).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
    let model = parse_model(&body)?;
    let labels = body
        .get("labels")
        .and_then(Value::as_array)
        .ok_or_else(|| protocol("response lacks a `labels` array"))?;
    if labels.len() != NUM_LABELS {
        return Err(protocol(format!(
            "expected {NUM_LABELS} labels, got {}",
            labels.len()
        )));
    }
    let mut order = Vec::with_capacity(NUM_LABELS);
    let mut seen = BTreeSet::new();
    for l in labels {
        let name = l
            .as_str()
            .ok_or_else(|| protocol("label is not a string"))?;
        let label = SentimentLabel::from_alias(name)
            .ok_or_else(|| protocol(format!("unknown label `{name}`")))?;
        if !seen.insert(label.index()) {
            return Err(protocol(format!("duplicate label `{name}`")));
        }
        order.push(label.index());
    }
    let rows = parse_probs_array(&body, expected)?
        .iter()
        .map(|row| {
            let row = row
                .as_array()
                .ok_or_else(|| protocol("prediction row is not an array"))?;
            if row.len() != NUM_LABELS {
                return Err(protocol(format!(
                    "expected {NUM_LABELS} probabilities, got {}",
                    row.len()
                )));
            }
            let mut values = [0.0; NUM_LABELS];
            for (&slot, v) in order.iter().zip(row) {
                values[slot] = parse_prob(v)?;
            }
            LabelValues::new(values)
        })
        .collect::<Result<_>>()?;
    Ok((model, rows))
}

/// Validates a `/v1/abuse` body.
pub fn parse_abuse_response(body: &str, expected: usize) -> Result<(String, Vec<f64>)> {
    let body: Value =
        serde_json::from_str(body).map_err(|e| protocol(format!("invalid JSON: {e}")))?;
    let model = parse_model(&body)?;
    let probs = parse_probs_array(&body, expected)?
        .iter()
        .map(parse_prob)
        .collect::<Result<_>>()?;
    Ok((model, probs))
}

/// Batching, retry and protocol handling against one service.
pub struct RemoteClient {
    transport: Arc<dyn Transport>,
    max_batch: usize,
    max_in_flight: usize,
}

impl RemoteClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        max_batch: usize,
        max_in_flight: usize,
    ) -> Result<Self> {
        if max_batch == 0 || max_in_flight == 0 {
            return Err(Error::Config(
                "batch size and concurrency must be at least 1".into(),
            ));
        }
        Ok(Self {
            transport,
            max_batch,
            max_in_flight,
        })
    }

    pub fn health(&self) -> Result<Vec<String>> {
        let reply = self
            .transport
            .get("/v1/health")
            .map_err(|e| Error::Transport {
                start: 0,
                end: 0,
                message: e.to_string(),
            })?;
        if reply.status != 200 {
            return Err(protocol(format!(
                "health check returned status {}",
                reply.status
            )));
        }
        let body: Value = serde_json::from_str(&reply.body)
            .map_err(|e| protocol(format!("invalid JSON: {e}")))?;
        if body.get("status").and_then(Value::as_str) != Some("ok") {
            return Err(protocol("service status is not ok"));
        }
        Ok(body
            .get("models")
            .and_then(Value::as_array)
            .map(|ms| {
                ms.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default())
    }

    /// One POST with a single retry after a timeout. 5xx replies count as
    /// transport failures; other non-200 replies are protocol errors.
    fn post(&self, path: &str, texts: &[String], span: Range<usize>) -> Result<String> {
        let body = json!({ "texts": texts }).to_string();
        let transport_err = |m: String| Error::Transport {
            start: span.start,
            end: span.end,
            message: m,
        };
        let mut attempt = 0;
        let reply = loop {
            match self.transport.post(path, &body) {
                Ok(r) => break r,
                Err(TransportFailure::Timeout(_)) if attempt == 0 => attempt += 1,
                Err(e) => return Err(transport_err(e.to_string())),
            }
        };
        match reply.status {
            200 => Ok(reply.body),
            s if s >= 500 => Err(transport_err(format!("status {s}: {}", reply.body))),
            s => {
                let detail = serde_json::from_str::<Value>(&reply.body)
                    .ok()
                    .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_owned))
                    .unwrap_or(reply.body);
                Err(protocol(format!("status {s}: {detail}")))
            }
        }
    }

    /// Runs `f` over every batch with bounded concurrency, keeping input order.
    /// The outcome of each batch is returned separately so callers can recover.
    pub fn for_each_batch<T, F>(&self, n: usize, f: F) -> Vec<(Range<usize>, Result<Vec<T>>)>
    where
        T: Send,
        F: Fn(Range<usize>) -> Result<Vec<T>> + Sync,
    {
        let ranges = batch_ranges(n, self.max_batch);
        let slots: Vec<Mutex<Option<Result<Vec<T>>>>> =
            ranges.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.max_in_flight.min(ranges.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(r) = ranges.get(i) else { break };
                    let out = f(r.clone());
                    *slots[i].lock().unwrap_or_else(|p| p.into_inner()) = Some(out);
                });
            }
        });
        ranges
            .into_iter()
            .zip(slots)
            .map(|(r, slot)| {
                let out = slot.into_inner().unwrap_or_else(|p| p.into_inner());
                (r, out.expect("every batch is visited"))
            })
            .collect()
    }

    pub fn sentiment_batch(
        &self,
        texts: &[String],
        span: Range<usize>,
    ) -> Result<(String, Vec<LabelValues>)> {
        let body = self.post("/v1/sentiment", texts, span)?;
        parse_sentiment_response(&body, texts.len())
    }

    pub fn abuse_batch(&self, texts: &[String], span: Range<usize>) -> Result<(String, Vec<f64>)> {
        let body = self.post("/v1/abuse", texts, span)?;
        parse_abuse_response(&body, texts.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbusePrediction {
    pub probability: f64,
    pub abusive: bool,
}

impl AbusePrediction {
    pub fn new(probability: f64) -> Self {
        Self {
            probability,
            abusive: probability >= ABUSE_THRESHOLD,
        }
    }
}

/// A batch that was scored natively after the service failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub task: String,
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

/// Front end used by the pipeline. Safe to share between threads.
pub struct InferenceClient {
    selection: BackendSelection,
    remote: Option<RemoteClient>,
    native_sentiment: Option<TextClassifier>,
    native_abuse: Option<TextClassifier>,
    fallbacks: Mutex<Vec<FallbackEvent>>,
    used: Mutex<BTreeSet<String>>,
}

/// Maps a native sentiment classifier's outputs onto canonical label slots.
fn sentiment_slots(clf: &TextClassifier) -> Result<Vec<usize>> {
    if clf.labels.len() != NUM_LABELS {
        return Err(Error::Config(format!(
            "sentiment model has {} labels, expected {NUM_LABELS}",
            clf.labels.len()
        )));
    }
    let slots: Vec<usize> = clf
        .labels
        .iter()
        .map(|l| {
            SentimentLabel::from_alias(l)
                .map(SentimentLabel::index)
                .ok_or_else(|| Error::Config(format!("sentiment model has unknown label `{l}`")))
        })
        .collect::<Result<_>>()?;
    if slots.iter().collect::<BTreeSet<_>>().len() != NUM_LABELS {
        return Err(Error::Config("sentiment model repeats a label".into()));
    }
    Ok(slots)
}

impl InferenceClient {
    pub fn new(
        selection: BackendSelection,
        transport: Option<Arc<dyn Transport>>,
        native_sentiment: Option<TextClassifier>,
        native_abuse: Option<TextClassifier>,
    ) -> Result<Self> {
        selection.validate()?;
        if let Some(clf) = &native_sentiment {
            sentiment_slots(clf)?;
        }
        if let Some(clf) = &native_abuse {
            if clf.labels.len() != 1 {
                return Err(Error::Config(
                    "abuse model must have exactly one label".into(),
                ));
            }
        }
        let remote = match (selection.uses_remote(), transport) {
            (false, _) => None,
            (true, Some(t)) => Some(RemoteClient::new(
                t,
                selection.max_batch,
                selection.max_in_flight,
            )?),
            (true, None) => Some(RemoteClient::new(
                Arc::new(HttpTransport::new(
                    &selection.endpoint,
                    selection.timeout_ms,
                )),
                selection.max_batch,
                selection.max_in_flight,
            )?),
        };
        Ok(Self {
            selection,
            remote,
            native_sentiment,
            native_abuse,
            fallbacks: Mutex::new(Vec::new()),
            used: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn selection(&self) -> &BackendSelection {
        &self.selection
    }

    pub fn fallback_events(&self) -> Vec<FallbackEvent> {
        self.fallbacks
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .clone()
    }

    /// Backends that produced at least one prediction, e.g. `native-linear`
    /// or `remote:<model id>`.
    pub fn backends_used(&self) -> Vec<String> {
        self.used
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .cloned()
            .collect()
    }

    fn mark(&self, backend: String) {
        self.used
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(backend);
    }

    fn clean_all(texts: &[String]) -> Result<Vec<String>> {
        if texts.is_empty() {
            return Err(Error::InvalidArgument("empty text list".into()));
        }
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let c = clean_text(t);
                if c.is_empty() {
                    Err(Error::InvalidArgument(format!(
                        "text {i} is empty after cleaning"
                    )))
                } else {
                    Ok(c)
                }
            })
            .collect()
    }

    fn native_sentiment(&self, texts: &[String]) -> Result<Vec<LabelValues>> {
        let clf = self
            .native_sentiment
            .as_ref()
            .ok_or_else(|| Error::Config("no native sentiment model configured".into()))?;
        let slots = sentiment_slots(clf)?;
        let rows = clf.predict_proba(texts)?;
        self.mark(NATIVE_BACKEND.into());
        rows.into_iter()
            .map(|row| {
                let mut v = [0.0; NUM_LABELS];
                for (&slot, p) in slots.iter().zip(row) {
                    v[slot] = p;
                }
                LabelValues::new(v)
            })
            .collect()
    }

    fn native_abuse(&self, texts: &[String]) -> Result<Vec<f64>> {
        let clf = self
            .native_abuse
            .as_ref()
            .ok_or_else(|| Error::Config("no native abuse model configured".into()))?;
        let rows = clf.predict_proba(texts)?;
        self.mark(NATIVE_BACKEND.into());
        Ok(rows.into_iter().map(|r| r[0]).collect())
    }

    /// Shared remote path: per-batch remote call, native recovery on
    /// transport failure when allowed.
    fn dispatch<T: Send>(
        &self,
        task: &str,
        texts: &[String],
        remote: impl Fn(&RemoteClient, &[String], Range<usize>) -> Result<(String, Vec<T>)> + Sync,
        native: impl Fn(&[String]) -> Result<Vec<T>>,
    ) -> Result<Vec<T>> {
        let clean = Self::clean_all(texts)?;
        let Some(client) = &self.remote else {
            return native(&clean);
        };
        let outcomes = client.for_each_batch(clean.len(), |r| {
            let (model, out) = remote(client, &clean[r.clone()], r)?;
            self.mark(format!("remote:{model}"));
            Ok(out)
        });
        let mut all = Vec::with_capacity(clean.len());
        for (r, outcome) in outcomes {
            match outcome {
                Ok(v) => all.extend(v),
                Err(Error::Transport {
                    start,
                    end,
                    message,
                }) if self.selection.kind == BackendKind::RemoteWithFallback => {
                    self.fallbacks
                        .lock()
                        .unwrap_or_else(|p| p.into_inner())
                        .push(FallbackEvent {
                            task: task.into(),
                            start,
                            end,
                            reason: message,
                        });
                    all.extend(native(&clean[r])?);
                }
                Err(e) => return Err(e),
            }
        }
        Ok(all)
    }

    pub fn classify_sentiment_batch(&self, texts: &[String]) -> Result<Vec<LabelValues>> {
        self.dispatch(
            "sentiment",
            texts,
            |c, t, r| c.sentiment_batch(t, r),
            |t| self.native_sentiment(t),
        )
    }

    pub fn classify_abuse_batch(&self, texts: &[String]) -> Result<Vec<AbusePrediction>> {
        let probs = self.dispatch(
            "abuse",
            texts,
            |c, t, r| c.abuse_batch(t, r),
            |t| self.native_abuse(t),
        )?;
        Ok(probs.into_iter().map(AbusePrediction::new).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_in_order() {
        assert_eq!(batch_ranges(5, 2), vec![0..2, 2..4, 4..5]);
        assert_eq!(batch_ranges(4, 4), vec![0..4]);
        assert!(batch_ranges(0, 3).is_empty());
    }

    #[test]
    fn sentiment_response_reorders_labels() {
        let mut labels = SentimentLabel::names();
        labels.reverse();
        let row: Vec<f64> = (0..NUM_LABELS).map(|i| i as f64 / 10.0).collect();
        let body = json!({ "model": "m", "labels": labels, "probs": [row] }).to_string();
        let (model, rows) = parse_sentiment_response(&body, 1).unwrap();
        assert_eq!(model, "m");
        assert_eq!(rows[0].0[0], 0.9);
        assert_eq!(rows[0].0[9], 0.0);
    }

    #[test]
    fn malformed_responses() {
        let labels = SentimentLabel::names();
        let cases = [
            "not json".to_owned(),
            json!({ "labels": labels, "probs": [] }).to_string(),
            json!({ "model": "m", "labels": ["a"], "probs": [] }).to_string(),
            json!({ "model": "m", "labels": labels, "probs": [] }).to_string(),
            json!({ "model": "m", "labels": labels, "probs": [vec![0.5; 9]] }).to_string(),
            json!({ "model": "m", "labels": labels, "probs": [vec![1.5; 10]] }).to_string(),
        ];
        for body in cases {
            assert!(
                matches!(parse_sentiment_response(&body, 1), Err(Error::Protocol(_))),
                "{body}"
            );
        }
        assert!(
            parse_abuse_response(&json!({"model": "m", "probs": [0.1, "x"]}).to_string(), 2)
                .is_err()
        );
        assert!(
            parse_abuse_response(&json!({"model": "m", "probs": [0.1]}).to_string(), 2).is_err()
        );
        assert_eq!(
            parse_abuse_response(&json!({"model": "m", "probs": [0.5]}).to_string(), 1)
                .unwrap()
                .1,
            vec![0.5]
        );
    }

    #[test]
    fn threshold_boundary() {
        assert!(AbusePrediction::new(0.5).abusive);
        assert!(!AbusePrediction::new(0.4999).abusive);
    }

    #[test]
    fn selection_rules() {
        assert!(BackendSelection::default().validate().is_ok());
        let bad = BackendSelection {
            max_batch: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BackendSelection {
            timeout_ms: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            "remote-with-fallback".parse::<BackendKind>().unwrap(),
            BackendKind::RemoteWithFallback
        );
        assert!("gpu".parse::<BackendKind>().is_err());
    }
}
