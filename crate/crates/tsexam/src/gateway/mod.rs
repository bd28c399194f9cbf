//! Uniform access to chat and embedding models.
//!
//! One wire protocol (chat-completion compatible HTTP) covers every remote
//! provider; a deterministic scripted mock makes the entire repository
//! testable with zero network access. The module also owns the two series
//! renderers used when administering exams: [`render_plot`] and
//! [`serialize_text`].

mod http;
mod mock;
mod plot;
mod text;

use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use mock::{MockRule, MockScript};
pub use plot::render_plot;
pub use text::serialize_text;

use crate::error::Error;
use crate::rng::fnv1a;
use crate::Result;

/// Model provider kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// Remote endpoint speaking the chat-completion protocol.
    HttpCompatible,
    /// In-process scripted mock.
    Mock,
}

/// Reference to a model behind the gateway.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub provider: Provider,
    pub model_id: String,
    /// Base URL, e.g. `https://api.example.com/v1`. Required for HTTP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key. The key value
    /// itself is never stored or serialized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
}

impl ModelRef {
    pub fn mock(model_id: impl Into<String>) -> Self {
        ModelRef {
            provider: Provider::Mock,
            model_id: model_id.into(),
            endpoint: None,
            credential_env: None,
        }
    }

    pub fn http(
        model_id: impl Into<String>,
        endpoint: impl Into<String>,
        credential_env: Option<String>,
    ) -> Self {
        ModelRef {
            provider: Provider::HttpCompatible,
            model_id: model_id.into(),
            endpoint: Some(endpoint.into()),
            credential_env,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.provider == Provider::HttpCompatible && self.endpoint.is_none() {
            return Err(Error::invalid(
                "endpoint",
                format!("model `{}` uses the HTTP provider but has no endpoint", self.model_id),
            ));
        }
        Ok(())
    }
}

/// Chat message roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

/// One chat message; PNG images ride along on user messages and are base64
/// encoded on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<Vec<u8>>,
}

impl ModelMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ModelMessage {
            role: Role::System,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ModelMessage {
            role: Role::User,
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user_with_images(text: impl Into<String>, images: Vec<Vec<u8>>) -> Self {
        ModelMessage {
            role: Role::User,
            text: text.into(),
            images,
        }
    }
}

/// Retry behavior for transient HTTP failures.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: usize,
    pub base_delay_ms: u64,
    /// Hard cap on the serialized request size.
    pub max_payload_bytes: usize,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 500,
            max_payload_bytes: 20 * 1024 * 1024,
        }
    }
}

/// Concurrency and pacing limits for remote calls.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateLimit {
    pub max_in_flight: usize,
    /// Minimum milliseconds between requests to the same model id
    /// (0 = unlimited).
    pub min_interval_ms: u64,
}

impl Default for RateLimit {
    fn default() -> Self {
        RateLimit {
            max_in_flight: 4,
            min_interval_ms: 0,
        }
    }
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    kind: &'a str,
    model: &'a str,
    request_digest: String,
    latency_ms: u128,
    ok: bool,
}

/// Shared, thread-safe access point for all model calls.
pub struct Gateway {
    retry: RetryPolicy,
    mock: Mutex<mock::MockState>,
    http: http::HttpClient,
    audit: Option<Mutex<std::io::BufWriter<std::fs::File>>>,
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Gateway {
            retry: RetryPolicy::default(),
            mock: Mutex::new(mock::MockState::default()),
            http: http::HttpClient::new(RateLimit::default()),
            audit: None,
        }
    }

    pub fn with_mock_script(script: MockScript) -> Self {
        let mut gw = Gateway::new();
        gw.set_mock_script(script);
        gw
    }

    pub fn set_mock_script(&mut self, script: MockScript) {
        *self.mock.lock().unwrap() = mock::MockState::new(script);
    }

    pub fn set_retry_policy(&mut self, retry: RetryPolicy) {
        self.retry = retry;
    }

    pub fn set_rate_limit(&mut self, limit: RateLimit) {
        self.http = http::HttpClient::new(limit);
    }

    /// Append request/response audit records to a newline-delimited file.
    pub fn set_audit_path(&mut self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())
            .map_err(|e| Error::io(path.as_ref().display().to_string(), e))?;
        self.audit = Some(Mutex::new(std::io::BufWriter::new(file)));
        Ok(())
    }

    /// Send a chat exchange and return the model's text reply.
    pub fn chat(&self, model: &ModelRef, messages: &[ModelMessage]) -> Result<String> {
        model.validate()?;
        for m in messages {
            if !m.images.is_empty() && m.role != Role::User {
                return Err(Error::invalid("messages", "images are only valid on user messages"));
            }
        }
        let started = Instant::now();
        let result = match model.provider {
            Provider::Mock => self.mock.lock().unwrap().chat(model, messages),
            Provider::HttpCompatible => self.http.chat(model, messages, &self.retry),
        };
        self.audit("chat", model, digest_messages(messages), started, result.is_ok());
        result
    }

    /// Embed a batch of texts; one vector per text, uniform dimension.
    pub fn embed(&self, model: &ModelRef, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        model.validate()?;
        if texts.is_empty() {
            return Err(Error::invalid("texts", "must be non-empty"));
        }
        let started = Instant::now();
        let result = match model.provider {
            Provider::Mock => Ok(texts.iter().map(|t| mock::hashed_embedding(t)).collect()),
            Provider::HttpCompatible => self.http.embed(model, texts, &self.retry),
        };
        let digest = format!("{:016x}", fnv1a(texts.join("\u{1f}").as_bytes()));
        self.audit("embed", model, digest, started, result.is_ok());
        result
    }

    fn audit(&self, kind: &str, model: &ModelRef, request_digest: String, started: Instant, ok: bool) {
        if let Some(sink) = &self.audit {
            let record = AuditRecord {
                kind,
                model: &model.model_id,
                request_digest,
                latency_ms: started.elapsed().as_millis(),
                ok,
            };
            let mut sink = sink.lock().unwrap();
            if serde_json::to_writer(&mut *sink, &record).is_ok() {
                use std::io::Write;
                let _ = writeln!(sink);
                let _ = sink.flush();
            }
        }
    }
}

fn digest_messages(messages: &[ModelMessage]) -> String {
    let mut bytes = Vec::new();
    for m in messages {
        bytes.extend_from_slice(m.text.as_bytes());
        bytes.push(0x1f);
        for img in &m.images {
            bytes.extend_from_slice(img);
        }
    }
    format!("{:016x}", fnv1a(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_wildcard_script_replies() {
        let gw = Gateway::with_mock_script(MockScript::always("[A]"));
        let reply = gw
            .chat(&ModelRef::mock("m"), &[ModelMessage::user("anything")])
            .unwrap();
        assert_eq!(reply, "[A]");
    }

    #[test]
    fn mock_pattern_matching_picks_first_match() {
        let script = MockScript {
            rules: vec![
                MockRule::on_pattern("granger", "[B]"),
                MockRule::wildcard("[A]"),
            ],
        };
        let gw = Gateway::with_mock_script(script);
        let m = ModelRef::mock("m");
        assert_eq!(
            gw.chat(&m, &[ModelMessage::user("about granger causality")]).unwrap(),
            "[B]"
        );
        assert_eq!(gw.chat(&m, &[ModelMessage::user("plain")]).unwrap(), "[A]");
    }

    #[test]
    fn mock_sequential_replies_advance_and_stick() {
        let script = MockScript {
            rules: vec![MockRule::sequence("*", vec!["first".into(), "second".into()])],
        };
        let gw = Gateway::with_mock_script(script);
        let m = ModelRef::mock("m");
        let msg = [ModelMessage::user("x")];
        assert_eq!(gw.chat(&m, &msg).unwrap(), "first");
        assert_eq!(gw.chat(&m, &msg).unwrap(), "second");
        assert_eq!(gw.chat(&m, &msg).unwrap(), "second");
    }

    #[test]
    fn missing_credential_fails_before_any_network_use() {
        let gw = Gateway::new();
        let model = ModelRef::http(
            "gpt-test",
            "http://127.0.0.1:1/v1",
            Some("TSEXAM_API_KEY_DEFINITELY_UNSET".into()),
        );
        match gw.chat(&model, &[ModelMessage::user("hello")]) {
            Err(Error::MissingCredential(var)) => {
                assert_eq!(var, "TSEXAM_API_KEY_DEFINITELY_UNSET")
            }
            other => panic!("expected MissingCredential, got {other:?}"),
        }
    }

    #[test]
    fn mock_embeddings_are_deterministic_and_uniform() {
        let gw = Gateway::new();
        let m = ModelRef::mock("embed");
        let texts = vec!["alpha".to_string(), "beta".to_string(), "alpha".to_string()];
        let vectors = gw.embed(&m, &texts).unwrap();
        assert_eq!(vectors.len(), 3);
        assert_eq!(vectors[0], vectors[2]);
        assert_ne!(vectors[0], vectors[1]);
        assert!(vectors.iter().all(|v| v.len() == vectors[0].len()));
    }

    #[test]
    fn empty_embed_batch_rejected() {
        let gw = Gateway::new();
        assert!(gw.embed(&ModelRef::mock("e"), &[]).is_err());
    }

    #[test]
    fn images_on_non_user_messages_rejected() {
        let gw = Gateway::with_mock_script(MockScript::always("ok"));
        let mut msg = ModelMessage::system("sys");
        msg.images.push(vec![1, 2, 3]);
        assert!(gw.chat(&ModelRef::mock("m"), &[msg]).is_err());
    }
}
