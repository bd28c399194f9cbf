//! Chat-completion-compatible HTTP transport with retries and rate limiting.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{ModelMessage, ModelRef, RateLimit, RetryPolicy, Role};
use crate::error::Error;
use crate::Result;

pub(super) struct HttpClient {
    client: reqwest::blocking::Client,
    limit: RateLimit,
    in_flight: Mutex<usize>,
    in_flight_cv: Condvar,
    last_request: Mutex<HashMap<String, Instant>>,
}

impl HttpClient {
    pub(super) fn new(limit: RateLimit) -> Self {
        HttpClient {
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("reqwest client"),
            limit,
            in_flight: Mutex::new(0),
            in_flight_cv: Condvar::new(),
            last_request: Mutex::new(HashMap::new()),
        }
    }

    pub(super) fn chat(
        &self,
        model: &ModelRef,
        messages: &[ModelMessage],
        retry: &RetryPolicy,
    ) -> Result<String> {
        let payload = json!({
            "model": model.model_id,
            "messages": messages.iter().map(wire_message).collect::<Vec<_>>(),
        });
        let body = self.send(model, "chat/completions", payload, retry)?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::Gateway("response has no choices[0].message.content".into()))
    }

    pub(super) fn embed(
        &self,
        model: &ModelRef,
        texts: &[String],
        retry: &RetryPolicy,
    ) -> Result<Vec<Vec<f64>>> {
        let payload = json!({
            "model": model.model_id,
            "input": texts,
        });
        let body = self.send(model, "embeddings", payload, retry)?;
        let data = body
            .pointer("/data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Gateway("embedding response has no data array".into()))?;
        let mut vectors = Vec::with_capacity(data.len());
        for entry in data {
            let v = entry
                .pointer("/embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Gateway("embedding entry has no vector".into()))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN))
                .collect();
            vectors.push(v);
        }
        if vectors.len() != texts.len() {
            return Err(Error::Gateway(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        Ok(vectors)
    }

    fn send(
        &self,
        model: &ModelRef,
        route: &str,
        payload: Value,
        retry: &RetryPolicy,
    ) -> Result<Value> {
        // Credential lookup happens before anything touches the network.
        let token = match &model.credential_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| Error::MissingCredential(var.clone()))?)
            }
            None => None,
        };
        let endpoint = model.endpoint.as_deref().expect("validated earlier");
        let url = format!("{}/{route}", endpoint.trim_end_matches('/'));
        let body = serde_json::to_vec(&payload)?;
        if body.len() > retry.max_payload_bytes {
            return Err(Error::OversizePayload {
                size: body.len(),
                limit: retry.max_payload_bytes,
            });
        }

        let _slot = self.acquire_slot();
        self.pace(&model.model_id);

        let mut last_error = String::new();
        for attempt in 0..retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    retry.base_delay_ms.saturating_mul(1 << (attempt - 1)),
                ));
            }
            let mut request = self
                .client
                .post(&url)
                .header("content-type", "application/json")
                .body(body.clone());
            if let Some(token) = &token {
                request = request.bearer_auth(token);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(Error::AuthFailed {
                            model: model.model_id.clone(),
                            message: response.text().unwrap_or_default(),
                        });
                    }
                    if status.as_u16() == 413 {
                        return Err(Error::OversizePayload {
                            size: body.len(),
                            limit: retry.max_payload_bytes,
                        });
                    }
                    if status.is_success() {
                        return response
                            .json::<Value>()
                            .map_err(|e| Error::Gateway(format!("bad response body: {e}")));
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    last_error = format!("HTTP {status}");
                    if !retryable {
                        return Err(Error::Gateway(format!(
                            "model `{}` returned {status}",
                            model.model_id
                        )));
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::RetriesExhausted {
            model: model.model_id.clone(),
            attempts: retry.max_attempts,
            last_error,
        })
    }

    fn acquire_slot(&self) -> SlotGuard<'_> {
        let mut count = self.in_flight.lock().unwrap();
        while *count >= self.limit.max_in_flight.max(1) {
            count = self.in_flight_cv.wait(count).unwrap();
        }
        *count += 1;
        SlotGuard { client: self }
    }

    fn pace(&self, model_id: &str) {
        if self.limit.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.limit.min_interval_ms);
        let wait = {
            let mut last = self.last_request.lock().unwrap();
            let now = Instant::now();
            let wait = last
                .get(model_id)
                .and_then(|t| (*t + interval).checked_duration_since(now))
                .unwrap_or(Duration::ZERO);
            last.insert(model_id.to_string(), now + wait);
            wait
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

struct SlotGuard<'a> {
    client: &'a HttpClient,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.client.in_flight.lock().unwrap();
        *count -= 1;
        self.client.in_flight_cv.notify_one();
    }
}

fn wire_message(message: &ModelMessage) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    };
    if message.images.is_empty() {
        json!({ "role": role, "content": message.text })
    } else {
        let mut parts = vec![json!({ "type": "text", "text": message.text })];
        for image in &message.images {
            let encoded = base64::engine::general_purpose::STANDARD.encode(image);
            parts.push(json!({
                "type": "image_url",
                "image_url": { "url": format!("data:image/png;base64,{encoded}") },
            }));
        }
        json!({ "role": role, "content": parts })
    }
}
