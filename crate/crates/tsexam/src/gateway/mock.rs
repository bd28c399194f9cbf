//! Deterministic scripted mock provider.

use serde::{Deserialize, Serialize};

use super::{ModelMessage, ModelRef};
use crate::error::Error;
use crate::rng::{fnv1a, rng_for};
use crate::Result;

/// A scripted reply rule.
///
/// Rules are checked in order; the first whose `model` and `pattern` match
/// answers the call. A rule with several replies advances one reply per hit
/// and then sticks on the last, which scripts multi-attempt behavior such as
/// "fail twice, then succeed".
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MockRule {
    /// Model id this rule answers for, or `*` for any.
    #[serde(default = "wildcard_string")]
    pub model: String,
    /// Substring that must occur in the concatenated prompt text, or `*`.
    #[serde(default = "wildcard_string")]
    pub pattern: String,
    pub replies: Vec<String>,
}

fn wildcard_string() -> String {
    "*".to_string()
}

impl MockRule {
    pub fn wildcard(reply: impl Into<String>) -> Self {
        MockRule {
            model: "*".into(),
            pattern: "*".into(),
            replies: vec![reply.into()],
        }
    }

    pub fn on_pattern(pattern: impl Into<String>, reply: impl Into<String>) -> Self {
        MockRule {
            model: "*".into(),
            pattern: pattern.into(),
            replies: vec![reply.into()],
        }
    }

    pub fn for_model(model: impl Into<String>, reply: impl Into<String>) -> Self {
        MockRule {
            model: model.into(),
            pattern: "*".into(),
            replies: vec![reply.into()],
        }
    }

    pub fn sequence(pattern: impl Into<String>, replies: Vec<String>) -> Self {
        MockRule {
            model: "*".into(),
            pattern: pattern.into(),
            replies,
        }
    }

    pub fn for_model_sequence(model: impl Into<String>, replies: Vec<String>) -> Self {
        MockRule {
            model: model.into(),
            pattern: "*".into(),
            replies,
        }
    }
}

/// An ordered list of reply rules.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

impl MockScript {
    /// Script every call to return the same reply.
    pub fn always(reply: impl Into<String>) -> Self {
        MockScript {
            rules: vec![MockRule::wildcard(reply)],
        }
    }
}

#[derive(Default)]
pub(super) struct MockState {
    script: MockScript,
    hits: Vec<usize>,
}

impl MockState {
    pub(super) fn new(script: MockScript) -> Self {
        let hits = vec![0; script.rules.len()];
        MockState { script, hits }
    }

    pub(super) fn chat(&mut self, model: &ModelRef, messages: &[ModelMessage]) -> Result<String> {
        let prompt: String = messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        for (i, rule) in self.script.rules.iter().enumerate() {
            let model_ok = rule.model == "*" || rule.model == model.model_id;
            let pattern_ok = rule.pattern == "*" || prompt.contains(&rule.pattern);
            if model_ok && pattern_ok {
                if rule.replies.is_empty() {
                    return Err(Error::Gateway(format!(
                        "mock rule {i} matched but has no replies"
                    )));
                }
                let idx = self.hits[i].min(rule.replies.len() - 1);
                self.hits[i] += 1;
                return Ok(rule.replies[idx].clone());
            }
        }
        Err(Error::Gateway(format!(
            "mock script has no rule for model `{}` and prompt starting `{}`",
            model.model_id,
            prompt.chars().take(60).collect::<String>()
        )))
    }
}

/// Deterministic embedding for the mock provider: a unit vector drawn from a
/// stream seeded by the text's hash. Identical texts embed identically.
pub(super) fn hashed_embedding(text: &str) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rng_for(fnv1a(text.as_bytes()));
    let mut v: Vec<f64> = (0..16)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}
