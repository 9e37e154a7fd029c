//! Generation backends: a chat-completions HTTP client plus offline mock and
//! scripted backends for tests and fixture runs.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::template::{ChatMessage, PromptRender, Role, Stage};
use crate::corpus::StanceLabel;

/// Everything a backend needs for one call.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub post_id: &'a str,
    pub stage: Stage,
    pub prompt: &'a PromptRender,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Closed answer set for the decision stage.
    pub constraint: Option<&'a [String]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    /// Per-option scores keyed by option string, when the backend has them.
    pub scores: Option<BTreeMap<String, f64>>,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Generation {
            text: text.into(),
            scores: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// A text generator. When `supports_constraint` is true and a request
/// carries a constraint, the returned text must be one of its options.
pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;
    fn supports_constraint(&self) -> bool;
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Generation, BackendError>;
}

/// Client for chat-completions style servers:
/// `{model, messages, max_tokens, temperature}` in,
/// `choices[0].message.content` out.
pub struct HttpChatBackend {
    name: String,
    endpoint: String,
    model: String,
    constrained_field: Option<String>,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub const API_KEY_VAR: &'static str = "LLM_API_KEY";

    /// `constrained_field`, when set, names a request field that takes the
    /// list of allowed answers (for example `guided_choice`).
    pub fn new(
        name: impl Into<String>,
        base_url: &str,
        model: impl Into<String>,
        constrained_field: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError(e.to_string()))?;
        Ok(HttpChatBackend {
            name: name.into(),
            endpoint,
            model: model.into(),
            constrained_field,
            api_key: std::env::var(Self::API_KEY_VAR).ok(),
            client,
        })
    }

    /// Chat APIs cannot continue a partial assistant turn, so a response
    /// prefix is appended to the last user message instead.
    pub fn wire_messages(prompt: &PromptRender) -> Vec<ChatMessage> {
        let mut messages = prompt.messages.clone();
        if !prompt.response_prefix.is_empty() {
            match messages.last_mut() {
                Some(last) if last.role == Role::User => {
                    last.content.push('\n');
                    last.content.push_str(&prompt.response_prefix);
                }
                _ => messages.push(ChatMessage {
                    role: Role::User,
                    content: prompt.response_prefix.clone(),
                }),
            }
        }
        messages
    }
}

impl GenerationBackend for HttpChatBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_constraint(&self) -> bool {
        self.constrained_field.is_some()
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        let mut body = json!({
            "model": self.model,
            "messages": Self::wire_messages(req.prompt),
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        if let (Some(field), Some(options)) = (&self.constrained_field, req.constraint) {
            body[field.as_str()] = json!(options);
        }
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| BackendError(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp.text().unwrap_or_default();
            return Err(BackendError(format!("HTTP {status}: {}", detail.chars().take(200).collect::<String>())));
        }
        let v: Value = resp.json().map_err(|e| BackendError(e.to_string()))?;
        let text = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| BackendError("response has no choices[0].message.content".into()))?;
        Ok(Generation::text(text.trim()))
    }
}

fn mix(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in key.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic offline backend. Labels come from a table keyed by post id;
/// ids missing from the table get a label drawn from `fallback_weights`
/// with a hash of (seed, id).
pub struct MockBackend {
    name: String,
    seed: u64,
    labels: HashMap<String, StanceLabel>,
    fallback_weights: [f64; 3],
    constrained: bool,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        MockBackend {
            name: "mock".into(),
            seed,
            labels: HashMap::new(),
            fallback_weights: [0.6, 0.15, 0.25],
            constrained: true,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_labels(mut self, labels: HashMap<String, StanceLabel>) -> Self {
        self.labels = labels;
        self
    }

    /// Free-form decisions ("The tweet is ...") instead of bare options.
    pub fn unconstrained(mut self) -> Self {
        self.constrained = false;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn label_for(&self, post_id: &str) -> StanceLabel {
        if let Some(&l) = self.labels.get(post_id) {
            return l;
        }
        let u = (mix(self.seed, post_id) >> 11) as f64 / (1u64 << 53) as f64;
        let mut acc = 0.0;
        for (i, w) in self.fallback_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return StanceLabel::ALL[i];
            }
        }
        StanceLabel::Neutral
    }

    fn scores(&self, post_id: &str, chosen: &str, options: &[String]) -> BTreeMap<String, f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed.rotate_left(17), post_id));
        let raw: Vec<f64> = options
            .iter()
            .map(|o| rng.gen::<f64>() + if o == chosen { 1.0 } else { 0.0 })
            .collect();
        let total: f64 = raw.iter().sum();
        options.iter().cloned().zip(raw.into_iter().map(|r| r / total)).collect()
    }
}

impl GenerationBackend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_constraint(&self) -> bool {
        self.constrained
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let label = self.label_for(req.post_id);
        Ok(match req.stage {
            Stage::Translation => Generation::text(format!("mock translation of post {}", req.post_id)),
            Stage::Reasoning => Generation::text(format!("mock reasoning for post {}", req.post_id)),
            Stage::Decision => {
                let defaults: Vec<String> = StanceLabel::ALL.iter().map(|l| l.decision_str().to_string()).collect();
                let options = req.constraint.unwrap_or(&defaults);
                let i = StanceLabel::ALL.iter().position(|&l| l == label).expect("closed label set");
                let chosen = options.get(i).cloned().unwrap_or_else(|| label.decision_str().to_string());
                let scores = Some(self.scores(req.post_id, &chosen, options));
                let text = if self.constrained {
                    chosen
                } else {
                    format!("The tweet is {chosen}.")
                };
                Generation { text, scores }
            }
        })
    }
}

type Script = dyn Fn(&GenerationRequest<'_>) -> Result<Generation, BackendError> + Send + Sync;

/// Backend driven by a closure, with a call counter.
pub struct ScriptedBackend {
    name: String,
    constrained: bool,
    script: Box<Script>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(
        name: impl Into<String>,
        constrained: bool,
        script: impl Fn(&GenerationRequest<'_>) -> Result<Generation, BackendError> + Send + Sync + 'static,
    ) -> Self {
        ScriptedBackend {
            name: name.into(),
            constrained,
            script: Box::new(script),
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers every decision with `answer`, other stages with a stub.
    pub fn answering(answer: impl Into<String>, constrained: bool) -> Self {
        let answer = answer.into();
        ScriptedBackend::new("scripted", constrained, move |req| {
            Ok(Generation::text(match req.stage {
                Stage::Decision => answer.clone(),
                other => format!("{other} output"),
            }))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl GenerationBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_constraint(&self) -> bool {
        self.constrained
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(req)
    }
}

/// Assigns labels to `ids` in exact proportions: the ids are shuffled with
/// `seed`, then the first `round(p0 * n)` get the first label, and so on;
/// the last label takes the remainder.
pub fn quota_labels(ids: &[String], weights: [f64; 3], seed: u64) -> HashMap<String, StanceLabel> {
    let mut order: Vec<&String> = ids.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let a = ((weights[0] * n as f64).round() as usize).min(n);
    let b = ((weights[1] * n as f64).round() as usize).min(n - a);
    order
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let label = if i < a {
                StanceLabel::ALL[0]
            } else if i < a + b {
                StanceLabel::ALL[1]
            } else {
                StanceLabel::ALL[2]
            };
            (id.clone(), label)
        })
        .collect()
}

/// Copies `gold`, replacing each label with a different one with
/// probability `1 - accuracy`. Simulates a classifier of known quality.
pub fn noisy_labels(
    gold: &BTreeMap<String, StanceLabel>,
    accuracy: f64,
    seed: u64,
) -> HashMap<String, StanceLabel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gold.iter()
        .map(|(id, &label)| {
            let keep = rng.gen::<f64>() < accuracy;
            let shift = rng.gen_range(1..3);
            let l = if keep {
                label
            } else {
                let i = StanceLabel::ALL.iter().position(|&x| x == label).expect("closed label set");
                StanceLabel::ALL[(i + shift) % 3]
            };
            (id.clone(), l)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render() -> PromptRender {
        PromptRender {
            flat: String::new(),
            messages: vec![ChatMessage {
                role: Role::User,
                content: "q".into(),
            }],
            response_prefix: "Answer:".into(),
        }
    }

    #[test]
    fn quotas_are_exact() {
        let ids: Vec<String> = (0..200).map(|i| i.to_string()).collect();
        let labels = quota_labels(&ids, [0.6, 0.15, 0.25], 3);
        let count = |l| labels.values().filter(|&&x| x == l).count();
        assert_eq!(count(StanceLabel::Supportive), 120);
        assert_eq!(count(StanceLabel::Against), 30);
        assert_eq!(count(StanceLabel::Neutral), 50);
        assert_eq!(labels, quota_labels(&ids, [0.6, 0.15, 0.25], 3));
        assert_ne!(labels, quota_labels(&ids, [0.6, 0.15, 0.25], 4));
    }

    #[test]
    fn mock_scores_favor_the_answer() {
        let m = MockBackend::new(1);
        let options: Vec<String> = StanceLabel::ALL.iter().map(|l| l.decision_str().to_string()).collect();
        let prompt = render();
        for id in ["a", "b", "c", "d"] {
            let req = GenerationRequest {
                post_id: id,
                stage: Stage::Decision,
                prompt: &prompt,
                max_tokens: 10,
                temperature: 0.0,
                constraint: Some(&options),
            };
            let g = m.generate(&req).unwrap();
            assert!(options.contains(&g.text));
            let s = g.scores.unwrap();
            let best = s.iter().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(best, &g.text);
            assert!((s.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(m.calls(), 4);
    }

    #[test]
    fn prefix_is_folded_into_last_user_turn() {
        let m = HttpChatBackend::wire_messages(&render());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].content, "q\nAnswer:");
    }

    #[test]
    fn noisy_labels_hit_rate() {
        let gold: BTreeMap<String, StanceLabel> = (0..2000).map(|i| (i.to_string(), StanceLabel::ALL[i % 3])).collect();
        let noisy = noisy_labels(&gold, 0.7, 9);
        let hits = gold.iter().filter(|(k, v)| noisy[*k] == **v).count();
        assert!((1300..1500).contains(&hits), "{hits}");
    }
}
