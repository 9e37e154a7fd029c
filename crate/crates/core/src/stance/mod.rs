//! Stance classification toward the focus issue with a staged prompt:
//! optional worked examples, a model-made English translation, step-by-step
//! reasoning and a final decision restricted to three labels.

mod backend;
mod batch;
mod template;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use backend::{
    noisy_labels, quota_labels, BackendError, Generation, GenerationBackend, GenerationRequest, HttpChatBackend,
    MockBackend, ScriptedBackend,
};
pub use batch::{batch_classify, BatchError, BatchOptions, BatchResult, FailureRecord};
pub use template::{
    to_messages, ChatMessage, PriorOutputs, PromptError, PromptRender, PromptSpec, PromptTemplate, PromptVariant,
    Role, ShotExample, Stage, TemplateError, DEFAULT_TEMPLATE,
};

use crate::corpus::{de_ts, ser_ts, Post, StanceLabel};

/// The full generation record for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTrace {
    pub post_id: String,
    /// Prompt text sent for the decision stage.
    pub prompt_rendered: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub raw_decision: String,
    pub label: StanceLabel,
    /// No label string occurred in the decision text; `label` is the
    /// neutral default.
    #[serde(default)]
    pub parse_fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<StanceLabel, f64>>,
    pub backend: String,
    /// Creation time of the classified post, so traces are reproducible.
    #[serde(serialize_with = "ser_ts", deserialize_with = "de_ts")]
    pub timestamp: DateTime<Utc>,
}

/// Finds the label whose string occurs last in `raw`, comparing case-folded
/// text. Returns `(Neutral, true)` when none occurs.
pub fn parse_decision(raw: &str, labels: &[String; 3]) -> (StanceLabel, bool) {
    let hay = crate::text::fold(raw);
    let mut best: Option<(usize, usize, StanceLabel)> = None;
    for (i, s) in labels.iter().enumerate() {
        let needle = crate::text::fold(s);
        if needle.is_empty() {
            continue;
        }
        if let Some(pos) = hay.rfind(&needle) {
            let cand = (pos, needle.len(), StanceLabel::ALL[i]);
            if best.is_none_or(|b| (cand.0, cand.1) > (b.0, b.1)) {
                best = Some(cand);
            }
        }
    }
    match best {
        Some((_, _, label)) => (label, false),
        None => (StanceLabel::Neutral, true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    /// Extra attempts after a failed backend call.
    pub retries: u32,
    /// Wait before the first retry; doubled for every further one.
    pub backoff: Duration,
    pub temperature: f64,
    pub max_tokens_translation: u32,
    pub max_tokens_reasoning: u32,
    pub max_tokens_decision: u32,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            retries: 3,
            backoff: Duration::from_millis(500),
            temperature: 0.0,
            max_tokens_translation: 200,
            max_tokens_reasoning: 300,
            max_tokens_decision: 10,
        }
    }
}

impl ClassifyOptions {
    fn max_tokens(&self, stage: Stage) -> u32 {
        match stage {
            Stage::Translation => self.max_tokens_translation,
            Stage::Reasoning => self.max_tokens_reasoning,
            Stage::Decision => self.max_tokens_decision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("post {post_id}: {source}")]
    Prompt {
        post_id: String,
        #[source]
        source: PromptError,
    },
    #[error("post {post_id}: {stage} stage failed after {attempts} attempt(s): {message}")]
    Backend {
        post_id: String,
        stage: Stage,
        attempts: u32,
        message: String,
    },
}

impl ClassifyError {
    pub fn post_id(&self) -> &str {
        match self {
            ClassifyError::Prompt { post_id, .. } | ClassifyError::Backend { post_id, .. } => post_id,
        }
    }
}

fn call_with_retries(
    backend: &dyn GenerationBackend,
    req: &GenerationRequest<'_>,
    opts: &ClassifyOptions,
) -> Result<Generation, ClassifyError> {
    let mut attempt = 0;
    loop {
        let result = backend.generate(req).and_then(|g| match req.constraint {
            Some(options) if backend.supports_constraint() && !options.contains(&g.text) => Err(BackendError(
                format!("constrained output `{}` is not one of the options", g.text),
            )),
            _ => Ok(g),
        });
        match result {
            Ok(g) => return Ok(g),
            Err(e) if attempt >= opts.retries => {
                return Err(ClassifyError::Backend {
                    post_id: req.post_id.to_string(),
                    stage: req.stage,
                    attempts: attempt + 1,
                    message: e.0,
                })
            }
            Err(e) => {
                log::warn!("post {} {} stage attempt {}: {}", req.post_id, req.stage, attempt + 1, e);
                let wait = opts.backoff.saturating_mul(1u32 << attempt.min(16));
                if !wait.is_zero() {
                    thread::sleep(wait);
                }
                attempt += 1;
            }
        }
    }
}

/// Runs the enabled stages for one post and parses the decision.
pub fn classify_post(
    post: &Post,
    spec: &PromptSpec,
    backend: &dyn GenerationBackend,
    opts: &ClassifyOptions,
) -> Result<ClassificationTrace, ClassifyError> {
    let prompt_err = |source| ClassifyError::Prompt {
        post_id: post.id.clone(),
        source,
    };
    spec.validate().map_err(prompt_err)?;
    let mut prior = PriorOutputs::default();
    for stage in spec.stages() {
        let prompt = spec.build_prompt(&post.text, stage, &prior).map_err(prompt_err)?;
        let constraint = (stage == Stage::Decision).then_some(&spec.label_strings[..]);
        let req = GenerationRequest {
            post_id: &post.id,
            stage,
            prompt: &prompt,
            max_tokens: opts.max_tokens(stage),
            temperature: opts.temperature,
            constraint,
        };
        let out = call_with_retries(backend, &req, opts)?;
        match stage {
            Stage::Translation => prior.translation = Some(out.text.trim().to_string()),
            Stage::Reasoning => prior.reasoning = Some(out.text.trim().to_string()),
            Stage::Decision => {
                let (label, parse_fallback) = parse_decision(&out.text, &spec.label_strings);
                let scores = out.scores.map(|s| {
                    StanceLabel::ALL
                        .iter()
                        .filter_map(|&l| s.get(spec.label_string(l)).map(|&v| (l, v)))
                        .collect::<BTreeMap<_, _>>()
                });
                return Ok(ClassificationTrace {
                    post_id: post.id.clone(),
                    prompt_rendered: prompt.flat,
                    translation: prior.translation,
                    reasoning: prior.reasoning,
                    raw_decision: out.text,
                    label,
                    parse_fallback,
                    scores: scores.filter(|s| !s.is_empty()),
                    backend: backend.name().to_string(),
                    timestamp: post.created_at,
                });
            }
        }
    }
    unreachable!("the decision stage always runs")
}

/// Worked examples from CSV with header `tweet_text,label`. Labels may be
/// given as decision strings (`supportive`) or label names (`SUPPORTIVE`).
pub fn read_shots_csv<R: io::Read>(input: R) -> Result<Vec<ShotExample>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let (ti, li) = (col("tweet_text")?, col("label")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(0, |p| p.line());
        let text = rec.get(ti).unwrap_or("").trim();
        if text.is_empty() {
            return Err(format!("line {line}: empty tweet_text"));
        }
        let raw = rec.get(li).unwrap_or("").trim();
        let label = StanceLabel::ALL
            .iter()
            .copied()
            .find(|l| raw.eq_ignore_ascii_case(l.decision_str()) || raw == l.as_str())
            .ok_or_else(|| format!("line {line}: unknown label `{raw}`"))?;
        out.push(ShotExample {
            tweet_text: text.to_string(),
            label,
        });
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

pub fn write_traces<W: Write>(traces: &[ClassificationTrace], mut out: W) -> io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_traces(path: &Path, traces: &[ClassificationTrace]) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_traces(traces, BufWriter::new(file)).map_err(io_err)
}

pub fn read_traces<R: BufRead>(reader: R, name: &str) -> Result<Vec<ClassificationTrace>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TraceError::Io {
            path: name.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
            path: name.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}

pub fn load_traces(path: &Path) -> Result<Vec<ClassificationTrace>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_traces(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_ts;

    fn labels() -> [String; 3] {
        StanceLabel::decision_strings()
    }

    fn post() -> Post {
        Post::new("42", parse_ts("2022-11-21T10:00:00Z").unwrap(), "de", "Die Binde!")
    }

    fn quick() -> ClassifyOptions {
        ClassifyOptions {
            backoff: Duration::ZERO,
            ..ClassifyOptions::default()
        }
    }

    #[test]
    fn decision_parsing() {
        let l = labels();
        assert_eq!(parse_decision("supportive", &l), (StanceLabel::Supportive, false));
        assert_eq!(parse_decision("not neutral, clearly against", &l), (StanceLabel::Against, false));
        assert_eq!(parse_decision("", &l), (StanceLabel::Neutral, true));
        assert_eq!(parse_decision("I think it is: AGAINST.", &l), (StanceLabel::Against, false));
        assert_eq!(parse_decision("banana", &l), (StanceLabel::Neutral, true));
        assert_eq!(parse_decision("Neutral", &l), (StanceLabel::Neutral, false));
    }

    #[test]
    fn scripted_answer_without_optional_stages() {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Base);
        let b = ScriptedBackend::answering("supportive", true);
        let t = classify_post(&post(), &spec, &b, &quick()).unwrap();
        assert_eq!(t.label, StanceLabel::Supportive);
        assert!(t.translation.is_none() && t.reasoning.is_none());
        assert!(!t.parse_fallback);
        assert_eq!(b.calls(), 1);
    }

    #[test]
    fn free_form_decisions() {
        let spec = PromptSpec::default();
        let b = ScriptedBackend::answering("I think it is: against.", false);
        let t = classify_post(&post(), &spec, &b, &quick()).unwrap();
        assert_eq!(t.label, StanceLabel::Against);
        assert_eq!(t.translation.as_deref(), Some("translation output"));
        assert_eq!(t.reasoning.as_deref(), Some("reasoning output"));
        assert!(t.prompt_rendered.ends_with("[\\INST] "));
        assert_eq!(b.calls(), 3);

        let b = ScriptedBackend::answering("banana", false);
        let t = classify_post(&post(), &spec, &b, &quick()).unwrap();
        assert_eq!((t.label, t.parse_fallback), (StanceLabel::Neutral, true));
    }

    #[test]
    fn retries_then_fails_with_post_id() {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Base);
        let b = ScriptedBackend::new("down", true, |_| Err(BackendError("connection refused".into())));
        let err = classify_post(&post(), &spec, &b, &quick()).unwrap_err();
        assert_eq!(err.post_id(), "42");
        assert!(matches!(err, ClassifyError::Backend { attempts: 4, stage: Stage::Decision, .. }));
        assert_eq!(b.calls(), 4);
    }

    #[test]
    fn constrained_backend_must_pick_an_option() {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), PromptVariant::Base);
        let b = ScriptedBackend::answering("maybe", true);
        assert!(classify_post(&post(), &spec, &b, &quick()).is_err());
    }

    #[test]
    fn shots_csv() {
        let shots = read_shots_csv("tweet_text,label\n\"a, b\",supportive\nc,AGAINST\n".as_bytes()).unwrap();
        assert_eq!(shots.len(), 2);
        assert_eq!(shots[0].tweet_text, "a, b");
        assert_eq!(shots[1].label, StanceLabel::Against);
        assert!(read_shots_csv("tweet_text,label\nx,maybe\n".as_bytes()).is_err());
        assert!(read_shots_csv("text,label\nx,neutral\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let spec = PromptSpec::default();
        let b = MockBackend::new(5);
        let t = classify_post(&post(), &spec, &b, &quick()).unwrap();
        assert!(t.scores.as_ref().is_some_and(|s| s.len() == 3));
        let mut buf = Vec::new();
        write_traces(std::slice::from_ref(&t), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"timestamp\":\"2022-11-21T10:00:00Z\""));
        let back = read_traces(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, vec![t]);
    }
}
