//! Config-driven stage orchestration. Every stage reads its inputs from the
//! output directory (or the config), writes its artifacts there and leaves a
//! `<stage>.manifest.json` describing both.

mod config;
mod manifest;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Duration as ChronoDuration, FixedOffset, NaiveDate, Utc};

pub use config::{
    BackendSection, CorpusSection, EmbeddingSection, EvalSection, ExtraTraces, OutputSection, PipelineConfig,
    StanceSection, TimelineSection, TopicsSection,
};
pub use manifest::{sha256_file, FileDigest, Manifest};

use crate::corpus::{load_annotations, load_corpus, parse_ts, AnnotationScheme, Corpus, CorpusFormat};
use crate::evalmetrics::{compare_reports, evaluate_traces, EvalOptions, EvalReport};
use crate::filterlang::parse_query;
use crate::stance::{
    self, batch_classify, BatchOptions, ClassifyOptions, GenerationBackend, HttpChatBackend, MockBackend, PromptSpec,
    PromptTemplate,
};
use crate::textprep::{build_vocabulary, count_vectorize, default_min_df, tokenize, StopwordList};
use crate::timeline::{self, emit_chart, emit_csv, parse_offset, ChartOptions, DaySpan};
use crate::topics::{
    self, assign_topic_labels, cluster_embeddings, ctfidf_keywords, embed_corpus, ClusterAssignment, ClusterParams,
    EmbeddingProvider, HashEmbedding, HttpEmbedding,
};

pub const FILTERED: &str = "filtered.jsonl";
pub const FILTERED_IDS: &str = "filtered.ids.txt";
pub const TOPICS_CSV: &str = "topics.csv";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const TRACES: &str = "traces.jsonl";
pub const FAILURES: &str = "failures.jsonl";
pub const EVAL_TXT: &str = "eval.txt";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const TOPIC_TIMELINE_CSV: &str = "topic_timeline.csv";
pub const TOPIC_TIMELINE_SVG: &str = "topic_timeline.svg";
pub const STANCE_TIMELINE_CSV: &str = "stance_timeline.csv";
pub const STANCE_TIMELINE_SVG: &str = "stance_timeline.svg";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error("missing {artifact}; run the `{stage}` stage first")]
    Prerequisite { artifact: String, stage: &'static str },
    #[error("backend: {0}")]
    Backend(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit status: 2 for backend failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Backend(_) => 2,
            _ => 1,
        }
    }
}

fn input<E: std::fmt::Display>(e: E) -> PipelineError {
    PipelineError::Input(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Filter,
    Topics,
    Classify,
    Eval,
    Timeline,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Filter, Stage::Topics, Stage::Classify, Stage::Eval, Stage::Timeline];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Topics => "topics",
            Stage::Classify => "classify",
            Stage::Eval => "eval",
            Stage::Timeline => "timeline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    hash: String,
}

impl Ctx<'_> {
    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn require(&self, name: &str, stage: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(PipelineError::Prerequisite {
                artifact: name.to_string(),
                stage: stage.as_str(),
            })
        }
    }

    fn finish(&self, stage: Stage, inputs: &[&Path], outputs: Vec<PathBuf>, summary: String) -> Result<StageOutcome, PipelineError> {
        let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        let path = self.artifact(&format!("{}.manifest.json", stage.as_str()));
        Manifest::build(stage.as_str(), &self.hash, inputs, &refs)
            .and_then(|m| m.write(&path))
            .map_err(io_at(&path))?;
        log::info!("{}: {summary}", stage.as_str());
        Ok(StageOutcome { stage, outputs, summary })
    }

    fn load_filtered(&self) -> Result<(PathBuf, Corpus), PipelineError> {
        let p = self.require(FILTERED, Stage::Filter)?;
        let c = load_corpus(&p, CorpusFormat::Jsonl).map_err(input)?;
        Ok((p, c))
    }

    fn stance_subset(&self, corpus: &Corpus) -> Corpus {
        match self.cfg.stance.subset.as_str() {
            "all" => corpus.clone(),
            _ => corpus.select_onelove_subset(),
        }
    }
}

/// Reads a query file and keeps the matching posts of a corpus file.
pub fn filter_file(query_path: &Path, corpus_path: &Path, out_path: &Path) -> Result<usize, PipelineError> {
    let query_text = fs::read_to_string(query_path).map_err(io_at(query_path))?;
    let ast = parse_query(&query_text).map_err(|e| PipelineError::Input(format!("{}: {e}", query_path.display())))?;
    let corpus = load_corpus(corpus_path, CorpusFormat::from_path(corpus_path)).map_err(input)?;
    let kept = ast.filter_corpus(&corpus);
    kept.save_jsonl(out_path).map_err(input)?;
    Ok(kept.len())
}

fn window_bound(raw: &Option<String>, key: &str) -> Result<Option<DateTime<Utc>>, PipelineError> {
    raw.as_deref()
        .map(|s| parse_ts(s).map_err(|e| PipelineError::Config(format!("{key}: `{s}`: {e}"))))
        .transpose()
}

fn run_filter(ctx: &Ctx) -> Result<StageOutcome, PipelineError> {
    let cfg = ctx.cfg;
    let corpus_path = cfg.resolve(&cfg.corpus.path);
    let query_path = cfg.resolve(&cfg.corpus.query_file);
    let format = match cfg.corpus.format.as_deref() {
        Some("csv") => CorpusFormat::Csv,
        Some(_) => CorpusFormat::Jsonl,
        None => CorpusFormat::from_path(&corpus_path),
    };
    let query_text = fs::read_to_string(&query_path).map_err(io_at(&query_path))?;
    let ast = parse_query(&query_text).map_err(|e| PipelineError::Input(format!("{}: {e}", query_path.display())))?;
    let raw = load_corpus(&corpus_path, format).map_err(input)?;
    let mut kept = ast.filter_corpus(&raw);
    let from = window_bound(&cfg.corpus.from, "corpus.from")?;
    let to = window_bound(&cfg.corpus.to, "corpus.to")?;
    if from.is_some() || to.is_some() {
        kept = kept
            .time_window(from.unwrap_or(DateTime::<Utc>::MIN_UTC), to.unwrap_or(DateTime::<Utc>::MAX_UTC))
            .map_err(input)?;
    }
    let out = ctx.artifact(FILTERED);
    kept.save_jsonl(&out).map_err(input)?;
    let ids = ctx.artifact(FILTERED_IDS);
    kept.export_dehydrated(&ids).map_err(input)?;
    ctx.finish(
        Stage::Filter,
        &[&corpus_path, &query_path],
        vec![out, ids],
        format!("kept {} of {} posts", kept.len(), raw.len()),
    )
}

fn topic_labels(cfg: &PipelineConfig) -> Result<BTreeMap<i32, String>, PipelineError> {
    cfg.topics
        .labels
        .iter()
        .map(|(k, v)| {
            k.parse::<i32>()
                .map(|id| (id, v.clone()))
                .map_err(|_| PipelineError::Config(format!("topics.labels key `{k}` is not a topic id")))
        })
        .collect()
}

fn run_topics(ctx: &Ctx) -> Result<StageOutcome, PipelineError> {
    let cfg = ctx.cfg;
    let t = &cfg.topics;
    let (filtered_path, corpus) = ctx.load_filtered()?;
    if corpus.is_empty() {
        return Err(PipelineError::Input("the filtered corpus is empty; nothing to cluster".into()));
    }
    let mut inputs = vec![filtered_path.clone()];
    let stopwords = match &t.stopwords {
        Some(p) => {
            let full = cfg.resolve(p);
            inputs.push(full.clone());
            StopwordList::load(&full).map_err(input)?
        }
        None => StopwordList::german(),
    };
    let docs: Vec<Vec<String>> = corpus.iter().map(|p| tokenize(&p.text)).collect();
    let vocab = build_vocabulary(&docs, &stopwords, t.min_df.unwrap_or_else(|| default_min_df(docs.len())));
    let counts = count_vectorize(&docs, &vocab);

    let e = &t.embedding;
    let provider: Box<dyn EmbeddingProvider> = match e.provider.as_str() {
        "http" => Box::new(
            HttpEmbedding::new("http", e.url.clone().unwrap_or_default(), e.dimension).map_err(PipelineError::Backend)?,
        ),
        _ => Box::new(HashEmbedding::new(e.dimension, cfg.seed)),
    };
    let vectors = embed_corpus(&corpus, provider.as_ref(), e.batch_size, e.parallelism)
        .map_err(|err| PipelineError::Backend(err.to_string()))?;
    let params = ClusterParams {
        linkage_threshold: t.linkage_threshold,
        min_cluster_size: t.min_cluster_size,
    };
    let ids = cluster_embeddings(&vectors, &params).map_err(input)?;
    let assignment = ClusterAssignment::new(&corpus, ids).map_err(input)?;
    let summaries = ctfidf_keywords(&assignment, &counts, &vocab, t.top_n).map_err(input)?;
    let labeled = assign_topic_labels(&summaries, &topic_labels(cfg)?).map_err(input)?;

    let report_path = ctx.artifact(TOPICS_CSV);
    let f = File::create(&report_path).map_err(io_at(&report_path))?;
    topics::write_topic_report(&labeled, BufWriter::new(f)).map_err(input)?;
    let assign_path = ctx.artifact(ASSIGNMENTS_CSV);
    let f = File::create(&assign_path).map_err(io_at(&assign_path))?;
    assignment.write_csv(BufWriter::new(f)).map_err(input)?;

    let outliers = assignment.topics().iter().filter(|&&x| x == topics::OUTLIER).count();
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    ctx.finish(
        Stage::Topics,
        &refs,
        vec![report_path, assign_path],
        format!("{} topics over {} posts, {} outliers", labeled.len(), corpus.len(), outliers),
    )
}

/// Prompt spec from the config's template, example and stage settings.
pub fn prompt_spec(cfg: &PipelineConfig) -> Result<(PromptSpec, Vec<PathBuf>), PipelineError> {
    let s = &cfg.stance;
    let mut inputs = Vec::new();
    let template = match &s.template {
        Some(p) => {
            let full = cfg.resolve(p);
            let text = fs::read_to_string(&full).map_err(io_at(&full))?;
            inputs.push(full.clone());
            PromptTemplate::parse(&text).map_err(|e| PipelineError::Input(format!("{}: {e}", full.display())))?
        }
        None => PromptTemplate::bundled(),
    };
    let mut spec = PromptSpec::full(template);
    if let Some(p) = &s.shots {
        let full = cfg.resolve(p);
        let f = File::open(&full).map_err(io_at(&full))?;
        spec.shots = stance::read_shots_csv(BufReader::new(f))
            .map_err(|e| PipelineError::Input(format!("{}: {e}", full.display())))?;
        inputs.push(full);
    }
    if !s.use_shots {
        spec.shots.clear();
    }
    spec.use_translation = s.translation;
    spec.use_cot = s.cot;
    Ok((spec, inputs))
}

/// Default evaluation row name, e.g. `mock 3-shot+translation+cot`.
pub fn run_name(cfg: &PipelineConfig, spec: &PromptSpec) -> String {
    if let Some(n) = &cfg.stance.run_name {
        return n.clone();
    }
    let mut parts = Vec::new();
    if !spec.shots.is_empty() {
        parts.push(format!("{}-shot", spec.shots.len()));
    }
    if spec.use_translation {
        parts.push("translation".to_string());
    }
    if spec.use_cot {
        parts.push("cot".to_string());
    }
    if parts.is_empty() {
        parts.push("base".to_string());
    }
    format!("{} {}", cfg.backend.name, parts.join("+"))
}

fn backend(cfg: &PipelineConfig, subset: &Corpus) -> Result<Box<dyn GenerationBackend>, PipelineError> {
    let b = &cfg.backend;
    Ok(match b.kind.as_str() {
        "http" => Box::new(
            HttpChatBackend::new(
                b.name.clone(),
                b.base_url.as_deref().unwrap_or_default(),
                b.model.clone().unwrap_or_default(),
                b.constrained_field.clone(),
                Duration::from_secs(b.timeout_secs),
            )
            .map_err(|e| PipelineError::Backend(e.to_string()))?,
        ),
        _ => {
            let ids: Vec<String> = subset.iter().map(|p| p.id.clone()).collect();
            let mut m = MockBackend::new(cfg.seed)
                .with_name(b.name.clone())
                .with_labels(stance::quota_labels(&ids, b.mock_weights, cfg.seed));
            if b.mock_unconstrained {
                m = m.unconstrained();
            }
            Box::new(m)
        }
    })
}

fn stance_cache_name(cfg: &PipelineConfig) -> String {
    use sha2::{Digest, Sha256};
    let key = serde_json::to_string(&(&cfg.seed, &cfg.stance, &cfg.backend)).expect("config serializes");
    let h = hex::encode(Sha256::digest(key.as_bytes()));
    format!("cache/traces.{}.jsonl", &h[..12])
}

fn run_classify(ctx: &Ctx) -> Result<StageOutcome, PipelineError> {
    let cfg = ctx.cfg;
    let (filtered_path, corpus) = ctx.load_filtered()?;
    let subset = ctx.stance_subset(&corpus);
    let (spec, mut inputs) = prompt_spec(cfg)?;
    inputs.insert(0, filtered_path);
    let backend = backend(cfg, &subset)?;
    let opts = BatchOptions {
        parallelism: cfg.backend.parallelism,
        cache_path: Some(ctx.artifact(&stance_cache_name(cfg))),
        classify: ClassifyOptions {
            retries: cfg.stance.retries,
            backoff: Duration::from_millis(cfg.stance.backoff_ms),
            temperature: cfg.stance.temperature,
            ..ClassifyOptions::default()
        },
    };
    let result = batch_classify(&subset, &spec, backend.as_ref(), &opts).map_err(input)?;

    let traces_path = ctx.artifact(TRACES);
    stance::save_traces(&traces_path, &result.traces).map_err(input)?;
    let failures_path = ctx.artifact(FAILURES);
    let mut text = String::new();
    for f in &result.failures {
        text.push_str(&serde_json::to_string(f).expect("failure record serializes"));
        text.push('\n');
    }
    fs::write(&failures_path, text).map_err(io_at(&failures_path))?;
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let fallbacks = result.traces.iter().filter(|t| t.parse_fallback).count();
    let outcome = ctx.finish(
        Stage::Classify,
        &refs,
        vec![traces_path, failures_path],
        format!(
            "{} traces ({} cached, {} parse fallbacks), {} failures",
            result.traces.len(),
            result.cached,
            fallbacks,
            result.failures.len()
        ),
    )?;
    if !result.failures.is_empty() {
        return Err(PipelineError::Backend(format!(
            "{} of {} posts failed; see {FAILURES}",
            result.failures.len(),
            subset.len()
        )));
    }
    Ok(outcome)
}

fn run_eval(ctx: &Ctx) -> Result<StageOutcome, PipelineError> {
    let cfg = ctx.cfg;
    let traces_path = ctx.require(TRACES, Stage::Classify)?;
    let (filtered_path, corpus) = ctx.load_filtered()?;
    let gold_path = cfg
        .eval
        .gold
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| PipelineError::Config("eval.gold is not set".into()))?;
    let gold = load_annotations(&gold_path, AnnotationScheme::Stance, &corpus)
        .and_then(|set| set.stance_gold())
        .map_err(input)?;
    let opts = EvalOptions {
        include_fallback: cfg.eval.include_fallback,
    };
    let (spec, _) = prompt_spec(cfg)?;
    let mut runs = vec![(run_name(cfg, &spec), traces_path.clone())];
    for extra in &cfg.eval.extra {
        runs.push((extra.name.clone(), cfg.resolve(&extra.traces)));
    }
    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    for (name, path) in &runs {
        let traces = stance::load_traces(path).map_err(input)?;
        let report = evaluate_traces(&traces, &gold, opts).map_err(|e| PipelineError::Input(format!("{name}: {e}")))?;
        reports.push((name.clone(), report));
    }
    let table = compare_reports(&reports);
    let txt = ctx.artifact(EVAL_TXT);
    fs::write(&txt, table.to_text()).map_err(io_at(&txt))?;
    let csv = ctx.artifact(EVAL_CSV);
    fs::write(&csv, table.to_csv()).map_err(io_at(&csv))?;
    let json = ctx.artifact(EVAL_JSON);
    let detail: Vec<serde_json::Value> = reports
        .iter()
        .map(|(n, r)| serde_json::json!({"name": n, "report": r}))
        .collect();
    let mut body = serde_json::to_string_pretty(&detail).expect("reports serialize");
    body.push('\n');
    fs::write(&json, body).map_err(io_at(&json))?;

    let mut inputs: Vec<&Path> = vec![&filtered_path, &gold_path];
    inputs.extend(runs.iter().map(|(_, p)| p.as_path()));
    let main = &reports[0].1;
    ctx.finish(
        Stage::Eval,
        &inputs,
        vec![txt, csv, json],
        format!(
            "{} runs; main run accuracy {:.3}, macro F1 {:.3} over {} gold posts",
            reports.len(),
            main.accuracy,
            main.f1_macro,
            main.n_scored
        ),
    )
}

fn parse_day(raw: &str, key: &str) -> Result<NaiveDate, PipelineError> {
    raw.trim()
        .parse()
        .map_err(|e| PipelineError::Config(format!("{key}: `{raw}` is not a YYYY-MM-DD date: {e}")))
}

/// Day span for the timelines: explicit `timeline.from`/`to`, else the
/// corpus window, else the days the posts cover.
pub fn timeline_span(cfg: &PipelineConfig, corpus: &Corpus, tz: &FixedOffset) -> Result<DaySpan, PipelineError> {
    let tl = &cfg.timeline;
    let from = match &tl.from {
        Some(s) => Some(parse_day(s, "timeline.from")?),
        None => window_bound(&cfg.corpus.from, "corpus.from")?.map(|t| timeline::day_of(&t, tz)),
    };
    let to = match &tl.to {
        Some(s) => Some(parse_day(s, "timeline.to")?),
        None => window_bound(&cfg.corpus.to, "corpus.to")?.map(|t| timeline::day_of(&(t - ChronoDuration::seconds(1)), tz)),
    };
    let dates: Vec<NaiveDate> = corpus.iter().map(|p| timeline::day_of(&p.created_at, tz)).collect();
    let covering = DaySpan::covering(dates.iter().copied());
    let start = match from {
        Some(d) => d,
        None => covering.as_ref().map_err(input)?.start(),
    };
    let end = match to {
        Some(d) => d,
        None => covering.as_ref().map_err(input)?.end(),
    };
    DaySpan::new(start, end).map_err(|e| PipelineError::Config(e.to_string()))
}

fn run_timeline(ctx: &Ctx) -> Result<StageOutcome, PipelineError> {
    let cfg = ctx.cfg;
    let (filtered_path, corpus) = ctx.load_filtered()?;
    let assign_path = ctx.require(ASSIGNMENTS_CSV, Stage::Topics)?;
    let traces_path = ctx.require(TRACES, Stage::Classify)?;
    let f = File::open(&assign_path).map_err(io_at(&assign_path))?;
    let assignment = ClusterAssignment::read_csv(BufReader::new(f)).map_err(input)?;
    let traces = stance::load_traces(&traces_path).map_err(input)?;

    let tz = parse_offset(&cfg.timeline.tz).map_err(|e| PipelineError::Config(e.to_string()))?;
    let subset = ctx.stance_subset(&corpus);
    let span = timeline_span(cfg, &subset, &tz)?;
    let names = topic_labels(cfg)?;

    let topic_series = timeline::topic_timeline(&subset, &assignment, &names, span, &tz).map_err(input)?;
    let stance_series = timeline::stance_timeline(&traces, &subset, span, &tz).map_err(input)?;
    let chart = |title: &str, proportions| ChartOptions {
        kind: cfg.timeline.chart_kind,
        width: cfg.timeline.width,
        height: cfg.timeline.height,
        title: title.to_string(),
        proportions,
    };
    let outputs = vec![
        ctx.artifact(TOPIC_TIMELINE_CSV),
        ctx.artifact(TOPIC_TIMELINE_SVG),
        ctx.artifact(STANCE_TIMELINE_CSV),
        ctx.artifact(STANCE_TIMELINE_SVG),
    ];
    emit_csv(&topic_series, &outputs[0]).map_err(input)?;
    emit_chart(&topic_series, &outputs[1], &chart("Posts per day by topic", false)).map_err(input)?;
    emit_csv(&stance_series, &outputs[2]).map_err(input)?;
    emit_chart(&stance_series, &outputs[3], &chart("Stance share per day", true)).map_err(input)?;

    ctx.finish(
        Stage::Timeline,
        &[&filtered_path, &assign_path, &traces_path],
        outputs,
        format!(
            "{} days, {} topic posts, {} stance traces",
            span.days(),
            topic_series.total(),
            stance_series.total()
        ),
    )
}

fn context(cfg: &PipelineConfig) -> Result<Ctx<'_>, PipelineError> {
    cfg.validate()?;
    let out = cfg.output_dir();
    fs::create_dir_all(&out).map_err(io_at(&out))?;
    Ok(Ctx {
        cfg,
        out,
        hash: cfg.hash(),
    })
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome, PipelineError> {
    let ctx = context(cfg)?;
    match stage {
        Stage::Filter => run_filter(&ctx),
        Stage::Topics => run_topics(&ctx),
        Stage::Classify => run_classify(&ctx),
        Stage::Eval => run_eval(&ctx),
        Stage::Timeline => run_timeline(&ctx),
    }
}

/// Runs every stage in order. Evaluation is skipped when no gold file is
/// configured.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageOutcome>, PipelineError> {
    let mut out = Vec::new();
    for stage in Stage::ALL {
        if stage == Stage::Eval && cfg.eval.gold.is_none() {
            log::info!("eval: skipped, no gold file configured");
            continue;
        }
        out.push(run_stage(stage, cfg)?);
    }
    Ok(out)
}
