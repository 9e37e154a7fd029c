use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::timeline::ChartKind;

fn default_seed() -> u64 {
    20221120
}

/// Everything a pipeline run needs. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub corpus: CorpusSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub stance: StanceSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub timeline: TimelineSection,
    pub output: OutputSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    /// `jsonl` or `csv`; guessed from the extension when absent.
    #[serde(default)]
    pub format: Option<String>,
    pub query_file: PathBuf,
    /// Inclusive lower bound, RFC 3339.
    #[serde(default)]
    pub from: Option<String>,
    /// Exclusive upper bound, RFC 3339.
    #[serde(default)]
    pub to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopicsSection {
    /// One word per line; the built-in German list when absent.
    pub stopwords: Option<PathBuf>,
    pub linkage_threshold: f64,
    pub min_cluster_size: usize,
    pub top_n: usize,
    pub min_df: Option<usize>,
    /// Manual names keyed by topic id.
    pub labels: BTreeMap<String, String>,
    pub embedding: EmbeddingSection,
}

impl Default for TopicsSection {
    fn default() -> Self {
        TopicsSection {
            stopwords: None,
            linkage_threshold: 0.5,
            min_cluster_size: 5,
            top_n: 10,
            min_df: None,
            labels: BTreeMap::new(),
            embedding: EmbeddingSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingSection {
    /// `hash` (offline) or `http`.
    pub provider: String,
    pub dimension: usize,
    pub url: Option<String>,
    pub batch_size: usize,
    pub parallelism: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            provider: "hash".into(),
            dimension: 64,
            url: None,
            batch_size: 64,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StanceSection {
    /// Prompt template file; the bundled template when absent.
    pub template: Option<PathBuf>,
    /// CSV `tweet_text,label` replacing the template's examples.
    pub shots: Option<PathBuf>,
    pub use_shots: bool,
    pub translation: bool,
    pub cot: bool,
    /// `onelove` classifies only posts that mention the focus issue,
    /// `all` classifies every filtered post.
    pub subset: String,
    pub retries: u32,
    pub backoff_ms: u64,
    pub temperature: f64,
    /// Row name in evaluation tables; derived from backend and prompt
    /// options when absent.
    pub run_name: Option<String>,
}

impl Default for StanceSection {
    fn default() -> Self {
        StanceSection {
            template: None,
            shots: None,
            use_shots: true,
            translation: true,
            cot: true,
            subset: "onelove".into(),
            retries: 3,
            backoff_ms: 500,
            temperature: 0.0,
            run_name: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    /// `mock` or `http`.
    pub kind: String,
    pub name: String,
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Request field carrying the allowed answers, e.g. `guided_choice`.
    pub constrained_field: Option<String>,
    pub parallelism: usize,
    pub timeout_secs: u64,
    /// Label shares used by the mock backend.
    pub mock_weights: [f64; 3],
    /// Mock decisions as free text rather than bare labels.
    pub mock_unconstrained: bool,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "mock".into(),
            name: "mock".into(),
            base_url: None,
            model: None,
            constrained_field: None,
            parallelism: 4,
            timeout_secs: 120,
            mock_weights: [0.6, 0.15, 0.25],
            mock_unconstrained: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraTraces {
    pub name: String,
    pub traces: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Stance gold CSV `post_id,annotator,label`.
    pub gold: Option<PathBuf>,
    pub include_fallback: bool,
    /// Further trace files to compare against the main run.
    pub extra: Vec<ExtraTraces>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimelineSection {
    /// First day, `YYYY-MM-DD`.
    pub from: Option<String>,
    /// Last day, inclusive.
    pub to: Option<String>,
    /// `UTC` or a fixed offset such as `+01:00`.
    pub tz: String,
    pub chart_kind: ChartKind,
    pub width: u32,
    pub height: u32,
}

impl Default for TimelineSection {
    fn default() -> Self {
        TimelineSection {
            from: None,
            to: None,
            tz: "UTC".into(),
            chart_kind: ChartKind::StackedArea,
            width: 900,
            height: 420,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = base;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    /// Checks value ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let t = &self.topics;
        if !(t.linkage_threshold > 0.0 && t.linkage_threshold < 1.0) {
            return bad(format!("topics.linkage_threshold must lie in (0, 1), got {}", t.linkage_threshold));
        }
        if t.min_cluster_size < 2 {
            return bad("topics.min_cluster_size must be at least 2".into());
        }
        if t.top_n == 0 {
            return bad("topics.top_n must be positive".into());
        }
        for k in t.labels.keys() {
            if k.parse::<i32>().map_or(true, |v| v < 0) {
                return bad(format!("topics.labels key `{k}` is not a topic id"));
            }
        }
        let e = &t.embedding;
        if e.dimension == 0 || e.batch_size == 0 || e.parallelism == 0 {
            return bad("topics.embedding dimension, batch_size and parallelism must be positive".into());
        }
        match e.provider.as_str() {
            "hash" => {}
            "http" if e.url.is_some() => {}
            "http" => return bad("topics.embedding.url is required for the http provider".into()),
            other => return bad(format!("unknown embedding provider `{other}`")),
        }
        if !matches!(self.stance.subset.as_str(), "onelove" | "all") {
            return bad(format!("stance.subset must be `onelove` or `all`, got `{}`", self.stance.subset));
        }
        if !(0.0..=2.0).contains(&self.stance.temperature) {
            return bad("stance.temperature must lie in [0, 2]".into());
        }
        let b = &self.backend;
        if b.parallelism == 0 {
            return bad("backend.parallelism must be at least 1".into());
        }
        match b.kind.as_str() {
            "mock" => {
                let w = b.mock_weights;
                if w.iter().any(|x| !(0.0..=1.0).contains(x)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("backend.mock_weights must be three shares summing to 1".into());
                }
            }
            "http" => {
                if b.base_url.is_none() || b.model.is_none() {
                    return bad("backend.base_url and backend.model are required for the http backend".into());
                }
            }
            other => return bad(format!("unknown backend kind `{other}`")),
        }
        if let Some(f) = &self.corpus.format {
            if !matches!(f.as_str(), "jsonl" | "csv") {
                return bad(format!("corpus.format must be `jsonl` or `csv`, got `{f}`"));
            }
        }
        let mut files: Vec<(&str, &Path)> = vec![("corpus.path", &self.corpus.path), ("corpus.query_file", &self.corpus.query_file)];
        for (k, p) in [
            ("topics.stopwords", &t.stopwords),
            ("stance.template", &self.stance.template),
            ("stance.shots", &self.stance.shots),
            ("eval.gold", &self.eval.gold),
        ] {
            if let Some(p) = p {
                files.push((k, p));
            }
        }
        for (k, p) in files {
            let full = self.resolve(p);
            if !full.is_file() {
                return bad(format!("{k}: {} does not exist", full.display()));
            }
        }
        Ok(())
    }

    /// Digest of the effective configuration. The output directory is left
    /// out so identical runs into different directories hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
