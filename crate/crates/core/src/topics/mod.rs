//! Topic discovery: embed posts, cluster the embeddings, and describe every
//! cluster by its highest-weighted n-grams.

pub mod cluster;
pub mod ctfidf;
pub mod embed;

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

pub use cluster::{cluster_embeddings, ClusterError, ClusterParams, OUTLIER};
pub use ctfidf::ClassTfIdf;
pub use embed::{embed_corpus, EmbedError, EmbeddingProvider, EmbeddingVector, HashEmbedding, HttpEmbedding};

use crate::corpus::Corpus;
use crate::textprep::{CountMatrix, NGramVocabulary};

#[derive(Debug, thiserror::Error)]
pub enum TopicError {
    #[error("{0} topic ids for {1} posts")]
    LengthMismatch(usize, usize),
    #[error("label mapping names topic {0}, which does not exist")]
    UnknownTopic(i32),
    #[error("assignment file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Topic id per post, in corpus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    post_ids: Vec<String>,
    topics: Vec<i32>,
}

impl ClusterAssignment {
    pub fn new(corpus: &Corpus, topics: Vec<i32>) -> Result<Self, TopicError> {
        if topics.len() != corpus.len() {
            return Err(TopicError::LengthMismatch(topics.len(), corpus.len()));
        }
        Ok(ClusterAssignment {
            post_ids: corpus.iter().map(|p| p.id.clone()).collect(),
            topics,
        })
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn topics(&self) -> &[i32] {
        &self.topics
    }

    pub fn post_ids(&self) -> &[String] {
        &self.post_ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i32)> {
        self.post_ids.iter().map(String::as_str).zip(self.topics.iter().copied())
    }

    pub fn lookup(&self) -> HashMap<&str, i32> {
        self.iter().collect()
    }

    /// Member count per topic id, outliers included.
    pub fn sizes(&self) -> BTreeMap<i32, usize> {
        let mut out = BTreeMap::new();
        for &t in &self.topics {
            *out.entry(t).or_insert(0) += 1;
        }
        out
    }

    /// `post_id,topic_id` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TopicError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["post_id", "topic_id"])?;
        for (id, t) in self.iter() {
            w.write_record([id, &t.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TopicError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut post_ids = Vec::new();
        let mut topics = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            if rec.len() != 2 {
                return Err(TopicError::Malformed {
                    line,
                    message: "expected post_id,topic_id".into(),
                });
            }
            let topic: i32 = rec[1].trim().parse().map_err(|_| TopicError::Malformed {
                line,
                message: format!("bad topic id `{}`", &rec[1]),
            })?;
            if topic < OUTLIER {
                return Err(TopicError::Malformed {
                    line,
                    message: format!("topic id {topic} below -1"),
                });
            }
            post_ids.push(rec[0].to_string());
            topics.push(topic);
        }
        Ok(ClusterAssignment { post_ids, topics })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub gram: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic_id: i32,
    pub size: usize,
    /// Sorted by score, best first.
    pub keywords: Vec<Keyword>,
}

/// Ranks the `top_n` keywords of every non-outlier topic. `counts` must hold
/// one row per assigned post, in assignment order.
pub fn ctfidf_keywords(
    assignment: &ClusterAssignment,
    counts: &CountMatrix,
    vocab: &NGramVocabulary,
    top_n: usize,
) -> Result<Vec<TopicSummary>, TopicError> {
    if counts.n_rows() != assignment.len() {
        return Err(TopicError::LengthMismatch(assignment.len(), counts.n_rows()));
    }
    let model = ClassTfIdf::fit(assignment.topics(), counts);
    let sizes = assignment.sizes();
    Ok(sizes
        .iter()
        .filter(|(&t, _)| t != OUTLIER)
        .map(|(&topic_id, &size)| TopicSummary {
            topic_id,
            size,
            keywords: model
                .ranked(topic_id, top_n)
                .into_iter()
                .map(|(g, score)| Keyword {
                    gram: vocab.gram(g).to_string(),
                    score,
                })
                .collect(),
        })
        .collect())
}

/// Display name for a topic without a manual label.
pub fn default_topic_name(topic_id: i32) -> String {
    if topic_id == OUTLIER {
        "other".to_string()
    } else {
        format!("topic-{topic_id}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTopic {
    pub name: String,
    #[serde(flatten)]
    pub summary: TopicSummary,
}

/// Attaches manual names to topics.
pub fn assign_topic_labels(
    summaries: &[TopicSummary],
    labels: &BTreeMap<i32, String>,
) -> Result<Vec<LabeledTopic>, TopicError> {
    for &id in labels.keys() {
        if !summaries.iter().any(|s| s.topic_id == id) {
            return Err(TopicError::UnknownTopic(id));
        }
    }
    Ok(summaries
        .iter()
        .map(|s| LabeledTopic {
            name: labels
                .get(&s.topic_id)
                .cloned()
                .unwrap_or_else(|| default_topic_name(s.topic_id)),
            summary: s.clone(),
        })
        .collect())
}

/// Name per topic id, outliers included, for timeline series.
pub fn topic_names(topics: &[LabeledTopic]) -> BTreeMap<i32, String> {
    let mut names: BTreeMap<i32, String> = topics
        .iter()
        .map(|t| (t.summary.topic_id, t.name.clone()))
        .collect();
    names.insert(OUTLIER, default_topic_name(OUTLIER));
    names
}

/// `topic_id,name,size,rank,gram,score`, one row per keyword. A topic with
/// no keywords gets a single row with empty rank, gram and score.
pub fn write_topic_report<W: Write>(topics: &[LabeledTopic], out: W) -> Result<usize, TopicError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["topic_id", "name", "size", "rank", "gram", "score"])?;
    let mut rows = 0;
    for t in topics {
        let id = t.summary.topic_id.to_string();
        let size = t.summary.size.to_string();
        if t.summary.keywords.is_empty() {
            w.write_record([id.as_str(), &t.name, &size, "", "", ""])?;
            rows += 1;
        }
        for (rank, k) in t.summary.keywords.iter().enumerate() {
            w.write_record([
                id.as_str(),
                &t.name,
                &size,
                &(rank + 1).to_string(),
                &k.gram,
                &format!("{:.6}", k.score),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_ts, Post};
    use crate::textprep::{build_vocabulary, count_vectorize, StopwordList};

    fn toy() -> (Corpus, Vec<Vec<String>>) {
        let texts = ["one love binde", "one love binde", "one love binde", "gelbe karte", "gelbe karte"];
        let at = parse_ts("2022-11-21T10:00:00Z").unwrap();
        let corpus = Corpus::from_posts(
            texts
                .iter()
                .enumerate()
                .map(|(i, t)| Post::new(i.to_string(), at, "de", *t))
                .collect(),
        )
        .unwrap();
        let docs = texts.iter().map(|t| crate::textprep::tokenize(t)).collect();
        (corpus, docs)
    }

    #[test]
    fn exclusive_grams_score_zero_elsewhere() {
        let (corpus, docs) = toy();
        let vocab = build_vocabulary(&docs, &StopwordList::empty(), 1);
        let counts = count_vectorize(&docs, &vocab);
        let assignment = ClusterAssignment::new(&corpus, vec![0, 0, 0, 1, 1]).unwrap();
        let model = ClassTfIdf::fit(assignment.topics(), &counts);
        let karte = vocab.get("karte").unwrap();
        let binde = vocab.get("one love binde").unwrap();
        assert_eq!(model.score(0, karte), 0.0);
        assert_eq!(model.score(1, binde), 0.0);
        assert!(model.score(0, binde) > 0.0);

        let summaries = ctfidf_keywords(&assignment, &counts, &vocab, 3).unwrap();
        assert_eq!(summaries.len(), 2);
        assert_eq!(summaries[0].keywords[0].gram, "one");
        assert_eq!(summaries[1].keywords[0].gram, "gelbe");
        assert!(summaries[0].keywords.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn single_class_scores_are_positive() {
        let (corpus, docs) = toy();
        let vocab = build_vocabulary(&docs, &StopwordList::empty(), 1);
        let counts = count_vectorize(&docs, &vocab);
        let assignment = ClusterAssignment::new(&corpus, vec![0; 5]).unwrap();
        let s = ctfidf_keywords(&assignment, &counts, &vocab, 100).unwrap();
        assert_eq!(s[0].keywords.len(), vocab.len());
        assert!(s[0].keywords.iter().all(|k| k.score > 0.0));
    }

    #[test]
    fn outliers_get_no_summary() {
        let (corpus, docs) = toy();
        let vocab = build_vocabulary(&docs, &StopwordList::empty(), 1);
        let counts = count_vectorize(&docs, &vocab);
        let assignment = ClusterAssignment::new(&corpus, vec![0, 0, 0, -1, -1]).unwrap();
        let s = ctfidf_keywords(&assignment, &counts, &vocab, 5).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].size, 3);
    }

    #[test]
    fn labels() {
        let summaries = vec![
            TopicSummary { topic_id: 0, size: 2, keywords: vec![] },
            TopicSummary { topic_id: 1, size: 1, keywords: vec![] },
        ];
        let plain = assign_topic_labels(&summaries, &BTreeMap::new()).unwrap();
        assert_eq!(plain[0].name, "topic-0");
        assert_eq!(plain[1].name, "topic-1");
        let named = assign_topic_labels(&summaries, &BTreeMap::from([(0, "one love".to_string())])).unwrap();
        assert_eq!(named[0].name, "one love");
        assert_eq!(named[1].name, "topic-1");
        match assign_topic_labels(&summaries, &BTreeMap::from([(99, "x".to_string())])) {
            Err(TopicError::UnknownTopic(99)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn assignment_csv_round_trip() {
        let (corpus, _) = toy();
        let a = ClusterAssignment::new(&corpus, vec![0, 0, 1, -1, 1]).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"post_id,topic_id\n0,0\n"));
        assert_eq!(ClusterAssignment::read_csv(buf.as_slice()).unwrap(), a);
        assert!(ClusterAssignment::read_csv("post_id,topic_id\n1,-2\n".as_bytes()).is_err());
        assert!(ClusterAssignment::new(&corpus, vec![0]).is_err());
    }

    #[test]
    fn report_rows() {
        let topics = vec![LabeledTopic {
            name: "one love".into(),
            summary: TopicSummary {
                topic_id: 0,
                size: 3,
                keywords: vec![Keyword { gram: "binde".into(), score: 1.5 }],
            },
        }];
        let mut buf = Vec::new();
        assert_eq!(write_topic_report(&topics, &mut buf).unwrap(), 1);
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "topic_id,name,size,rank,gram,score\n0,one love,3,1,binde,1.500000\n"
        );
    }
}
