use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use super::{Corpus, StanceLabel, TopicLabelManual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnnotationScheme {
    Stance,
    Topic,
}

impl fmt::Display for AnnotationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationScheme::Stance => "STANCE",
            AnnotationScheme::Topic => "TOPIC",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnnotationLabel {
    Stance(StanceLabel),
    Topic(TopicLabelManual),
}

impl AnnotationLabel {
    pub fn parse(raw: &str, scheme: AnnotationScheme) -> Option<Self> {
        match scheme {
            AnnotationScheme::Stance => raw.parse().ok().map(AnnotationLabel::Stance),
            AnnotationScheme::Topic => raw.parse().ok().map(AnnotationLabel::Topic),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationLabel::Stance(l) => l.as_str(),
            AnnotationLabel::Topic(l) => l.as_str(),
        }
    }

    pub fn stance(&self) -> Option<StanceLabel> {
        match self {
            AnnotationLabel::Stance(l) => Some(*l),
            AnnotationLabel::Topic(_) => None,
        }
    }
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub post_id: String,
    pub annotator_id: String,
    pub label: AnnotationLabel,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: post id `{post_id}` not found in corpus")]
    UnknownPost { line: usize, post_id: String },
    #[error("line {line}: label `{label}` is not part of the {scheme} scheme")]
    Label {
        line: usize,
        label: String,
        scheme: AnnotationScheme,
    },
    #[error("line {line}: post `{post_id}` annotated twice by `{annotator_id}`")]
    Duplicate {
        line: usize,
        post_id: String,
        annotator_id: String,
    },
    #[error("annotation set has scheme {found}, expected {expected}")]
    WrongScheme {
        expected: AnnotationScheme,
        found: AnnotationScheme,
    },
}

/// Gold labels of one scheme, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationSet {
    scheme: AnnotationScheme,
    annotations: Vec<GoldAnnotation>,
}

impl AnnotationSet {
    pub fn new(scheme: AnnotationScheme) -> Self {
        AnnotationSet {
            scheme,
            annotations: Vec::new(),
        }
    }

    pub fn scheme(&self) -> AnnotationScheme {
        self.scheme
    }

    pub fn annotations(&self) -> &[GoldAnnotation] {
        &self.annotations
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }

    /// Reads the `post_id,annotator_id,label` CSV. Every post id must
    /// resolve in `corpus` and every label must belong to `scheme`.
    pub fn read_csv<R: Read>(
        reader: R,
        scheme: AnnotationScheme,
        corpus: &Corpus,
    ) -> Result<Self, AnnotationError> {
        let mut set = AnnotationSet::new(scheme);
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| AnnotationError::Malformed {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.is_empty() {
            return Ok(set);
        }
        let names: Vec<&str> = headers.iter().map(str::trim).collect();
        if names != ["post_id", "annotator_id", "label"] {
            return Err(AnnotationError::Malformed {
                line: 1,
                message: format!("expected header `post_id,annotator_id,label`, got `{}`", names.join(",")),
            });
        }
        let mut seen = HashSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| AnnotationError::Malformed {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let post_id = rec[0].trim().to_string();
            let annotator_id = rec[1].trim().to_string();
            let raw_label = rec[2].trim();
            if !corpus.contains(&post_id) {
                return Err(AnnotationError::UnknownPost { line, post_id });
            }
            let label = AnnotationLabel::parse(raw_label, scheme).ok_or_else(|| AnnotationError::Label {
                line,
                label: raw_label.to_string(),
                scheme,
            })?;
            if !seen.insert((post_id.clone(), annotator_id.clone())) {
                return Err(AnnotationError::Duplicate {
                    line,
                    post_id,
                    annotator_id,
                });
            }
            set.annotations.push(GoldAnnotation {
                post_id,
                annotator_id,
                label,
            });
        }
        Ok(set)
    }

    /// Per-label counts over every annotation row.
    pub fn counts(&self) -> BTreeMap<AnnotationLabel, usize> {
        let mut out = BTreeMap::new();
        for a in &self.annotations {
            *out.entry(a.label).or_insert(0) += 1;
        }
        out
    }

    pub fn count(&self, label: AnnotationLabel) -> usize {
        self.annotations.iter().filter(|a| a.label == label).count()
    }

    /// Distinct annotator ids in order of first appearance.
    pub fn annotators(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.annotations
            .iter()
            .map(|a| a.annotator_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }

    /// One gold label per post: the first annotation of that post in file order.
    pub fn primary_labels(&self) -> Vec<(&str, AnnotationLabel)> {
        let mut seen = HashSet::new();
        self.annotations
            .iter()
            .filter(|a| seen.insert(a.post_id.as_str()))
            .map(|a| (a.post_id.as_str(), a.label))
            .collect()
    }

    /// Primary stance label per post id.
    pub fn stance_gold(&self) -> Result<HashMap<String, StanceLabel>, AnnotationError> {
        if self.scheme != AnnotationScheme::Stance {
            return Err(AnnotationError::WrongScheme {
                expected: AnnotationScheme::Stance,
                found: self.scheme,
            });
        }
        Ok(self
            .primary_labels()
            .into_iter()
            .filter_map(|(id, l)| l.stance().map(|s| (id.to_string(), s)))
            .collect())
    }

    /// Labels of two annotators over the posts both annotated, in the order
    /// the first annotator's rows appear.
    pub fn paired(&self, first: &str, second: &str) -> (Vec<AnnotationLabel>, Vec<AnnotationLabel>) {
        let theirs: HashMap<&str, AnnotationLabel> = self
            .annotations
            .iter()
            .filter(|a| a.annotator_id == second)
            .map(|a| (a.post_id.as_str(), a.label))
            .collect();
        self.annotations
            .iter()
            .filter(|a| a.annotator_id == first)
            .filter_map(|a| theirs.get(a.post_id.as_str()).map(|b| (a.label, *b)))
            .unzip()
    }
}

/// Loads an annotation CSV against `corpus`.
pub fn load_annotations(
    path: &Path,
    scheme: AnnotationScheme,
    corpus: &Corpus,
) -> Result<AnnotationSet, AnnotationError> {
    let file = File::open(path).map_err(|source| AnnotationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    AnnotationSet::read_csv(BufReader::new(file), scheme, corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_ts, Post};

    fn corpus(ids: &[&str]) -> Corpus {
        let at = parse_ts("2022-11-21T10:00:00Z").unwrap();
        Corpus::from_posts(ids.iter().map(|id| Post::new(*id, at, "de", "x")).collect()).unwrap()
    }

    #[test]
    fn counts_and_pairs() {
        let c = corpus(&["1", "2", "3"]);
        let data = "post_id,annotator_id,label\n1,a,SUPPORTIVE\n2,a,AGAINST\n3,a,SUPPORTIVE\n1,b,NEUTRAL\n3,b,SUPPORTIVE\n";
        let set = AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c).unwrap();
        assert_eq!(set.count(AnnotationLabel::Stance(StanceLabel::Supportive)), 3);
        assert_eq!(set.annotators(), ["a", "b"]);
        let (x, y) = set.paired("a", "b");
        assert_eq!(x.len(), 2);
        assert_eq!(y[0], AnnotationLabel::Stance(StanceLabel::Neutral));
        let gold = set.stance_gold().unwrap();
        assert_eq!(gold["1"], StanceLabel::Supportive);
        assert_eq!(gold.len(), 3);
    }

    #[test]
    fn label_outside_scheme_is_rejected() {
        let c = corpus(&["1"]);
        let data = "post_id,annotator_id,label\n1,a,maybe\n";
        let err = AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c).unwrap_err();
        assert!(matches!(err, AnnotationError::Label { line: 2, .. }));
        let data = "post_id,annotator_id,label\n1,a,GAME\n";
        assert!(AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c).is_err());
        let t = AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Topic, &c).unwrap();
        assert!(t.stance_gold().is_err());
    }

    #[test]
    fn unknown_post_and_duplicates() {
        let c = corpus(&["1"]);
        let data = "post_id,annotator_id,label\n9,a,NEUTRAL\n";
        match AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c).unwrap_err() {
            AnnotationError::UnknownPost { post_id, .. } => assert_eq!(post_id, "9"),
            other => panic!("unexpected {other:?}"),
        }
        let data = "post_id,annotator_id,label\n1,a,NEUTRAL\n1,a,AGAINST\n";
        assert!(matches!(
            AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c),
            Err(AnnotationError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn empty_inputs() {
        let c = corpus(&[]);
        for data in ["", "post_id,annotator_id,label\n"] {
            let set = AnnotationSet::read_csv(data.as_bytes(), AnnotationScheme::Stance, &c).unwrap();
            assert!(set.is_empty());
            assert!(set.counts().is_empty());
            assert_eq!(set.count(AnnotationLabel::Stance(StanceLabel::Against)), 0);
        }
    }
}
