//! Tokenization, stopword handling and 1–3-gram count vectors.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

/// The built-in German stopword list, one word per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_de.txt");

pub const MAX_NGRAM: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum StopwordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: stopword `{word}` contains whitespace")]
    Whitespace { line: usize, word: String },
}

/// Lowercase words removed before n-gram extraction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopwordList {
    words: BTreeSet<String>,
}

impl StopwordList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// One word per line. Blank lines are ignored and entries are lowercased.
    pub fn parse(text: &str) -> Result<Self, StopwordError> {
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let w = line.trim();
            if w.is_empty() {
                continue;
            }
            if w.chars().any(char::is_whitespace) {
                return Err(StopwordError::Whitespace {
                    line: i + 1,
                    word: w.to_string(),
                });
            }
            words.insert(w.to_lowercase());
        }
        Ok(StopwordList { words })
    }

    pub fn load(path: &Path) -> Result<Self, StopwordError> {
        let text = fs::read_to_string(path).map_err(|source| StopwordError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        StopwordList {
            words: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// Splits a token stream into runs that contain no stopword.
    pub fn segments<'a, S: AsRef<str>>(&self, tokens: &'a [S]) -> Vec<&'a [S]> {
        tokens
            .split(|t| self.contains(t.as_ref()))
            .filter(|s| !s.is_empty())
            .collect()
    }

    /// The built-in German list.
    pub fn german() -> Self {
        StopwordList::parse(DEFAULT_STOPWORDS).expect("built-in stopwords are valid")
    }
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.contains("://") || lower.starts_with("www.")
}

/// Lowercase word tokens with URLs dropped and `#` removed from hashtags.
/// Any non-alphanumeric character separates tokens, so `one-love` yields
/// `one` and `love`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter(|chunk| !is_url(chunk))
        .flat_map(|chunk| chunk.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Minimum document frequency used when none is configured.
pub fn default_min_df(n_docs: usize) -> usize {
    if n_docs > 1000 {
        2
    } else {
        1
    }
}

/// Mapping from n-gram (tokens joined by one space) to a contiguous column index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NGramVocabulary {
    grams: Vec<String>,
    index: HashMap<String, usize>,
}

impl NGramVocabulary {
    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn get(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    pub fn gram(&self, index: usize) -> &str {
        &self.grams[index]
    }

    pub fn grams(&self) -> &[String] {
        &self.grams
    }
}

/// Calls `f` for every 1..=MAX_NGRAM gram of every segment, shorter grams
/// first, then by position.
fn for_each_gram<S: AsRef<str>>(segments: &[&[S]], mut f: impl FnMut(String)) {
    for n in 1..=MAX_NGRAM {
        for seg in segments {
            for w in seg.windows(n) {
                let gram = w.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" ");
                f(gram);
            }
        }
    }
}

/// Collects every gram occurring in at least `min_df` documents. Stopwords
/// break the token stream, so no gram spans one. Indices follow first
/// occurrence.
pub fn build_vocabulary<S: AsRef<str>>(
    docs: &[Vec<S>],
    stopwords: &StopwordList,
    min_df: usize,
) -> NGramVocabulary {
    let min_df = min_df.max(1);
    let mut order: Vec<String> = Vec::new();
    let mut df: HashMap<String, (usize, usize)> = HashMap::new();
    for (d, doc) in docs.iter().enumerate() {
        let segments = stopwords.segments(doc);
        for_each_gram(&segments, |gram| match df.get_mut(&gram) {
            Some((count, last)) => {
                if *last != d {
                    *count += 1;
                    *last = d;
                }
            }
            None => {
                df.insert(gram.clone(), (1, d));
                order.push(gram);
            }
        });
    }
    let grams: Vec<String> = order.into_iter().filter(|g| df[g].0 >= min_df).collect();
    let index = grams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
    NGramVocabulary { grams, index }
}

/// Sparse document-by-gram counts. Each row is sorted by column and stores
/// only non-zero counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountMatrix {
    n_cols: usize,
    rows: Vec<Vec<(usize, u32)>>,
}

impl CountMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[(usize, u32)] {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[Vec<(usize, u32)>] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.rows[r]
            .binary_search_by_key(&c, |&(col, _)| col)
            .map(|i| self.rows[r][i].1)
            .unwrap_or(0)
    }
}

/// Counts every vocabulary gram in every document. Windows covering a
/// stopword are never in the vocabulary, so counting runs over the raw
/// token stream.
pub fn count_vectorize<S: AsRef<str>>(docs: &[Vec<S>], vocab: &NGramVocabulary) -> CountMatrix {
    let rows = docs
        .iter()
        .map(|doc| {
            let mut counts: HashMap<usize, u32> = HashMap::new();
            for_each_gram(&[doc.as_slice()], |gram| {
                if let Some(c) = vocab.get(&gram) {
                    *counts.entry(c).or_insert(0) += 1;
                }
            });
            let mut row: Vec<(usize, u32)> = counts.into_iter().collect();
            row.sort_unstable();
            row
        })
        .collect();
    CountMatrix {
        n_cols: vocab.len(),
        rows,
    }
}
