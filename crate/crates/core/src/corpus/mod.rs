//! Post archives: loading, validation, subsetting and export, plus the gold
//! annotation sets attached to them.

mod annotations;
mod post;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde_json::{Map, Value};

pub use annotations::{load_annotations, AnnotationError, AnnotationLabel, AnnotationScheme, AnnotationSet, GoldAnnotation};
pub use post::{Post, StanceLabel, TopicLabelManual, UnknownLabel};
pub(crate) use post::{de_ts, format_ts, parse_ts, ser_ts, valid_lang};

const FLAG_FIELDS: [&str; 3] = ["is_retweet", "is_reply", "is_quote"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("duplicate post id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("invalid time window: from {from} is after to {to}")]
    InvalidWindow { from: String, to: String },
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn field(line: usize, field: &str, message: impl Into<String>) -> Self {
        CorpusError::Malformed {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// On-disk corpus encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Picks the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

/// An immutable, id-indexed sequence of posts in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids. Errors report the 1-based
    /// position of the duplicate.
    pub fn from_posts(posts: Vec<Post>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(posts.len());
        for (i, p) in posts.iter().enumerate() {
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: p.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Corpus { posts, index })
    }

    fn from_unique(posts: Vec<Post>) -> Self {
        let index = posts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Corpus { posts, index }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Post> {
        self.posts.iter()
    }

    pub fn get(&self, id: &str) -> Option<&Post> {
        self.index.get(id).map(|&i| &self.posts[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Keeps the posts matching `keep`, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(&Post) -> bool) -> Corpus {
        Corpus::from_unique(self.posts.iter().filter(|p| keep(p)).cloned().collect())
    }

    /// Posts whose text mentions the focus issue under one of its spelling
    /// variants: `onelove`, `one-love` or `one love`, case-insensitively and
    /// also inside hashtags. The spaced variant needs exactly one whitespace
    /// character between the words.
    pub fn select_onelove_subset(&self) -> Corpus {
        self.filter(|p| mentions_onelove(&p.text))
    }

    /// Posts with `from <= created_at < to`.
    pub fn time_window(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Corpus, CorpusError> {
        if from > to {
            return Err(CorpusError::InvalidWindow {
                from: format_ts(&from),
                to: format_ts(&to),
            });
        }
        Ok(self.filter(|p| p.created_at >= from && p.created_at < to))
    }

    /// Writes one post id per line (LF-terminated, UTF-8) in corpus order.
    pub fn write_dehydrated<W: Write>(&self, mut out: W) -> io::Result<usize> {
        for p in &self.posts {
            out.write_all(p.id.as_bytes())?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(self.posts.len())
    }

    pub fn export_dehydrated(&self, path: &Path) -> Result<usize, CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        self.write_dehydrated(BufWriter::new(file))
            .map_err(|e| CorpusError::io(path, e))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for p in &self.posts {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| CorpusError::io(path, e))?;
        self.write_jsonl(BufWriter::new(file))
            .map_err(|e| CorpusError::io(path, e))
    }

    /// Parses the project JSONL format, one object per line. Blank lines are
    /// skipped. A flag field may be missing only if no record carries it.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
        let mut records: Vec<(usize, Map<String, Value>)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Value>(&line) {
                Ok(Value::Object(map)) => records.push((line_no, map)),
                Ok(_) => {
                    return Err(CorpusError::MalformedRecord {
                        line: line_no,
                        message: "expected a JSON object".into(),
                    })
                }
                Err(e) => {
                    return Err(CorpusError::MalformedRecord {
                        line: line_no,
                        message: e.to_string(),
                    })
                }
            }
        }

        let present = FLAG_FIELDS.map(|f| records.iter().any(|(_, m)| m.contains_key(f)));
        for (flag, seen) in FLAG_FIELDS.iter().zip(present) {
            if !seen && !records.is_empty() {
                log::warn!("field `{flag}` absent from every record; defaulting to false");
            }
        }

        let mut posts = Vec::with_capacity(records.len());
        let mut lines = Vec::with_capacity(records.len());
        for (line, map) in &records {
            let text_field = |name: &str| -> Result<String, CorpusError> {
                match map.get(name) {
                    Some(Value::String(s)) => Ok(s.clone()),
                    Some(_) => Err(CorpusError::field(*line, name, "expected a string")),
                    None => Err(CorpusError::field(*line, name, "missing")),
                }
            };
            let mut flags = [false; 3];
            for (k, flag) in FLAG_FIELDS.iter().enumerate() {
                flags[k] = match map.get(*flag) {
                    Some(Value::Bool(b)) => *b,
                    Some(_) => return Err(CorpusError::field(*line, flag, "expected a boolean")),
                    None if present[k] => return Err(CorpusError::field(*line, flag, "missing")),
                    None => false,
                };
            }
            let post = build_post(
                *line,
                text_field("id")?,
                &text_field("created_at")?,
                text_field("lang")?,
                text_field("text")?,
                flags,
            )?;
            posts.push(post);
            lines.push(*line);
        }
        from_posts_with_lines(posts, &lines)
    }

    /// Parses a CSV archive with a header naming the post fields. Flag
    /// columns are optional as a whole.
    pub fn read_csv<R: Read>(reader: R) -> Result<Corpus, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CorpusError::MalformedRecord {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let mut required = [0usize; 4];
        for (slot, name) in required.iter_mut().zip(["id", "created_at", "lang", "text"]) {
            *slot = col(name).ok_or_else(|| CorpusError::field(1, name, "column missing from header"))?;
        }
        let flag_cols = FLAG_FIELDS.map(col);
        for (flag, c) in FLAG_FIELDS.iter().zip(flag_cols) {
            if c.is_none() {
                log::warn!("column `{flag}` absent; defaulting to false");
            }
        }

        let mut posts = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CorpusError::MalformedRecord {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                message: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let get = |i: usize, name: &str| {
                rec.get(i)
                    .map(str::to_string)
                    .ok_or_else(|| CorpusError::field(line, name, "missing"))
            };
            let mut flags = [false; 3];
            for (k, flag) in FLAG_FIELDS.iter().enumerate() {
                if let Some(c) = flag_cols[k] {
                    let raw = get(c, flag)?;
                    flags[k] = parse_bool(&raw)
                        .ok_or_else(|| CorpusError::field(line, flag, format!("expected a boolean, got `{raw}`")))?;
                }
            }
            let post = build_post(
                line,
                get(required[0], "id")?,
                &get(required[1], "created_at")?,
                get(required[2], "lang")?,
                get(required[3], "text")?,
                flags,
            )?;
            posts.push(post);
            lines.push(line);
        }
        from_posts_with_lines(posts, &lines)
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Post;
    type IntoIter = std::slice::Iter<'a, Post>;

    fn into_iter(self) -> Self::IntoIter {
        self.posts.iter()
    }
}

fn from_posts_with_lines(posts: Vec<Post>, lines: &[usize]) -> Result<Corpus, CorpusError> {
    Corpus::from_posts(posts).map_err(|e| match e {
        CorpusError::DuplicateId { id, line } => CorpusError::DuplicateId {
            id,
            line: lines[line - 1],
        },
        other => other,
    })
}

fn build_post(
    line: usize,
    id: String,
    created_at: &str,
    lang: String,
    text: String,
    flags: [bool; 3],
) -> Result<Post, CorpusError> {
    if id.trim().is_empty() {
        return Err(CorpusError::field(line, "id", "must be non-empty"));
    }
    let created_at = parse_ts(created_at)
        .map_err(|e| CorpusError::field(line, "created_at", format!("`{created_at}`: {e}")))?;
    if !post::valid_lang(&lang) {
        return Err(CorpusError::field(
            line,
            "lang",
            format!("`{lang}` is not a lowercase two-letter code"),
        ));
    }
    Ok(Post {
        id,
        created_at,
        lang,
        text,
        is_retweet: flags[0],
        is_reply: flags[1],
        is_quote: flags[2],
    })
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

/// Loads a corpus file in the given format.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    match format {
        CorpusFormat::Jsonl => Corpus::read_jsonl(BufReader::new(file)),
        CorpusFormat::Csv => Corpus::read_csv(BufReader::new(file)),
    }
}

pub(crate) fn mentions_onelove(text: &str) -> bool {
    let folded = crate::text::fold(&crate::text::normalize_whitespace(text));
    ["onelove", "one-love", "one love"]
        .iter()
        .any(|v| folded.contains(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_ts(s).unwrap()
    }

    fn post(id: &str, at: &str, text: &str) -> Post {
        Post::new(id, ts(at), "de", text)
    }

    const ROW: &str = r#"{"id":"1","created_at":"2022-11-21T18:00:00Z","lang":"de","text":"a","is_retweet":false,"is_reply":false,"is_quote":false}"#;

    #[test]
    fn three_rows_load() {
        let data = [ROW, &ROW.replace("\"1\"", "\"2\""), &ROW.replace("\"1\"", "\"3\"")].join("\n");
        let c = Corpus::read_jsonl(data.as_bytes()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.posts()[2].id, "3");
    }

    #[test]
    fn duplicate_id_is_named() {
        let row = ROW.replace("\"1\"", "\"42\"");
        let data = format!("{row}\n{ROW}\n{row}\n");
        let err = Corpus::read_jsonl(data.as_bytes()).unwrap_err();
        match &err {
            CorpusError::DuplicateId { id, line } => {
                assert_eq!(id, "42");
                assert_eq!(*line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("42"));
    }

    #[test]
    fn malformed_field_names_line_and_field() {
        let bad = ROW.replace("2022-11-21T18:00:00Z", "yesterday");
        let data = format!("{ROW}\n{}\n", bad.replace("\"1\"", "\"2\""));
        let err = Corpus::read_jsonl(data.as_bytes()).unwrap_err();
        match err {
            CorpusError::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "created_at");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_lang = ROW.replace("\"de\"", "\"DE\"");
        assert!(matches!(
            Corpus::read_jsonl(bad_lang.as_bytes()),
            Err(CorpusError::Malformed { field, .. }) if field == "lang"
        ));
        let no_text = r#"{"id":"1","created_at":"2022-11-21T18:00:00Z","lang":"de"}"#;
        assert!(matches!(
            Corpus::read_jsonl(no_text.as_bytes()),
            Err(CorpusError::Malformed { field, .. }) if field == "text"
        ));
        assert!(matches!(
            Corpus::read_jsonl("[1,2]".as_bytes()),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn flags_default_only_when_absent_everywhere() {
        let bare = r#"{"id":"1","created_at":"2022-11-21T18:00:00Z","lang":"de","text":"a"}"#;
        let c = Corpus::read_jsonl(bare.as_bytes()).unwrap();
        assert!(!c.posts()[0].is_retweet);

        let data = format!("{ROW}\n{}\n", bare.replace("\"1\"", "\"2\""));
        match Corpus::read_jsonl(data.as_bytes()).unwrap_err() {
            CorpusError::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "is_retweet");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_loads_with_and_without_flags() {
        let data = "id,created_at,lang,text,is_retweet,is_reply,is_quote\n\
                    1,2022-11-21T18:00:00Z,de,\"Hallo, WM\",true,0,FALSE\n";
        let c = Corpus::read_csv(data.as_bytes()).unwrap();
        assert_eq!(c.posts()[0].text, "Hallo, WM");
        assert!(c.posts()[0].is_retweet);
        assert!(!c.posts()[0].is_reply);

        let data = "id,created_at,lang,text\n1,2022-11-21T18:00:00Z,de,x\n2,2022-11-22T18:00:00Z,de,y\n";
        assert_eq!(Corpus::read_csv(data.as_bytes()).unwrap().len(), 2);

        let data = "id,created_at,lang,text,is_retweet\n1,2022-11-21T18:00:00Z,de,x,maybe\n";
        assert!(matches!(
            Corpus::read_csv(data.as_bytes()),
            Err(CorpusError::Malformed { line: 2, field, .. }) if field == "is_retweet"
        ));
    }

    #[test]
    fn onelove_variants() {
        assert!(mentions_onelove("Die #OneLove Binde ist wichtig"));
        assert!(mentions_onelove("ONE-LOVE verboten!"));
        assert!(mentions_onelove("one love"));
        assert!(mentions_onelove("one\u{a0}love"));
        assert!(!mentions_onelove("one    love"));
        assert!(!mentions_onelove("Liebe ist alles"));
        assert!(mentions_onelove("#OneLoveBinde"));
    }

    #[test]
    fn windows() {
        let c = Corpus::from_posts(vec![
            post("a", "2022-11-20T10:00:00Z", ""),
            post("b", "2022-11-21T00:00:00Z", ""),
            post("c", "2022-11-21T23:59:59Z", ""),
            post("d", "2022-11-22T00:00:00Z", ""),
        ])
        .unwrap();
        let day = c
            .time_window(ts("2022-11-21T00:00:00Z"), ts("2022-11-22T00:00:00Z"))
            .unwrap();
        let ids: Vec<_> = day.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        let t = ts("2022-11-21T00:00:00Z");
        assert!(c.time_window(t, t).unwrap().is_empty());
        assert!(matches!(
            c.time_window(ts("2022-11-22T00:00:00Z"), t),
            Err(CorpusError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn dehydrated_export() {
        let c = Corpus::from_posts(vec![
            post("3", "2022-11-20T10:00:00Z", ""),
            post("1", "2022-11-20T10:00:00Z", ""),
            post("2", "2022-11-20T10:00:00Z", ""),
        ])
        .unwrap();
        let mut buf = Vec::new();
        assert_eq!(c.write_dehydrated(&mut buf).unwrap(), 3);
        assert_eq!(buf, b"3\n1\n2\n");

        let mut buf = Vec::new();
        assert_eq!(Corpus::default().write_dehydrated(&mut buf).unwrap(), 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn export_to_missing_dir_names_path() {
        let err = Corpus::default()
            .export_dehydrated(Path::new("/nonexistent/dir/ids.txt"))
            .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/ids.txt"));
    }
}
