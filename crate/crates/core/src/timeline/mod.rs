//! Per-day aggregation of topic and stance labels, with CSV and SVG output.

mod svg;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, Utc};

pub use svg::{emit_chart, render_svg, ChartKind, ChartOptions};

use crate::corpus::{Corpus, StanceLabel};
use crate::stance::ClassificationTrace;
use crate::topics::{default_topic_name, ClusterAssignment, OUTLIER};

#[derive(Debug, thiserror::Error)]
pub enum TimelineError {
    #[error("span end {end} is before start {start}")]
    BadSpan { start: NaiveDate, end: NaiveDate },
    #[error("post {id} on {date} falls outside the span {start} to {end}")]
    OutsideSpan {
        id: String,
        date: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },
    #[error("post {0} has no topic assignment")]
    Unassigned(String),
    #[error("trace for post {0} does not match any corpus post")]
    UnknownPost(String),
    #[error("no data to derive a span from")]
    NoData,
    #[error("timeline is empty")]
    Empty,
    #[error("bad timezone offset `{0}`; use UTC or a fixed offset like +01:00")]
    BadOffset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaySpan {
    start: NaiveDate,
    end: NaiveDate,
}

impl DaySpan {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, TimelineError> {
        if end < start {
            return Err(TimelineError::BadSpan { start, end });
        }
        Ok(DaySpan { start, end })
    }

    /// The smallest span holding every date.
    pub fn covering<I: IntoIterator<Item = NaiveDate>>(dates: I) -> Result<Self, TimelineError> {
        let mut it = dates.into_iter();
        let first = it.next().ok_or(TimelineError::NoData)?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
        DaySpan::new(lo, hi)
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.end
    }

    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> {
        let start = self.start;
        (0..self.days()).map(move |i| start + Duration::days(i as i64))
    }
}

/// Parses `UTC`, `Z` or a fixed offset such as `+01:00` / `-0330`.
pub fn parse_offset(raw: &str) -> Result<FixedOffset, TimelineError> {
    let s = raw.trim();
    let bad = || TimelineError::BadOffset(raw.to_string());
    if s.eq_ignore_ascii_case("utc") || s == "Z" {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') => (1, &s[1..]),
        Some(b'-') => (-1, &s[1..]),
        _ => return Err(bad()),
    };
    let digits: String = rest.chars().filter(|&c| c != ':').collect();
    if digits.len() != 4 || !digits.bytes().all(|b| b.is_ascii_digit()) || rest.len() > 5 {
        return Err(bad());
    }
    let h: i32 = digits[..2].parse().map_err(|_| bad())?;
    let m: i32 = digits[2..].parse().map_err(|_| bad())?;
    if h > 23 || m > 59 {
        return Err(bad());
    }
    FixedOffset::east_opt(sign * (h * 3600 + m * 60)).ok_or_else(bad)
}

/// Calendar day of an instant at a fixed offset.
pub fn day_of(ts: &DateTime<Utc>, tz: &FixedOffset) -> NaiveDate {
    ts.with_timezone(tz).date_naive()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DayBucket {
    pub date: NaiveDate,
    pub counts: BTreeMap<String, u64>,
}

impl DayBucket {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Share of `key` in this day; 0 on an empty day.
    pub fn proportion(&self, key: &str) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.counts.get(key).copied().unwrap_or(0) as f64 / total as f64
        }
    }
}

/// One bucket per day of the span, each holding every series key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineSeries {
    keys: Vec<String>,
    buckets: Vec<DayBucket>,
}

impl TimelineSeries {
    /// Counts `(instant, key)` events per day. `keys` lists series that
    /// appear even when they never occur; keys seen only in events are
    /// added. The `id` of each event is used in error messages.
    pub fn from_events<'a, I>(events: I, keys: &[String], span: DaySpan, tz: &FixedOffset) -> Result<Self, TimelineError>
    where
        I: IntoIterator<Item = (&'a str, DateTime<Utc>, String)>,
    {
        let mut key_set: BTreeSet<String> = keys.iter().cloned().collect();
        let mut counts: Vec<HashMap<String, u64>> = vec![HashMap::new(); span.days()];
        for (id, ts, key) in events {
            let date = day_of(&ts, tz);
            if !span.contains(date) {
                return Err(TimelineError::OutsideSpan {
                    id: id.to_string(),
                    date,
                    start: span.start,
                    end: span.end,
                });
            }
            let i = (date - span.start).num_days() as usize;
            *counts[i].entry(key.clone()).or_insert(0) += 1;
            key_set.insert(key);
        }
        let keys: Vec<String> = key_set.into_iter().collect();
        let buckets = span
            .iter()
            .zip(counts)
            .map(|(date, c)| DayBucket {
                date,
                counts: keys.iter().map(|k| (k.clone(), c.get(k).copied().unwrap_or(0))).collect(),
            })
            .collect();
        Ok(TimelineSeries { keys, buckets })
    }

    /// Series keys, sorted.
    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn buckets(&self) -> &[DayBucket] {
        &self.buckets
    }

    pub fn total(&self) -> u64 {
        self.buckets.iter().map(DayBucket::total).sum()
    }

    pub fn series_total(&self, key: &str) -> u64 {
        self.buckets.iter().map(|b| b.counts.get(key).copied().unwrap_or(0)).sum()
    }

    /// Overall share of each key across the whole span.
    pub fn overall_proportions(&self) -> BTreeMap<String, f64> {
        let total = self.total();
        self.keys
            .iter()
            .map(|k| {
                let p = if total == 0 { 0.0 } else { self.series_total(k) as f64 / total as f64 };
                (k.clone(), p)
            })
            .collect()
    }

    /// Long-format CSV `date,series,count,proportion`. Returns the number
    /// of data rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<usize> {
        writeln!(out, "date,series,count,proportion")?;
        let mut rows = 0;
        for b in &self.buckets {
            for (k, c) in &b.counts {
                writeln!(out, "{},{},{},{:.6}", b.date, csv_cell(k), c, b.proportion(k))?;
                rows += 1;
            }
        }
        out.flush()?;
        Ok(rows)
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn emit_csv(series: &TimelineSeries, path: &Path) -> Result<usize, TimelineError> {
    let io_err = |source| TimelineError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    series.write_csv(BufWriter::new(file)).map_err(io_err)
}

/// Posts per day and topic name. The outlier topic appears as `other`
/// unless `names` says otherwise.
pub fn topic_timeline(
    corpus: &Corpus,
    assignment: &ClusterAssignment,
    names: &BTreeMap<i32, String>,
    span: DaySpan,
    tz: &FixedOffset,
) -> Result<TimelineSeries, TimelineError> {
    let lookup = assignment.lookup();
    let name = |t: i32| names.get(&t).cloned().unwrap_or_else(|| default_topic_name(t));
    let mut keys: Vec<String> = names.values().cloned().collect();
    if lookup.values().any(|&t| t == OUTLIER) {
        keys.push(name(OUTLIER));
    }
    let events = corpus
        .iter()
        .map(|p| {
            let t = *lookup.get(p.id.as_str()).ok_or_else(|| TimelineError::Unassigned(p.id.clone()))?;
            Ok((p.id.as_str(), p.created_at, name(t)))
        })
        .collect::<Result<Vec<_>, TimelineError>>()?;
    TimelineSeries::from_events(events, &keys, span, tz)
}

/// Traces per day and stance label, dated by their corpus post.
pub fn stance_timeline(
    traces: &[ClassificationTrace],
    corpus: &Corpus,
    span: DaySpan,
    tz: &FixedOffset,
) -> Result<TimelineSeries, TimelineError> {
    let keys: Vec<String> = StanceLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
    let events = traces
        .iter()
        .map(|t| {
            let p = corpus.get(&t.post_id).ok_or_else(|| TimelineError::UnknownPost(t.post_id.clone()))?;
            Ok((p.id.as_str(), p.created_at, t.label.as_str().to_string()))
        })
        .collect::<Result<Vec<_>, TimelineError>>()?;
    TimelineSeries::from_events(events, &keys, span, tz)
}
