//! Independent reference implementations and fixtures shared by the
//! integration tests. The oracles are deliberately naive.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stancescope::corpus::Post;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    crate_dir().join("fixtures").join(name)
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------- metrics

pub struct Truth {
    pub accuracy: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub balanced_accuracy: f64,
}

fn per_class_counts(gold: &[usize], pred: &[usize], c: usize) -> (f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (g, p) in gold.iter().zip(pred) {
        match (*g == c, *p == c) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Item-by-item scan over `k` classes labelled 0..k.
pub fn brute_metrics(gold: &[usize], pred: &[usize], k: usize) -> Truth {
    let n = gold.len() as f64;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64;
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0.0, 0.0, 0.0);
    let mut f1s = Vec::new();
    let mut recalls = Vec::new();
    for c in 0..k {
        let (tp, fp, fn_) = per_class_counts(gold, pred, c);
        tp_sum += tp;
        fp_sum += fp;
        fn_sum += fn_;
        let p = safe_div(tp, tp + fp);
        let r = safe_div(tp, tp + fn_);
        f1s.push(harmonic(p, r));
        if gold.contains(&c) {
            recalls.push(r);
        }
    }
    let micro_p = safe_div(tp_sum, tp_sum + fp_sum);
    let micro_r = safe_div(tp_sum, tp_sum + fn_sum);
    Truth {
        accuracy: correct / n,
        f1_micro: harmonic(micro_p, micro_r),
        f1_macro: f1s.iter().sum::<f64>() / k as f64,
        balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
    }
}

pub fn brute_kappa(a: &[usize], b: &[usize], k: usize) -> f64 {
    let n = a.len() as f64;
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut pe = 0.0;
    for c in 0..k {
        let ca = a.iter().filter(|&&x| x == c).count() as f64;
        let cb = b.iter().filter(|&&x| x == c).count() as f64;
        pe += (ca / n) * (cb / n);
    }
    if pe == 1.0 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

/// Mann-Whitney statistic over every positive/negative pair.
pub fn brute_auc(positive: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        if !positive[i] {
            continue;
        }
        for j in 0..scores.len() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// A random labelled instance: gold, prediction and a score per item.
/// Scores are drawn from a small grid half the time so ties occur.
pub struct MetricInstance {
    pub gold: Vec<usize>,
    pub pred: Vec<usize>,
    pub scores: Vec<[f64; 3]>,
}

pub fn metric_instance(rng: &mut ChaCha8Rng) -> MetricInstance {
    let n = rng.gen_range(1..=100);
    let skew = rng.gen_range(0.0..1.0);
    let coarse = rng.gen_bool(0.5);
    let mut gold = Vec::with_capacity(n);
    let mut pred = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let g = rng.gen_range(0..3);
        let p = if rng.gen::<f64>() < skew { g } else { rng.gen_range(0..3) };
        gold.push(g);
        pred.push(p);
        let mut s = [0.0; 3];
        for v in &mut s {
            *v = if coarse {
                rng.gen_range(0..5) as f64 / 4.0
            } else {
                rng.gen::<f64>()
            };
        }
        scores.push(s);
    }
    MetricInstance { gold, pred, scores }
}

// ---------------------------------------------------------------- c-TF-IDF

/// Occurrences of the space-joined `gram` as a token window of `doc`.
pub fn count_gram(doc: &[String], gram: &str) -> u64 {
    let want: Vec<&str> = gram.split(' ').collect();
    doc.windows(want.len())
        .filter(|w| w.iter().map(String::as_str).eq(want.iter().copied()))
        .count() as u64
}

/// `W(g, c)` straight from the definition, for every gram and class.
pub fn brute_ctfidf(docs: &[Vec<String>], classes: &[i32], grams: &[String]) -> BTreeMap<(i32, String), f64> {
    let class_set: BTreeSet<i32> = classes.iter().copied().collect();
    let tf = |g: &str, c: Option<i32>| -> u64 {
        docs.iter()
            .zip(classes)
            .filter(|(_, &k)| c.is_none_or(|c| c == k))
            .map(|(d, _)| count_gram(d, g))
            .sum()
    };
    let total: u64 = grams.iter().map(|g| tf(g, None)).sum();
    let a = total as f64 / class_set.len() as f64;
    let mut out = BTreeMap::new();
    for &c in &class_set {
        for g in grams {
            let t = tf(g, Some(c));
            let all = tf(g, None);
            let w = if t == 0 { 0.0 } else { t as f64 * (1.0 + a / all as f64).ln() };
            out.insert((c, g.clone()), w);
        }
    }
    out
}

// ---------------------------------------------------------------- clustering

pub fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)
}

/// Agglomerates by recomputing every cluster-pair average from the raw
/// point distances at each step, stopping once the closest pair is farther
/// than `threshold`. Returns the partition as a set of sorted index sets.
pub fn brute_partition(points: &[Vec<f64>], threshold: f64) -> BTreeSet<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut sum = 0.0;
                for &p in &clusters[i] {
                    for &q in &clusters[j] {
                        sum += brute_cosine(&points[p], &points[q]);
                    }
                }
                let d = sum / (clusters[i].len() * clusters[j].len()) as f64;
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((d, i, j)) if d <= threshold => {
                let moved = clusters.remove(j);
                clusters[i].extend(moved);
                clusters[i].sort_unstable();
            }
            _ => break,
        }
    }
    clusters.into_iter().collect()
}

/// Twelve points around three random directions in the positive octant of
/// R^4, with per-instance noise.
pub fn twelve_points(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3).map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
    let noise = rng.gen_range(0.05..0.6);
    (0..12)
        .map(|_| {
            let c = &centers[rng.gen_range(0..3)];
            c.iter().map(|x| x + rng.gen_range(-noise..noise)).collect()
        })
        .collect()
}

pub fn partition_of(labels: &[i32]) -> BTreeSet<Vec<usize>> {
    let mut by: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by.entry(l).or_default().push(i);
    }
    by.into_values().collect()
}

// ---------------------------------------------------------------- filter

fn ts() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2022, 11, 21, 18, 0, 0).unwrap()
}

fn fpost(id: &str, lang: &str, text: &str, flags: (bool, bool, bool)) -> Post {
    let mut p = Post::new(id, ts(), lang, text);
    p.is_retweet = flags.0;
    p.is_reply = flags.1;
    p.is_quote = flags.2;
    p
}

/// Twelve hand-built posts with the result of the shipped query on each,
/// worked out by hand from the query's boolean tree.
pub fn filter_truth_table() -> Vec<(Post, bool)> {
    const NO: (bool, bool, bool) = (false, false, false);
    vec![
        // FIFA and WM alternatives both hold.
        (fpost("t01", "de", "Die FIFA WM in Katar beginnt", NO), true),
        // Retweets are excluded whatever the text.
        (fpost("t02", "de", "FIFA WM", (true, false, false)), false),
        // Wrong language.
        (fpost("t03", "en", "FIFA WM", NO), false),
        // Negated term, case-insensitive.
        (fpost("t04", "de", "LIVETICKER: WM heute Abend", NO), false),
        // Fußball group with Katar.
        (fpost("t05", "de", "Fußball in Katar ist Politik", NO), true),
        // Fussball spelling with Weltmeisterschaft.
        (fpost("t06", "de", "Fussball-Weltmeisterschaft startet", NO), true),
        // Fußball without a location or tournament word.
        (fpost("t07", "de", "Fußball am Sonntag im Park", NO), false),
        // Hashtag alternative.
        (fpost("t08", "de", "#WM2022 los geht's", NO), true),
        // A longer hashtag is a different token.
        (fpost("t09", "de", "Alle zum #WM2022er Treffen", NO), false),
        // Lowercase keyword still matches.
        (fpost("t10", "de", "heute läuft die wm im tv", NO), true),
        // Replies are excluded.
        (fpost("t11", "de", "Qatar WM", (false, true, false)), false),
        // Quotes are excluded even with a hashtag.
        (fpost("t12", "de", "#FIFAWorldCup Stimmung", (false, false, true)), false),
    ]
}

// ---------------------------------------------------------------- decisions

/// Random decision text: label words in random case and position, near
/// misses, unicode noise and plain garbage.
pub fn random_decision(rng: &mut ChaCha8Rng) -> String {
    const PIECES: &[&str] = &[
        "supportive",
        "against",
        "neutral",
        "Supportive",
        "AGAINST",
        "NeUtRaL",
        "support",
        "agains",
        "neutr",
        "The tweet is",
        "label:",
        " ",
        "\n",
        "ſupportive",
        "ß",
        "🙂",
        "[/INST]",
        "'",
        "\"",
        ".",
        "Gegen",
        "dafür",
        "",
    ];
    let parts = rng.gen_range(0..8);
    let mut s = String::new();
    for _ in 0..parts {
        if rng.gen_bool(0.2) {
            let len = rng.gen_range(0..6);
            for _ in 0..len {
                s.push(char::from_u32(rng.gen_range(0x20..0x3000)).unwrap_or('?'));
            }
        } else {
            s.push_str(PIECES[rng.gen_range(0..PIECES.len())]);
        }
    }
    s
}
