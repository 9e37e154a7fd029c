//! Property tests for the module invariants.

mod common;

use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;

use common::*;
use stancescope::corpus::Post;
use stancescope::evalmetrics::{cohen_kappa, confusion, roc_auc, scores};
use stancescope::filterlang::{eval_query, parse_query, print_query, FieldPredicate, PostFlag, QueryAst};
use stancescope::stance::{
    classify_post, ClassifyOptions, MockBackend, PromptSpec, PromptTemplate, PromptVariant,
};
use stancescope::textprep::{build_vocabulary, count_vectorize, StopwordList};
use stancescope::timeline::{parse_offset, DaySpan, TimelineSeries};
use stancescope::topics::{cluster_embeddings, ClusterParams};
use stancescope::{Corpus, StanceLabel};

// Words shared by generated queries and generated posts, so matches happen.
const WORDS: &[&str] = &["fifa", "WM", "Katar", "qatar", "binde", "love", "one", "Fußball", "fussball"];

fn atom() -> impl Strategy<Value = QueryAst> {
    prop_oneof![
        4 => prop::sample::select(WORDS).prop_map(|w| QueryAst::Term(w.to_string())),
        1 => "[a-zA-Z][a-zA-Z0-9]{0,5}"
            .prop_filter("OR is the operator", |s| s != "OR")
            .prop_map(QueryAst::Term),
        2 => prop::sample::select(&["WM2022", "onelove", "FIFAWorldCup"][..]).prop_map(|w| QueryAst::Hashtag(w.to_string())),
        1 => prop::sample::select(&["de", "en"][..]).prop_map(|l| QueryAst::Field(FieldPredicate::Lang(l.to_string()))),
        1 => prop::sample::select(&[PostFlag::Retweet, PostFlag::Reply, PostFlag::Quote][..])
            .prop_map(|f| QueryAst::Field(FieldPredicate::Is(f))),
    ]
}

fn query() -> impl Strategy<Value = QueryAst> {
    atom().prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(QueryAst::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(QueryAst::And),
            prop::collection::vec(inner, 2..4).prop_map(QueryAst::Or),
        ]
    })
}

fn post() -> impl Strategy<Value = Post> {
    let word = prop_oneof![
        prop::sample::select(WORDS).prop_map(str::to_string),
        prop::sample::select(&["#WM2022", "#onelove", "#fifaworldcup", "und", "die", "!"][..]).prop_map(str::to_string),
    ];
    (
        prop::collection::vec(word, 0..8),
        prop::sample::select(&["de", "en"][..]),
        any::<(bool, bool, bool)>(),
    )
        .prop_map(|(words, lang, flags)| {
            let mut p = Post::new("1", Utc.with_ymd_and_hms(2022, 11, 21, 0, 0, 0).unwrap(), lang, words.join(" "));
            (p.is_retweet, p.is_reply, p.is_quote) = flags;
            p
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_print_parse_is_a_fixed_point(ast in query()) {
        let once = parse_query(&print_query(&ast)).expect("printed query parses");
        let twice = parse_query(&print_query(&once)).expect("reprinted query parses");
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.validate().is_ok());
    }

    #[test]
    fn printing_preserves_meaning(ast in query(), p in post()) {
        let back = parse_query(&print_query(&ast)).unwrap();
        prop_assert_eq!(eval_query(&ast, &p), eval_query(&back, &p));
    }

    #[test]
    fn de_morgan(a in query(), b in query(), p in post()) {
        let lhs = QueryAst::not(QueryAst::And(vec![a.clone(), b.clone()]));
        let rhs = QueryAst::Or(vec![QueryAst::not(a), QueryAst::not(b)]);
        prop_assert_eq!(eval_query(&lhs, &p), eval_query(&rhs, &p));
    }

    #[test]
    fn flagged_posts_fail_the_shipped_query(mut p in post(), which in 0..3usize) {
        let q = parse_query(&read(&crate_dir().join("queries/worldcup_de.txt"))).unwrap();
        match which {
            0 => p.is_retweet = true,
            1 => p.is_reply = true,
            _ => p.is_quote = true,
        }
        prop_assert!(!eval_query(&q, &p));
    }

    #[test]
    fn ngram_totals(docs in prop::collection::vec(prop::collection::vec(prop::sample::select(&["a", "b", "c", "und", "die", "d"][..]), 0..12), 1..6)) {
        let stop = StopwordList::from_words(["und", "die"]);
        let docs: Vec<Vec<String>> = docs.into_iter().map(|d| d.into_iter().map(str::to_string).collect()).collect();
        let vocab = build_vocabulary(&docs, &stop, 1);
        for g in vocab.grams() {
            prop_assert!(g.split(' ').all(|t| !stop.contains(t)), "gram `{}` spans a stopword", g);
        }
        let counts = count_vectorize(&docs, &vocab);
        for (r, doc) in docs.iter().enumerate() {
            let seg_lens: Vec<usize> = doc
                .split(|t| stop.contains(t))
                .map(<[String]>::len)
                .collect();
            let mut by_n = [0u64; 3];
            for &(col, n) in counts.row(r) {
                by_n[vocab.gram(col).split(' ').count() - 1] += n as u64;
            }
            for (n, got) in by_n.iter().enumerate() {
                let want: usize = seg_lens.iter().map(|l| l.saturating_sub(n)).sum();
                prop_assert_eq!(*got, want as u64, "{}-grams of doc {}", n + 1, r);
            }
        }
    }

    #[test]
    fn vocabulary_is_deterministic(docs in prop::collection::vec(prop::collection::vec("[a-d]", 0..8), 1..5)) {
        let a = build_vocabulary(&docs, &StopwordList::empty(), 1);
        let b = build_vocabulary(&docs, &StopwordList::empty(), 1);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn clustering_matches_oracle(seed in any::<u64>(), n_threshold in 1..40u32) {
        let threshold = n_threshold as f64 / 100.0;
        let points = twelve_points(seed);
        let labels = cluster_embeddings(&points, &ClusterParams { linkage_threshold: threshold, min_cluster_size: 2 }).unwrap();
        let oracle: BTreeSet<Vec<usize>> = brute_partition(&points, threshold).into_iter().filter(|g| g.len() >= 2).collect();
        let got: BTreeSet<Vec<usize>> = partition_of(&labels)
            .into_iter()
            .filter(|g| labels[g[0]] >= 0)
            .collect();
        prop_assert_eq!(got, oracle);
    }

    #[test]
    fn clustering_ignores_input_order(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let points = twelve_points(seed);
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let params = ClusterParams { linkage_threshold: 0.1, min_cluster_size: 2 };
        let a = cluster_embeddings(&points, &params).unwrap();
        let b = cluster_embeddings(&shuffled, &params).unwrap();
        prop_assert_eq!(a.len(), points.len());
        // Map the shuffled result back to original indices before comparing.
        let mut back = vec![0i32; b.len()];
        for (pos, &orig) in order.iter().enumerate() {
            back[orig] = b[pos];
        }
        let sets = |l: &[i32]| -> BTreeSet<Vec<usize>> {
            partition_of(l).into_iter().filter(|g| l[g[0]] >= 0).collect()
        };
        prop_assert_eq!(sets(&a), sets(&back));
    }

    #[test]
    fn micro_f1_equals_accuracy(pairs in prop::collection::vec((0..3usize, 0..3usize), 1..100)) {
        let (g, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let s = scores(&confusion(&g, &p, &[0, 1, 2]).unwrap()).unwrap();
        prop_assert_eq!(s.f1_micro, s.accuracy);
        let t = brute_metrics(&g, &p, 3);
        prop_assert!((s.f1_macro - t.f1_macro).abs() <= 1e-12);
        prop_assert!((s.balanced_accuracy - t.balanced_accuracy).abs() <= 1e-12);
    }

    #[test]
    fn kappa_is_symmetric(pairs in prop::collection::vec((0..3usize, 0..3usize), 1..100)) {
        let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let ab = cohen_kappa(&a, &b).unwrap().kappa;
        let ba = cohen_kappa(&b, &a).unwrap().kappa;
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((ab - brute_kappa(&a, &b, 3)).abs() <= 1e-12);
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap().kappa, 1.0);
    }

    #[test]
    fn auc_of_negated_scores(items in prop::collection::btree_map(0u32..100_000, any::<bool>(), 2..60)) {
        let pos: Vec<bool> = items.values().copied().collect();
        prop_assume!(pos.contains(&true) && pos.contains(&false));
        let s: Vec<f64> = items.keys().map(|&k| k as f64 / 7.0).collect();
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        let a = roc_auc(&pos, &s).unwrap();
        prop_assert!((a - brute_auc(&pos, &s)).abs() <= 1e-12);
        prop_assert!((roc_auc(&pos, &neg).unwrap() - (1.0 - a)).abs() <= 1e-12);
    }

    #[test]
    fn timeline_conserves_and_normalises(
        offsets in prop::collection::vec((0i64..10 * 24 * 60, 0..3usize), 0..80),
        tz in prop::sample::select(&["UTC", "+01:00", "-05:30"][..]),
    ) {
        let tz = parse_offset(tz).unwrap();
        let base = Utc.with_ymd_and_hms(2022, 11, 20, 0, 0, 0).unwrap();
        let ids: Vec<String> = (0..offsets.len()).map(|i| i.to_string()).collect();
        let events: Vec<(&str, chrono::DateTime<Utc>, String)> = offsets
            .iter()
            .zip(&ids)
            .map(|(&(m, k), id)| (id.as_str(), base + Duration::minutes(m), StanceLabel::ALL[k].as_str().to_string()))
            .collect();
        let start = "2022-11-19".parse().unwrap();
        let end = "2022-11-30".parse().unwrap();
        let span = DaySpan::new(start, end).unwrap();
        let keys: Vec<String> = StanceLabel::ALL.iter().map(|l| l.as_str().to_string()).collect();
        let series = TimelineSeries::from_events(events, &keys, span, &tz).unwrap();
        prop_assert_eq!(series.total(), offsets.len() as u64);
        prop_assert_eq!(series.buckets().len(), span.days());
        for w in series.buckets().windows(2) {
            prop_assert_eq!(w[1].date, w[0].date.succ_opt().unwrap());
        }
        prop_assert_eq!(series.buckets().first().unwrap().date, start);
        prop_assert_eq!(series.buckets().last().unwrap().date, end);
        for b in series.buckets() {
            let sum: f64 = keys.iter().map(|k| b.proportion(k)).sum();
            if b.total() > 0 {
                prop_assert!((sum - 1.0).abs() <= 1e-12);
            } else {
                prop_assert_eq!(sum, 0.0);
            }
        }
    }

    #[test]
    fn time_window_partitions(minutes in prop::collection::vec(0i64..40 * 24 * 60, 0..40), a in 0i64..40 * 24 * 60, len in 0i64..20 * 24 * 60) {
        let base = Utc.with_ymd_and_hms(2022, 11, 10, 0, 0, 0).unwrap();
        let posts: Vec<Post> = minutes
            .iter()
            .enumerate()
            .map(|(i, &m)| Post::new(i.to_string(), base + Duration::minutes(m), "de", "one love"))
            .collect();
        let corpus = Corpus::from_posts(posts).unwrap();
        let (from, to) = (base + Duration::minutes(a), base + Duration::minutes(a + len));
        let inside = corpus.time_window(from, to).unwrap();
        let outside = corpus.iter().filter(|p| p.created_at < from || p.created_at >= to).count();
        prop_assert_eq!(inside.len() + outside, corpus.len());
    }

    #[test]
    fn onelove_subset_is_idempotent(texts in prop::collection::vec(prop::sample::select(&["one love", "One  Love binde", "#OneLove", "onelove", "one-love", "gelbe karte", "one\tlove", "lovely one"][..]), 0..20)) {
        let posts: Vec<Post> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Post::new(i.to_string(), Utc.with_ymd_and_hms(2022, 11, 21, 0, 0, 0).unwrap(), "de", *t))
            .collect();
        let corpus = Corpus::from_posts(posts).unwrap();
        let once = corpus.select_onelove_subset();
        let twice = once.select_onelove_subset();
        prop_assert_eq!(once.posts(), twice.posts());
    }

    #[test]
    fn jsonl_round_trip(texts in prop::collection::vec("\\PC{0,40}", 1..10), flags in prop::collection::vec(any::<(bool, bool, bool)>(), 10)) {
        let posts: Vec<Post> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut p = Post::new(format!("{}", 1000 + i), Utc.with_ymd_and_hms(2022, 11, 21, 12, 30, i as u32).unwrap(), "de", t.clone());
                (p.is_retweet, p.is_reply, p.is_quote) = flags[i];
                p
            })
            .collect();
        let corpus = Corpus::from_posts(posts).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = Corpus::read_jsonl(&buf[..]).unwrap();
        prop_assert_eq!(back.posts(), corpus.posts());

        let mut ids = Vec::new();
        corpus.write_dehydrated(&mut ids).unwrap();
        let rejoined: Vec<&Post> = String::from_utf8(ids).unwrap().lines().filter_map(|id| corpus.get(id)).collect();
        prop_assert_eq!(rejoined.len(), corpus.len());
    }

    #[test]
    fn constrained_mock_answers_with_a_label_string(id in "[0-9]{1,12}", variant in prop::sample::select(&PromptVariant::ALL[..])) {
        let spec = PromptSpec::variant(PromptTemplate::bundled(), variant);
        let backend = MockBackend::new(5);
        let p = Post::new(id, Utc.with_ymd_and_hms(2022, 11, 21, 0, 0, 0).unwrap(), "de", "one love binde");
        let t = classify_post(&p, &spec, &backend, &ClassifyOptions::default()).unwrap();
        prop_assert!(spec.label_strings.contains(&t.raw_decision));
        prop_assert!(!t.parse_fallback);
        prop_assert_eq!(t.translation.is_some(), spec.use_translation);
        prop_assert_eq!(t.reasoning.is_some(), spec.use_cot);
        prop_assert_eq!(t.prompt_rendered.contains("English translation:"), spec.use_translation);
    }
}

#[test]
fn eval_is_pure() {
    let q = parse_query(&read(&crate_dir().join("queries/worldcup_de.txt"))).unwrap();
    let table = filter_truth_table();
    let first: Vec<bool> = table.iter().map(|(p, _)| eval_query(&q, p)).collect();
    for _ in 0..10_000 / table.len() {
        let again: Vec<bool> = table.iter().map(|(p, _)| eval_query(&q, p)).collect();
        assert_eq!(again, first);
    }
}

#[test]
fn ctfidf_is_monotone_in_class_tf() {
    use stancescope::topics::ClassTfIdf;
    // Move occurrences of `x` from class 1 into class 0 one at a time.
    // tf(x) and the average class length stay fixed.
    let mut prev = -1.0;
    for k in 0..=4usize {
        let mut docs: Vec<Vec<String>> = Vec::new();
        let mut classes = Vec::new();
        for i in 0..4 {
            docs.push(vec![if i < k { "x" } else { "y" }.to_string()]);
            classes.push(0);
            docs.push(vec![if i < k { "y" } else { "x" }.to_string()]);
            classes.push(1);
        }
        let vocab = build_vocabulary(&[vec!["x"], vec!["y"]], &StopwordList::empty(), 1);
        let counts = count_vectorize(&docs, &vocab);
        let m = ClassTfIdf::fit(&classes, &counts);
        assert_eq!(m.avg_class_len(), 4.0);
        let s = m.score(0, vocab.get("x").unwrap());
        assert!(s >= 0.0 && s > prev, "k={k} score {s} after {prev}");
        prev = s;
    }
}
