#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::corpus::{AnnotationScheme, AnnotationSet};
use stancescope::Corpus;

const POSTS: &str = r#"{"id":"1","created_at":"2022-11-21T18:00:00Z","lang":"de","text":"one love","is_retweet":false,"is_reply":false,"is_quote":false}
{"id":"2","created_at":"2022-11-22T18:00:00Z","lang":"de","text":"onelove binde","is_retweet":false,"is_reply":false,"is_quote":false}
{"id":"3","created_at":"2022-11-23T18:00:00Z","lang":"de","text":"gelbe karte","is_retweet":false,"is_reply":false,"is_quote":false}
"#;

fuzz_target!(|data: &[u8]| {
    let corpus = Corpus::read_jsonl(POSTS.as_bytes()).expect("seed posts load");
    for scheme in [AnnotationScheme::Stance, AnnotationScheme::Topic] {
        if let Ok(set) = AnnotationSet::read_csv(data, scheme, &corpus) {
            let _ = set.counts();
            let _ = set.stance_gold();
        }
    }
});
