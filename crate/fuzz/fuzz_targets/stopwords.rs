#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::textprep::{build_vocabulary, tokenize, StopwordList};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(list) = StopwordList::parse(text) {
        let docs = vec![tokenize(text)];
        let vocab = build_vocabulary(&docs, &list, 1);
        for g in vocab.grams() {
            assert!(g.split(' ').all(|t| !list.contains(t)));
        }
    }
});
