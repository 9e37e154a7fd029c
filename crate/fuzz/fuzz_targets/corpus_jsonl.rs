#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::Corpus;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = Corpus::read_jsonl(data) {
        let mut out = Vec::new();
        corpus.write_jsonl(&mut out).unwrap();
        let back = Corpus::read_jsonl(&out[..]).expect("written corpus reloads");
        assert_eq!(back.posts(), corpus.posts());
    }
});
