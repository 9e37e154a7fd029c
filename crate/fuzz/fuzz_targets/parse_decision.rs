#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::stance::parse_decision;
use stancescope::StanceLabel;

fuzz_target!(|data: &[u8]| {
    let raw = String::from_utf8_lossy(data);
    let labels = StanceLabel::decision_strings();
    let (label, fallback) = parse_decision(&raw, &labels);
    if fallback {
        assert_eq!(label, StanceLabel::Neutral);
    }
});
