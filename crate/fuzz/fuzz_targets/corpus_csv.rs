#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::Corpus;

fuzz_target!(|data: &[u8]| {
    let _ = Corpus::read_csv(data);
});
