#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::stance::read_shots_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_shots_csv(data);
});
