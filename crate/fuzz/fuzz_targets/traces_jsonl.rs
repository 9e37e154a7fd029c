#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::stance::{read_traces, write_traces};

fuzz_target!(|data: &[u8]| {
    if let Ok(traces) = read_traces(data, "fuzz") {
        let mut out = Vec::new();
        write_traces(&traces, &mut out).unwrap();
        assert_eq!(read_traces(&out[..], "fuzz").unwrap(), traces);
    }
});
