#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::topics::ClusterAssignment;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = ClusterAssignment::read_csv(data) {
        let mut out = Vec::new();
        a.write_csv(&mut out).unwrap();
        let back = ClusterAssignment::read_csv(&out[..]).unwrap();
        assert_eq!(back.topics(), a.topics());
    }
});
