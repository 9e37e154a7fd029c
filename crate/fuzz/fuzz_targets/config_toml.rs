#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::pipeline::PipelineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = PipelineConfig::parse(text, std::path::Path::new(".")) {
        let _ = cfg.hash();
        let _ = cfg.validate();
    }
});
