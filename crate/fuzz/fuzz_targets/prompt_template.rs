#![no_main]
use libfuzzer_sys::fuzz_target;
use stancescope::stance::{PriorOutputs, PromptSpec, PromptTemplate, Stage};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = PromptTemplate::parse(text) {
        let spec = PromptSpec::full(t);
        let prior = PriorOutputs {
            translation: Some("t".into()),
            reasoning: Some("r".into()),
        };
        for stage in spec.stages() {
            let _ = spec.build_prompt("post", stage, &prior);
        }
        let _ = spec.render_flat("post", Stage::Decision, &prior);
    }
});
