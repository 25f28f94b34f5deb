#![no_main]

use franson_core::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = PipelineConfig::from_json(text) {
        let again = PipelineConfig::from_json(&cfg.to_json().to_string()).unwrap();
        assert_eq!(again.to_json(), cfg.to_json());
    }
});
