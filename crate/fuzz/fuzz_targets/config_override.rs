//! Arbitrary `--set key=value` lines against the default config. A rejected
//! override must leave the config untouched.

#![no_main]

use franson_core::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let mut cfg = PipelineConfig::default();
    for line in text.lines().take(8) {
        let before = cfg.clone();
        if cfg.apply_override(line).is_err() {
            assert_eq!(cfg, before);
        }
    }
});
