#![no_main]

use franson_core::tags::TagSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(tags) = TagSet::parse_qtt(data) else {
        return;
    };
    // anything accepted must survive a write/read cycle unchanged
    let mut buf = Vec::new();
    tags.write_qtt(&mut buf).unwrap();
    assert_eq!(TagSet::parse_qtt(&buf).unwrap(), tags);
});
