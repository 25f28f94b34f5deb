#![no_main]

use franson_core::tags::TagSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(tags) = TagSet::read_csv(data) else {
        return;
    };
    let mut buf = Vec::new();
    tags.write_csv(&mut buf).unwrap();
    assert_eq!(TagSet::read_csv(buf.as_slice()).unwrap(), tags);
});
