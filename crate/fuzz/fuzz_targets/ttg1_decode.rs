#![no_main]
use g2lab::timetag::{decode, encode};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = decode(data) {
        // anything accepted must re-encode to the same bytes
        assert_eq!(encode(&s), data);
    }
});
