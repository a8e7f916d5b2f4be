#![no_main]
use g2lab::estimators::fit_efficiency;
use g2lab::pipeline::{format_count_histogram, parse_count_histogram};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(h) = parse_count_histogram(text) else {
        return;
    };
    assert_eq!(
        parse_count_histogram(&format_count_histogram(&h)).unwrap(),
        h
    );
    let _ = fit_efficiency(&h, 0.995);
});
