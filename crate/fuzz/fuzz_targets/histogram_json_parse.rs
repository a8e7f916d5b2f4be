#![no_main]
use g2lab::correlator::HistogramDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(doc) = HistogramDocument::from_json(text) {
            let h = doc.histogram().expect("validated documents convert");
            let _ = h.to_csv();
        }
    }
});
