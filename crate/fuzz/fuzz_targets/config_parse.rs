#![no_main]
use g2lab::pipeline::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            let again =
                ExperimentConfig::from_json(&cfg.canonical_json()).expect("canonical form parses");
            assert_eq!(again.canonical_json(), cfg.canonical_json());
            let _ = cfg.config_hash();
        }
    }
});
