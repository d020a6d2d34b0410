#![no_main]
use dama_core::experiment::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ExperimentConfig::from_json_str(text) {
        let json = serde_json::to_string(&config).expect("valid config serializes");
        let back = ExperimentConfig::from_json_str(&json).expect("serialized config must parse");
        assert_eq!(back, config);
        assert_eq!(back.hash(), config.hash());
    }
});
