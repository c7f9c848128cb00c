#![no_main]

use libfuzzer_sys::fuzz_target;
use smn_core::ablation::AblationConfig;
use smn_core::config::{normalize, parse_config, to_json};
use smn_core::model::ModelConfig;
use smn_core::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(canon) = normalize::<ModelConfig>(text) {
        assert_eq!(normalize::<ModelConfig>(&canon).unwrap(), canon);
    }
    if let Ok(cfg) = parse_config::<TrainConfig>(text) {
        assert_eq!(parse_config::<TrainConfig>(&to_json(&cfg)).unwrap(), cfg);
    }
    let _ = serde_json::from_str::<AblationConfig>(text);
});
