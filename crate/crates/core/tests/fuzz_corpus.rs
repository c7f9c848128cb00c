//! Replays the fuzz seed corpus so every seed is decoded on each test run.

use std::fs;
use std::path::PathBuf;

use smn_core::ablation::AblationConfig;
use smn_core::checkpoint::{decode_checkpoint, encode_checkpoint};
use smn_core::config::{normalize, parse_config};
use smn_core::signal::{decode_image, decode_png, decode_ppm, encode_png, encode_ppm};
use smn_core::{ModelConfig, TrainConfig};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn image_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("decode_image") {
        if let Ok(img) = decode_image(&bytes) {
            accepted += 1;
            assert_eq!(decode_png(&encode_png(&img).unwrap()).unwrap(), img, "{name}");
        }
    }
    assert!(accepted >= 2);
}

#[test]
fn ppm_seeds() {
    for (name, bytes) in seeds("decode_ppm") {
        match decode_ppm(&bytes) {
            Ok(img) => assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img, "{name}"),
            Err(_) => assert_eq!(name, "deep.ppm"),
        }
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, bytes) in seeds("decode_checkpoint") {
        let model = decode_checkpoint(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(encode_checkpoint(&model), bytes, "{name}");
        for cut in [0, 8, 12, bytes.len() / 2, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut]).is_err(), "{name} cut at {cut}");
        }
    }
}

#[test]
fn config_seeds() {
    for (name, bytes) in seeds("parse_config") {
        let text = String::from_utf8(bytes).unwrap();
        let model = normalize::<ModelConfig>(&text);
        let train = parse_config::<TrainConfig>(&text);
        if name == "unknown_field.json" {
            assert!(model.is_err() && train.is_err());
            continue;
        }
        assert!(model.is_ok() || train.is_ok(), "{name}");
        if let Ok(canon) = model {
            assert_eq!(normalize::<ModelConfig>(&canon).unwrap(), canon);
        }
        let _ = serde_json::from_str::<AblationConfig>(&text);
    }
}

#[test]
fn oversized_config_in_tiny_checkpoint_is_refused() {
    let cfg = ModelConfig {
        num_modules: 64,
        ..ModelConfig::smn(4096)
    };
    let json = serde_json::to_vec(&cfg).unwrap();
    let mut bytes = smn_core::checkpoint::MAGIC.to_vec();
    bytes.extend_from_slice(&smn_core::checkpoint::VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&0u32.to_le_bytes());
    assert!(decode_checkpoint(&bytes).is_err());
}
