#![no_main]

use libfuzzer_sys::fuzz_target;
use smn_core::checkpoint::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    let Ok(model) = decode_checkpoint(data) else {
        return;
    };
    // NaN weights compare unequal, so check the bytes rather than the model
    let bytes = encode_checkpoint(&model);
    let back = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
    assert_eq!(encode_checkpoint(&back), bytes);
});
