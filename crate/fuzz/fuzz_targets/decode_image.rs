#![no_main]

use libfuzzer_sys::fuzz_target;
use smn_core::signal::{decode_image, decode_png, encode_png};

fuzz_target!(|data: &[u8]| {
    let Ok(img) = decode_image(data) else {
        return;
    };
    let (w, h, c) = img.shape();
    assert_eq!(img.pixels().len(), w * h * c);
    // anything we accept must survive our own encoder
    let again = decode_png(&encode_png(&img).unwrap()).unwrap();
    assert_eq!(again, img);
});
