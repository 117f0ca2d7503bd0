#![no_main]
use libfuzzer_sys::fuzz_target;

use clue_data::ppm::{encode_ppm, parse_ppm};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_ppm(data) {
        let bytes = encode_ppm(&img).expect("decoded image encodes");
        assert_eq!(parse_ppm(&bytes).unwrap().shape(), img.shape());
    }
});
