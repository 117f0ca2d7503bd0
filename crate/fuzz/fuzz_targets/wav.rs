#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(w) = clue_audio::wav::parse_wav(data) {
        // whatever decodes must survive a re-encode
        let again = clue_audio::wav::parse_wav(&clue_audio::wav::encode_wav(&w));
        assert!(again.is_ok());
    }
});
