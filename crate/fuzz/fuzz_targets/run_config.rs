#![no_main]
use libfuzzer_sys::fuzz_target;

use clue_experiments::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = clue_core::config::parse_assignments(text);
    if let Ok(cfg) = RunConfig::from_text(text) {
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
});
