#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(entry) = dtinterview_core::report::parse_score_output(text) {
            assert!(entry.score <= dtinterview_core::report::MAX_SCORE);
        }
    }
});
