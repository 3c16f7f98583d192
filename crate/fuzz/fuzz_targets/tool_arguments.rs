#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(category) = dtinterview_core::orchestrator::parse_retrieve_arguments(text) {
            assert!(!category.trim().is_empty());
        }
    }
});
