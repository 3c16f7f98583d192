#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sections) = dtinterview_core::report::parse_report_output(text) {
            assert!(sections.current_practices.iter().all(|f| !f.trim().is_empty()));
        }
    }
});
