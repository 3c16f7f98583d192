#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(catalog) = dtinterview_core::catalog::load_catalog(text) {
            // a loaded catalog resolves each of its own display names
            for c in &catalog.categories {
                assert_eq!(catalog.resolve_category(&c.display_name).as_ref(), Ok(&c.id));
            }
        }
    }
});
