#![no_main]

use libfuzzer_sys::fuzz_target;

use dtinterview_core::store::{decode_session, encode_session};

fuzz_target!(|data: &[u8]| {
    if let Ok(session) = decode_session(data) {
        // anything accepted re-encodes canonically and decodes to the same value
        let bytes = encode_session(&session);
        assert_eq!(decode_session(&bytes).as_ref(), Ok(&session));
    }
});
