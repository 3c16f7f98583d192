#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = dtinterview_core::transcription::parse_transcription_response(data);
});
