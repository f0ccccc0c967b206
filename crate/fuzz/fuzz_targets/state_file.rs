#![no_main]

use libfuzzer_sys::fuzz_target;
use tensiform::io::{parse_state_file, state_report};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(state) = parse_state_file(text) {
        let _ = state_report(&state);
    }
});
