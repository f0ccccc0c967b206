#![no_main]

use libfuzzer_sys::fuzz_target;
use tensiform::io::parse_q_file;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(q) = parse_q_file(text) {
        assert!(q.iter().all(|x| x.is_finite()));
    }
});
