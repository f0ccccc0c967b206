#![no_main]

use libfuzzer_sys::fuzz_target;
use tensiform::io::parse_functional_list;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(list) = parse_functional_list(text) {
        assert!(!list.is_empty());
        assert!(list.iter().all(|f| f.parameter_problems().is_empty()));
    }
});
