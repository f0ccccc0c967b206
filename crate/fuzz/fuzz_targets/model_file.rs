#![no_main]

use libfuzzer_sys::fuzz_target;
use tensiform::io::{model_to_json, parse_model};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = parse_model(text) {
        assert!(model.validate().is_empty());
        let again = parse_model(&model_to_json(&model)).expect("serialized model parses");
        assert_eq!(again, model);
    }
});
