#![no_main]

use libfuzzer_sys::fuzz_target;
use tensiform::io::SolveRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = serde_json::from_slice::<SolveRequest>(data) {
        let _ = req.options.validate();
        if let Ok(model) = req.model.to_model() {
            assert!(model.validate().is_empty());
        }
    }
});
