#![no_main]

use std::collections::BTreeMap;

use libfuzzer_sys::fuzz_target;
use tensiform::fixtures::{FixtureSpec, FIXTURE_NAMES};

// Input: fixture name on the first line, then `key=value` lines.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut lines = text.lines();
    let Some(name) = lines.next() else { return };
    let mut params = BTreeMap::new();
    for line in lines {
        let Some((k, v)) = line.split_once('=') else { return };
        let Ok(v) = v.parse::<f64>() else { return };
        params.insert(k.to_string(), v);
    }
    if let Ok(spec) = FixtureSpec::with_params(name, &params) {
        assert!(FIXTURE_NAMES.contains(&spec.name()));
    }
});
