#![no_main]

use libfuzzer_sys::fuzz_target;
use qzlab::scenario::parse_scenario;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = parse_scenario(text) {
        // Accepted scenarios must survive conversion and serialization.
        let _ = serde_json::to_string(&s);
        let _ = s.into_sweep();
    }
});
