#![no_main]

use coplan::risk::parse_penalties;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = parse_penalties(text) {
        assert!(map.values().all(|v| v.is_finite() && *v >= 0.0));
    }
});
