#![no_main]

use coplan::simulator::{export_jsonl, import_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((trace, indicators)) = import_jsonl(text) {
        let written = export_jsonl(&trace, indicators.as_ref());
        let (again, _) = import_jsonl(&written).expect("exported trace parses");
        assert_eq!(export_jsonl(&again, indicators.as_ref()), written);
    }
});
