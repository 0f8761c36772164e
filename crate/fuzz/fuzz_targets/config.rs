#![no_main]

use coplan::experiment::ConfigDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = ConfigDocument::parse(text, &[]) {
        let _ = doc.config.hash();
        let _ = doc.config.expand();
    }
});
