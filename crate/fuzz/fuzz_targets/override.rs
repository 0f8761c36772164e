#![no_main]

use coplan::experiment::{ConfigDocument, Override};
use libfuzzer_sys::fuzz_target;

const BASE: &str = include_str!("../../configs/reference.toml");

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let overrides: Vec<Override> = text.lines().filter_map(|l| l.parse().ok()).collect();
    let _ = ConfigDocument::parse(BASE, &overrides);
});
