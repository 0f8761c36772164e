#![no_main]

use std::collections::BTreeMap;

use coplan::experiment::{import_outcomes, parse_results_csv, write_results_csv, Actor};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_results_csv(text) {
        let written = write_results_csv(&rows);
        assert_eq!(parse_results_csv(&written).expect("written table parses").len(), rows.len());
    }
    let none = BTreeMap::new();
    let _ = import_outcomes(text, Actor::Supplier, &none);
    let _ = import_outcomes(text, Actor::Customer, &none);
});
