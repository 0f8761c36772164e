#![no_main]

use coplan::solver::lp_format;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mip) = lp_format::parse(text) {
        // Whatever parses must survive a write/parse cycle unchanged.
        let written = lp_format::write(&mip);
        let again = lp_format::parse(&written).expect("written LP text parses");
        assert_eq!(lp_format::write(&again), written);
    }
});
