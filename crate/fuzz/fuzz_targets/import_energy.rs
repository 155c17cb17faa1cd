#![no_main]

use libfuzzer_sys::fuzz_target;
use nlsmod::document::{export_energy_json, import_energy_json, peek_header};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = peek_header(s);
    let Ok(e) = import_energy_json(s) else { return };
    let out = export_energy_json(&e);
    assert_eq!(import_energy_json(&out).expect("exported document imports"), e);
});
