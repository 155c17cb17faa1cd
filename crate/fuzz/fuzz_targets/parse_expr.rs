#![no_main]

use libfuzzer_sys::fuzz_target;
use nlsmod::text::{format_expr, parse_expr};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(e) = parse_expr(s) else { return };
    // Printing is canonical, so a second pass must be a fixed point.
    let printed = format_expr(&e);
    let again = parse_expr(&printed).expect("printed expression parses");
    assert_eq!(again, e);
    assert_eq!(format_expr(&again), printed);
});
