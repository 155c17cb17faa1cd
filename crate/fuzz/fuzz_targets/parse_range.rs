#![no_main]

use libfuzzer_sys::fuzz_target;
use nlsmod_cli::parse_range;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_range(s, 2, 64) {
        assert!(v.iter().all(|x| (2..=64).contains(x)));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
});
