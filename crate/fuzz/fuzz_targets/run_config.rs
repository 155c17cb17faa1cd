#![no_main]

use libfuzzer_sys::fuzz_target;
use nlsmod_cli::config::Defaults;
use nlsmod_cli::{ConfigFile, RunConfig};

const DEFAULTS: Defaults = Defaults { t_end: 1.0, dt: 1e-3, record_every: 0.1 };

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(c) = ConfigFile::parse(s) else { return };
    let Ok(r) = RunConfig::resolve(c, &DEFAULTS, None, None) else { return };
    // The resolved form written to report metadata must reproduce itself.
    let json = serde_json::to_string(&r).unwrap();
    let again = RunConfig::resolve(ConfigFile::parse(&json).unwrap(), &DEFAULTS, None, None).unwrap();
    assert_eq!(again, r);
});
