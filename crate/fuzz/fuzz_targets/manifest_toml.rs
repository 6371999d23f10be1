#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::dataio::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = Manifest::from_toml(text) {
        let again = Manifest::from_toml(&m.to_toml()).expect("re-parse");
        assert_eq!(m, again);
    }
});
