#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::harness::ExperimentReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = ExperimentReport::from_json(text) {
        let _ = r.to_markdown();
        let _ = r.to_csv();
    }
});
