#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::distill::SampleWeights;

fuzz_target!(|data: &[u8]| {
    if let Ok((w, _)) = SampleWeights::read_csv(data) {
        assert!(w.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
});
