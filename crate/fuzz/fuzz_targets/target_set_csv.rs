#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::distill::TargetSet;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TargetSet::read_csv(data) {
        let again = TargetSet::read_csv(t.to_csv().as_bytes()).expect("round trip");
        assert_eq!(t.kind(), again.kind());
        assert_eq!(t.n_rows(), again.n_rows());
    }
});
