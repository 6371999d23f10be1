#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::dataio::{load_csv_reader, ColumnSpec, TargetKindSpec, TargetSpec};

fuzz_target!(|data: &[u8]| {
    let schema = [ColumnSpec::numeric("a"), ColumnSpec::categorical("b", None)];
    let target = TargetSpec {
        column: "label".into(),
        kind: TargetKindSpec::Classification { classes: None },
    };
    if let Ok(loaded) = load_csv_reader(data, &schema, Some(&target)) {
        assert!(loaded.dataset.features().iter().all(|v| v.is_finite()));
    }
});
