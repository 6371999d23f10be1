#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::dataio::{arff_to_csv, parse_arff_row, read_arff_header};

fuzz_target!(|data: &[u8]| {
    let mut r = data;
    if let Ok(header) = read_arff_header(&mut r) {
        if let Ok(rest) = std::str::from_utf8(r) {
            for line in rest.lines() {
                if let Ok(cells) = parse_arff_row(line, &header) {
                    assert_eq!(cells.len(), header.attributes.len());
                }
            }
        }
    }
    let _ = arff_to_csv(data, std::io::sink(), |_, v| v.to_string());
});
