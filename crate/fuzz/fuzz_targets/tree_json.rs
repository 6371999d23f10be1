#![no_main]

use libfuzzer_sys::fuzz_target;
use tabdistill::tree::StudentTree;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(tree) = StudentTree::from_json(text) {
        let _ = tree.depth();
        let _ = tree.n_leaves();
    }
});
